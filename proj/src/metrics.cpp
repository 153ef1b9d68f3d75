#include "clover/metrics.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

namespace clover {

std::vector<ScoredRewrite> valid_bid_filter(std::span<const ScoredRewrite> rewrites,
                                            const KeywordTrie& trie) {
    std::vector<ScoredRewrite> out;
    for (const auto& r : rewrites)
        if (trie.contains(r.rewrite)) out.push_back(r);
    return out;
}

std::vector<ScoredRewrite> unique_filter(std::span<const ScoredRewrite> rewrites,
                                         const ProductionMap& map, const TokenSeq& query) {
    std::vector<ScoredRewrite> out;
    for (const auto& r : rewrites)
        if (!map.has_keyword(query, r.rewrite)) out.push_back(r);
    return out;
}

std::vector<ScoredRewrite> global_quality_filter(std::span<const ScoredRewrite> rewrites,
                                                 double tau) {
    if (tau < 0.0 || tau > 1.0) throw ConfigError("global quality threshold must be in [0, 1]");
    std::vector<ScoredRewrite> out;
    for (const auto& r : rewrites)
        if (r.quality >= tau) out.push_back(r);
    return out;
}

std::vector<ScoredRewrite> local_quality_filter(std::span<const ScoredRewrite> rewrites,
                                                const ProductionMap& map, const TokenSeq& query) {
    double threshold = map.min_quality(query);
    std::vector<ScoredRewrite> out;
    for (const auto& r : rewrites)
        if (r.quality >= threshold) out.push_back(r);
    return out;
}

std::vector<ScoredRewrite> filter_cascade(std::span<const ScoredRewrite> rewrites,
                                          const KeywordTrie& trie, const ProductionMap& map,
                                          const TokenSeq& query, double tau) {
    std::vector<ScoredRewrite> kept = valid_bid_filter(rewrites, trie);
    kept = unique_filter(kept, map, query);
    kept = global_quality_filter(kept, tau);
    return local_quality_filter(kept, map, query);
}

double unique_hq_count(std::span<const std::vector<ScoredRewrite>> per_query) {
    if (per_query.empty()) throw DataError("unique_hq_count needs at least one query");
    double total = 0.0;
    for (const auto& set : per_query) total += static_cast<double>(set.size());
    return total / static_cast<double>(per_query.size());
}

double distinct_ngram(std::span<const std::vector<TokenSeq>> per_query_rewrites, int n) {
    if (n < 1) throw ConfigError("distinct_ngram needs n >= 1");
    double ratio_sum = 0.0;
    std::size_t contributing = 0;
    for (const auto& rewrites : per_query_rewrites) {
        std::size_t tokens = 0;
        std::set<std::vector<TokenId>> ngrams;
        for (const TokenSeq& r : rewrites) {
            auto content = r.content();
            tokens += content.size();
            if (static_cast<int>(content.size()) >= n)
                for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= content.size(); ++i)
                    ngrams.insert(std::vector<TokenId>(content.begin() + static_cast<std::ptrdiff_t>(i),
                                                       content.begin() + static_cast<std::ptrdiff_t>(i) +
                                                           n));
        }
        if (tokens == 0) continue;
        ratio_sum += static_cast<double>(ngrams.size()) / static_cast<double>(tokens);
        ++contributing;
    }
    if (contributing == 0) throw DataError("distinct_ngram: all rewrites are empty");
    return ratio_sum / static_cast<double>(contributing);
}

double distinct_ngram_scored(std::span<const std::vector<ScoredRewrite>> per_query, int n) {
    std::vector<std::vector<TokenSeq>> plain(per_query.size());
    for (std::size_t i = 0; i < per_query.size(); ++i)
        for (const auto& r : per_query[i]) plain[i].push_back(r.rewrite);
    return distinct_ngram(plain, n);
}

EnsembleReport ensemble(std::span<const EnsembleStage> stages, std::span<const TokenSeq> queries,
                        const ProductionMap& base) {
    EnsembleReport report;
    report.merged = base;
    for (const EnsembleStage& stage : stages) {
        if (stage.per_query.size() != queries.size())
            throw ContractError("ensemble stage " + stage.name + " is not aligned to the queries");
        StageReport sr;
        sr.name = stage.name;
        double retrieved = 0.0, net_new = 0.0;
        for (std::size_t q = 0; q < queries.size(); ++q) {
            retrieved += static_cast<double>(stage.per_query[q].size());
            for (const ScoredRewrite& r : stage.per_query[q]) {
                if (report.merged.has_keyword(queries[q], r.rewrite)) continue;
                report.merged.add(queries[q], r.rewrite, r.quality);
                report.delta.add(queries[q], r.rewrite, r.quality);
                net_new += 1.0;
            }
        }
        sr.retrieved = queries.empty() ? 0.0 : retrieved / static_cast<double>(queries.size());
        sr.net_new = queries.empty() ? 0.0 : net_new / static_cast<double>(queries.size());
        report.stages.push_back(std::move(sr));
    }
    return report;
}

void save_report(const EvalReport& report, const std::filesystem::path& file,
                 const std::string& config_hash, std::uint64_t seed) {
    nlohmann::ordered_json j;
    j["unique_hq_per_query"] = report.unique_hq_per_query;
    j["distinct1"] = report.distinct1;
    j["distinct2"] = report.distinct2;
    nlohmann::ordered_json stages = nlohmann::ordered_json::array();
    for (const StageReport& s : report.ensemble.stages) {
        nlohmann::ordered_json js;
        js["stage"] = s.name;
        js["retrieved"] = s.retrieved;
        js["net_new"] = s.net_new;
        stages.push_back(std::move(js));
    }
    j["ensemble"] = std::move(stages);
    if (!config_hash.empty()) {
        j["config_hash"] = config_hash;
        j["seed"] = seed;
    }
    std::ofstream out(file, std::ios::binary);
    out << j.dump(2) << '\n';
}

}  // namespace clover

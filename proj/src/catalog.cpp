#include "clover/catalog.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include <json.hpp>

namespace clover {

KeywordTrie build_trie(const KeywordCatalog& catalog) {
    if (catalog.keywords.empty()) throw ConfigError("cannot build a trie from an empty catalog");

    // Build with ordered child maps, then freeze into parallel arrays.
    std::vector<std::map<TokenId, std::int32_t>> children(1);
    std::size_t max_depth = 0;
    for (const TokenSeq& kw : catalog.keywords) {
        if (!kw.terminated() || !kw.well_formed())
            throw ContractError("catalog keywords must be terminated token sequences");
        std::int32_t node = 0;
        for (TokenId t : kw.ids) {
            auto it = children[static_cast<std::size_t>(node)].find(t);
            if (it == children[static_cast<std::size_t>(node)].end()) {
                std::int32_t next = static_cast<std::int32_t>(children.size());
                children[static_cast<std::size_t>(node)].emplace(t, next);
                children.emplace_back();
                node = next;
            } else {
                node = it->second;
            }
        }
        max_depth = std::max(max_depth, kw.ids.size());
    }

    KeywordTrie trie;
    trie.max_depth_ = max_depth;
    trie.nodes_.resize(children.size());
    for (std::size_t i = 0; i < children.size(); ++i) {
        for (const auto& [tok, to] : children[i]) {
            trie.nodes_[i].edge_tokens.push_back(tok);
            trie.nodes_[i].edge_to.push_back(to);
        }
    }
    return trie;
}

std::int32_t KeywordTrie::walk(std::span<const TokenId> prefix) const {
    std::int32_t node = 0;
    for (TokenId t : prefix) {
        const Node& n = nodes_[static_cast<std::size_t>(node)];
        auto it = std::lower_bound(n.edge_tokens.begin(), n.edge_tokens.end(), t);
        if (it == n.edge_tokens.end() || *it != t) return -1;
        node = n.edge_to[static_cast<std::size_t>(it - n.edge_tokens.begin())];
    }
    return node;
}

std::span<const TokenId> KeywordTrie::allowed_continuations(std::span<const TokenId> prefix) const {
    std::int32_t node = walk(prefix);
    if (node < 0) throw ContractError("prefix is not a path in the keyword trie");
    return std::span<const TokenId>(nodes_[static_cast<std::size_t>(node)].edge_tokens);
}

bool KeywordTrie::contains(const TokenSeq& seq) const {
    if (!seq.terminated()) throw ContractError("contains() requires a terminated sequence");
    return walk(std::span<const TokenId>(seq.ids)) >= 0;
}

std::vector<double> constrain_distribution(std::span<const double> dist, const KeywordTrie& trie,
                                           std::span<const TokenId> prefix, MaskMode mode) {
    double total = 0.0;
    for (double p : dist) total += p;
    if (std::abs(total - 1.0) > 1e-9)
        throw ContractError("distribution must sum to 1 before constraining");

    std::span<const TokenId> allowed = trie.allowed_continuations(prefix);
    std::vector<double> out(dist.size(), 0.0);
    double mass = 0.0;
    for (TokenId t : allowed) {
        out[static_cast<std::size_t>(t)] = dist[static_cast<std::size_t>(t)];
        mass += dist[static_cast<std::size_t>(t)];
    }
    if (mass <= 0.0) {
        if (mode == MaskMode::strict)
            throw ContractError("all allowed continuations have zero mass");
        double u = 1.0 / static_cast<double>(allowed.size());
        for (TokenId t : allowed) out[static_cast<std::size_t>(t)] = u;
        return out;
    }
    for (TokenId t : allowed) out[static_cast<std::size_t>(t)] /= mass;
    return out;
}

void ProductionMap::add(const TokenSeq& query, const TokenSeq& keyword, double score) {
    auto& list = entries_[query];
    auto it = std::lower_bound(list.begin(), list.end(), keyword,
                               [](const ScoredKeyword& a, const TokenSeq& b) { return a.keyword < b; });
    if (it != list.end() && it->keyword == keyword) {
        it->score = score;
        return;
    }
    list.insert(it, ScoredKeyword{keyword, score});
}

bool ProductionMap::has_keyword(const TokenSeq& query, const TokenSeq& keyword) const {
    auto it = entries_.find(query);
    if (it == entries_.end()) return false;
    auto pos = std::lower_bound(it->second.begin(), it->second.end(), keyword,
                                [](const ScoredKeyword& a, const TokenSeq& b) { return a.keyword < b; });
    return pos != it->second.end() && pos->keyword == keyword;
}

std::span<const ScoredKeyword> ProductionMap::keywords_for(const TokenSeq& query) const {
    auto it = entries_.find(query);
    if (it == entries_.end()) return {};
    return std::span<const ScoredKeyword>(it->second);
}

double ProductionMap::min_quality(const TokenSeq& query) const {
    auto it = entries_.find(query);
    if (it == entries_.end() || it->second.empty()) return 0.0;
    double m = it->second.front().score;
    for (const auto& sk : it->second) m = std::min(m, sk.score);
    return m;
}

void save_catalog(const KeywordCatalog& catalog, const Vocab& vocab,
                  const std::filesystem::path& file) {
    std::ofstream out(file, std::ios::binary);
    for (const auto& k : catalog.keywords) out << detokenize(k, vocab) << '\n';
}

KeywordCatalog load_catalog(const std::filesystem::path& file, const Vocab& vocab) {
    std::ifstream in(file);
    if (!in) throw DataError("cannot open catalog file " + file.string());
    KeywordCatalog catalog;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) catalog.keywords.push_back(tokenize(line, vocab));
    return catalog;
}

void save_production_map(const ProductionMap& map, const Vocab& vocab,
                         const std::filesystem::path& file) {
    std::ofstream out(file, std::ios::binary);
    for (const auto& [query, keywords] : map.entries()) {
        nlohmann::ordered_json j;
        j["query"] = detokenize(query, vocab);
        nlohmann::ordered_json ks = nlohmann::ordered_json::array();
        for (const auto& sk : keywords) {
            char score[32];
            std::snprintf(score, sizeof(score), "%.6f", sk.score);
            nlohmann::ordered_json jk;
            jk["k"] = detokenize(sk.keyword, vocab);
            jk["score"] = nlohmann::json::parse(score);  // numeric, 6 decimals
            ks.push_back(jk);
        }
        j["keywords"] = std::move(ks);
        out << j.dump() << '\n';
    }
}

ProductionMap load_production_map(const std::filesystem::path& file, const Vocab& vocab) {
    std::ifstream in(file);
    if (!in) throw DataError("cannot open production map " + file.string());
    ProductionMap map;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        TokenSeq query = tokenize(j["query"].get<std::string>(), vocab);
        for (const auto& jk : j["keywords"])
            map.add(query, tokenize(jk["k"].get<std::string>(), vocab), jk["score"].get<double>());
    }
    return map;
}

}  // namespace clover

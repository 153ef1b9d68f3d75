#include "clover/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <json.hpp>

#include "clover/parallel.hpp"
#include "clover/rng.hpp"

namespace clover {

void DecoderSpec::validate() const {
    if (beam_size < 1) throw ConfigError("beam_size must be >= 1");
    if (diversity_strength < 0.0) throw ConfigError("diversity_strength must be >= 0");
    if (max_len < 1) throw ConfigError("max_len must be >= 1");
    if (algorithm == DecodeAlgo::sample && !seed.has_value())
        throw ConfigError("sampling requires a seed");
}

namespace {

struct Candidate {
    int parent = -1;
    TokenId token = 0;
    double score = 0.0;      // S: cumulative log-prob including this token
    double penalized = 0.0;  // S-tilde used for selection
    int rank = 0;            // 1-based sibling rank
};

// Indices of expansions ordered by score descending, ties by token id.
std::vector<std::size_t> rank_order(std::span<const std::pair<TokenId, double>> expansions) {
    std::vector<std::size_t> order(expansions.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&expansions](std::size_t a, std::size_t b) {
        if (expansions[a].second != expansions[b].second)
            return expansions[a].second > expansions[b].second;
        return expansions[a].first < expansions[b].first;
    });
    return order;
}

// Selection order: penalized score descending, then parent, then token id.
bool candidate_before(const Candidate& a, const Candidate& b) {
    if (a.penalized != b.penalized) return a.penalized > b.penalized;
    if (a.parent != b.parent) return a.parent < b.parent;
    return a.token < b.token;
}

// Keep the best unpenalized score per sequence, then order by score
// descending (ties by token ids) for the final result.
std::vector<Hypothesis> finalize(std::vector<Hypothesis> results) {
    std::map<TokenSeq, Hypothesis> best;
    for (auto& h : results) {
        auto it = best.find(h.tokens);
        if (it == best.end() || h.score > it->second.score) best[h.tokens] = std::move(h);
    }
    std::vector<Hypothesis> out;
    out.reserve(best.size());
    for (auto& [seq, h] : best) out.push_back(std::move(h));
    std::stable_sort(out.begin(), out.end(), [](const Hypothesis& a, const Hypothesis& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.tokens < b.tokens;
    });
    return out;
}

DecodeResult beam_core(const PolicyParams& params, const TokenSeq& query, const DecoderSpec& spec,
                       bool diverse) {
    spec.validate();
    const int B = spec.beam_size;
    const int V = params.dims.vocab;
    const int max_len = std::min(spec.max_len, params.dims.max_len);
    std::vector<double> ctx = encode_query(params, query);

    std::vector<Hypothesis> active(1);  // the empty prefix
    std::vector<Hypothesis> results;
    bool saw_unterminated_cutoff = false;

    std::vector<TokenId> all_tokens;
    if (spec.trie == nullptr) {
        all_tokens.resize(static_cast<std::size_t>(V));
        for (int v = 0; v < V; ++v) all_tokens[static_cast<std::size_t>(v)] = v;
    }

    for (int step = 0; step < max_len; ++step) {
        if (active.empty() || static_cast<int>(results.size()) >= B) break;
        const int slots = B - static_cast<int>(results.size());

        std::vector<Candidate> candidates;
        for (int ai = 0; ai < static_cast<int>(active.size()); ++ai) {
            const Hypothesis& hyp = active[static_cast<std::size_t>(ai)];
            std::vector<double> lp = step_log_probs(params, ctx, std::span<const TokenId>(hyp.tokens.ids));
            std::span<const TokenId> allowed =
                spec.trie ? spec.trie->allowed_continuations(hyp.tokens)
                          : std::span<const TokenId>(all_tokens);

            if (diverse) {
                std::vector<std::pair<TokenId, double>> expansions;
                expansions.reserve(allowed.size());
                for (TokenId t : allowed)
                    expansions.emplace_back(t, hyp.score + lp[static_cast<std::size_t>(t)]);
                std::vector<std::size_t> order = rank_order(expansions);
                for (std::size_t k = 0; k < order.size(); ++k) {
                    const auto& [token, score] = expansions[order[k]];
                    Candidate c;
                    c.parent = ai;
                    c.token = token;
                    c.score = score;
                    c.penalized = score - spec.diversity_strength * static_cast<double>(k + 1);
                    c.rank = static_cast<int>(k + 1);
                    candidates.push_back(c);
                }
            } else {
                for (TokenId t : allowed) {
                    Candidate c;
                    c.parent = ai;
                    c.token = t;
                    c.score = hyp.score + lp[static_cast<std::size_t>(t)];
                    c.penalized = c.score;
                    candidates.push_back(c);
                }
            }
        }

        std::sort(candidates.begin(), candidates.end(), candidate_before);
        if (static_cast<int>(candidates.size()) > slots)
            candidates.resize(static_cast<std::size_t>(slots));

        if (!diverse) {
            // sibling rank = position among the parent's surviving expansions
            std::map<int, int> seen;
            for (Candidate& c : candidates) c.rank = ++seen[c.parent];
        }

        std::vector<Hypothesis> next_active;
        for (const Candidate& c : candidates) {
            Hypothesis h;
            h.tokens = active[static_cast<std::size_t>(c.parent)].tokens;
            h.tokens.ids.push_back(c.token);
            h.score = c.score;
            h.penalized_score = c.penalized;
            h.sibling_rank = c.rank;
            h.parent = c.parent;
            if (c.token == kEndToken)
                results.push_back(std::move(h));
            else
                next_active.push_back(std::move(h));
        }
        if (step == max_len - 1 && !next_active.empty()) saw_unterminated_cutoff = true;
        active = std::move(next_active);
    }

    DecodeResult out;
    out.hypotheses = finalize(std::move(results));
    out.truncation_warning = out.hypotheses.empty() && saw_unterminated_cutoff;
    return out;
}

}  // namespace

std::vector<std::pair<TokenId, double>> sibling_penalized_scores(
    std::span<const std::pair<TokenId, double>> expansions, double gamma) {
    std::vector<std::size_t> order = rank_order(expansions);
    std::vector<std::pair<TokenId, double>> out(expansions.begin(), expansions.end());
    for (std::size_t k = 0; k < order.size(); ++k)
        out[order[k]].second = expansions[order[k]].second - gamma * static_cast<double>(k + 1);
    return out;
}

DecodeResult beam_search(const PolicyParams& params, const TokenSeq& query,
                         const DecoderSpec& spec) {
    return beam_core(params, query, spec, /*diverse=*/false);
}

DecodeResult diverse_sibling_search(const PolicyParams& params, const TokenSeq& query,
                                    const DecoderSpec& spec) {
    return beam_core(params, query, spec, /*diverse=*/true);
}

DecodeResult sample_sequences(const PolicyParams& params, const TokenSeq& query,
                              const DecoderSpec& spec) {
    spec.validate();
    if (!spec.seed.has_value()) throw ConfigError("sampling requires a seed");
    const int max_len = std::min(spec.max_len, params.dims.max_len);
    std::vector<double> ctx = encode_query(params, query);

    DecodeResult out;
    out.hypotheses.resize(static_cast<std::size_t>(spec.beam_size));
    for (int b = 0; b < spec.beam_size; ++b) {
        Rng rng(mix_seed({*spec.seed, hash_str64("sample"), static_cast<std::uint64_t>(b)}));
        Hypothesis h;
        for (int t = 0; t < max_len; ++t) {
            std::vector<double> lp = step_log_probs(params, ctx, std::span<const TokenId>(h.tokens.ids));
            TokenId tok;
            if (spec.trie) {
                std::vector<double> probs(lp.size());
                for (std::size_t v = 0; v < lp.size(); ++v) probs[v] = std::exp(lp[v]);
                std::vector<double> constrained = constrain_distribution(
                    probs, *spec.trie, std::span<const TokenId>(h.tokens.ids), MaskMode::decode);
                double u = rng.next_double();
                double cum = 0.0;
                tok = kEndToken;
                std::span<const TokenId> allowed = spec.trie->allowed_continuations(h.tokens);
                for (TokenId cand : allowed) {
                    cum += constrained[static_cast<std::size_t>(cand)];
                    tok = cand;
                    if (u < cum) break;
                }
            } else {
                double u = rng.next_double();
                double cum = 0.0;
                tok = static_cast<TokenId>(lp.size() - 1);
                for (std::size_t v = 0; v < lp.size(); ++v) {
                    cum += std::exp(lp[v]);
                    if (u < cum) {
                        tok = static_cast<TokenId>(v);
                        break;
                    }
                }
            }
            h.score += lp[static_cast<std::size_t>(tok)];
            h.tokens.ids.push_back(tok);
            if (tok == kEndToken) break;
        }
        if (!h.tokens.terminated()) {
            // ran out of positions: close the sequence but do not count the
            // forced end marker as an action
            h.tokens.ids.push_back(kEndToken);
            h.truncated = true;
        }
        h.penalized_score = h.score;
        out.hypotheses[static_cast<std::size_t>(b)] = std::move(h);
    }
    return out;
}

DecodeResult decode(const PolicyParams& params, const TokenSeq& query, const DecoderSpec& spec) {
    switch (spec.algorithm) {
        case DecodeAlgo::beam:
            return beam_search(params, query, spec);
        case DecodeAlgo::diverse_sibling:
            return diverse_sibling_search(params, query, spec);
        case DecodeAlgo::sample:
            return sample_sequences(params, query, spec);
    }
    throw ContractError("unknown decode algorithm");
}

std::vector<BatchDecodeEntry> batch_decode(const PolicyParams& params,
                                           std::span<const TokenSeq> queries,
                                           const DecoderSpec& spec, int threads) {
    std::vector<BatchDecodeEntry> out(queries.size());
    par::for_index(queries.size(), threads, [&](std::size_t i) {
        out[i].query = queries[i];
        out[i].result = decode(params, queries[i], spec);
    });
    return out;
}

void save_decodes(std::span<const BatchDecodeEntry> entries, const Vocab& vocab,
                  const std::filesystem::path& file) {
    std::ofstream out(file, std::ios::binary);
    for (const auto& entry : entries) {
        nlohmann::ordered_json j;
        j["query"] = detokenize(entry.query, vocab);
        nlohmann::ordered_json rewrites = nlohmann::ordered_json::array();
        int rank = 1;
        for (const Hypothesis& h : entry.result.hypotheses) {
            nlohmann::ordered_json r;
            r["text"] = detokenize(h.tokens, vocab);
            r["logprob"] = h.score;
            r["rank"] = rank++;
            rewrites.push_back(std::move(r));
        }
        j["rewrites"] = std::move(rewrites);
        out << j.dump() << '\n';
    }
}

std::vector<BatchDecodeEntry> load_decodes(const std::filesystem::path& file, const Vocab& vocab) {
    std::ifstream in(file);
    if (!in) throw DataError("cannot open decode file " + file.string());
    std::vector<BatchDecodeEntry> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        BatchDecodeEntry entry;
        entry.query = tokenize(j["query"].get<std::string>(), vocab);
        for (const auto& r : j["rewrites"]) {
            Hypothesis h;
            h.tokens = tokenize(r["text"].get<std::string>(), vocab);
            h.score = r["logprob"].get<double>();
            entry.result.hypotheses.push_back(std::move(h));
        }
        out.push_back(std::move(entry));
    }
    return out;
}

}  // namespace clover

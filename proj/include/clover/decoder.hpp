#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "clover/catalog.hpp"
#include "clover/policy.hpp"
#include "clover/types.hpp"

namespace clover {

enum class DecodeAlgo { beam, diverse_sibling, sample };

struct DecoderSpec {
    DecodeAlgo algorithm = DecodeAlgo::beam;
    int beam_size = 20;               // B
    double diversity_strength = 1.0;  // gamma
    const KeywordTrie* trie = nullptr;
    int max_len = 8;
    std::optional<std::uint64_t> seed;  // required for sampling

    void validate() const;
};

struct Hypothesis {
    TokenSeq tokens;
    // Cumulative log-probability of the actions taken, under the raw policy
    // (the trie masks candidates but never rescores them). Equals
    // sequence_log_prob for naturally terminated outputs; for a truncated
    // sample the forced end marker is not counted.
    double score = 0.0;
    // Score with the sibling penalty at the last selection; equals score for
    // beam search and sampling.
    double penalized_score = 0.0;
    int sibling_rank = 0;  // 1-based at last expansion; 0 for sampling
    int parent = -1;       // index into the previous step's active beam
    bool truncated = false;
};

struct DecodeResult {
    std::vector<Hypothesis> hypotheses;
    // Set when nothing terminated within max_len (beam variants).
    bool truncation_warning = false;
};

// Standard beam search: top-B selection by cumulative log-prob, terminated
// hypotheses frozen without refilling their slots. Outputs sorted by score
// descending, deduplicated.
DecodeResult beam_search(const PolicyParams& params, const TokenSeq& query,
                         const DecoderSpec& spec);

// S-tilde = S - gamma * k for the k-th ranked expansion (1-based, ranked by
// S descending, ties by ascending token id) within one parent. Returned
// aligned with the input order.
std::vector<std::pair<TokenId, double>> sibling_penalized_scores(
    std::span<const std::pair<TokenId, double>> expansions, double gamma);

// Beam search selecting on sibling-penalized scores each step; returned
// hypotheses carry unpenalized scores.
DecodeResult diverse_sibling_search(const PolicyParams& params, const TokenSeq& query,
                                    const DecoderSpec& spec);

// B i.i.d. ancestral samples (with replacement) from the optionally
// trie-constrained policy; deterministic per seed. Samples that hit max_len
// are force-terminated and flagged.
DecodeResult sample_sequences(const PolicyParams& params, const TokenSeq& query,
                              const DecoderSpec& spec);

// Dispatch on spec.algorithm.
DecodeResult decode(const PolicyParams& params, const TokenSeq& query, const DecoderSpec& spec);

struct BatchDecodeEntry {
    TokenSeq query;
    DecodeResult result;
};

// Decode every query against one params snapshot; queries run in parallel.
std::vector<BatchDecodeEntry> batch_decode(const PolicyParams& params,
                                           std::span<const TokenSeq> queries,
                                           const DecoderSpec& spec, int threads = 1);

// JSONL, one line per query: {"query":…, "rewrites":[{"text":…, "logprob":…, "rank":…}]}
void save_decodes(std::span<const BatchDecodeEntry> entries, const Vocab& vocab,
                  const std::filesystem::path& file);
std::vector<BatchDecodeEntry> load_decodes(const std::filesystem::path& file, const Vocab& vocab);

}  // namespace clover

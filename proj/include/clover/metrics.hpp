#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "clover/catalog.hpp"
#include "clover/types.hpp"

namespace clover {

struct ScoredRewrite {
    TokenSeq rewrite;
    double quality = 0.0;
    std::string source;  // algorithm id
};

// Keep catalog members only; order preserved.
std::vector<ScoredRewrite> valid_bid_filter(std::span<const ScoredRewrite> rewrites,
                                            const KeywordTrie& trie);

// Drop keywords the production map already holds for this query.
std::vector<ScoredRewrite> unique_filter(std::span<const ScoredRewrite> rewrites,
                                         const ProductionMap& map, const TokenSeq& query);

// Keep quality >= tau. tau must be in [0, 1].
std::vector<ScoredRewrite> global_quality_filter(std::span<const ScoredRewrite> rewrites,
                                                 double tau);

// Keep quality >= the minimum stored quality for this query (0 if unmapped).
std::vector<ScoredRewrite> local_quality_filter(std::span<const ScoredRewrite> rewrites,
                                                const ProductionMap& map, const TokenSeq& query);

// valid -> unique -> global -> local, in that order.
std::vector<ScoredRewrite> filter_cascade(std::span<const ScoredRewrite> rewrites,
                                          const KeywordTrie& trie, const ProductionMap& map,
                                          const TokenSeq& query, double tau);

// Mean filtered-set size per query, zero-result queries included. Errors on
// an empty query set.
double unique_hq_count(std::span<const std::vector<ScoredRewrite>> per_query);

// Distinct n-grams across a query's rewrites divided by the total tokens
// generated for it, averaged over queries; end markers excluded. Queries with
// no tokens are skipped; all-empty input is an error.
double distinct_ngram(std::span<const std::vector<TokenSeq>> per_query_rewrites, int n);
double distinct_ngram_scored(std::span<const std::vector<ScoredRewrite>> per_query, int n);

struct EnsembleStage {
    std::string name;
    // Pre-filtered keyword sets, one per evaluated query (aligned to the
    // query list handed to ensemble()).
    std::vector<std::vector<ScoredRewrite>> per_query;
};

struct StageReport {
    std::string name;
    double retrieved = 0.0;  // mean filtered keywords per query
    double net_new = 0.0;    // mean keywords not already mapped per query
};

struct EnsembleReport {
    std::vector<StageReport> stages;
    ProductionMap merged;  // base map plus every stage's additions
    ProductionMap delta;   // additions only
};

// Apply stages in order; each stage's net-new is measured against the map
// after all earlier stages and then merged into it.
EnsembleReport ensemble(std::span<const EnsembleStage> stages, std::span<const TokenSeq> queries,
                        const ProductionMap& base);

struct EvalReport {
    double unique_hq_per_query = 0.0;
    double distinct1 = 0.0;
    double distinct2 = 0.0;
    EnsembleReport ensemble;
};

// report.json with the four metric fields plus optional provenance.
void save_report(const EvalReport& report, const std::filesystem::path& file,
                 const std::string& config_hash = "", std::uint64_t seed = 0);

}  // namespace clover

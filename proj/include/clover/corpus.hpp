#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "clover/types.hpp"
#include "clover/vocab.hpp"

namespace clover {

struct CorpusSpec {
    int num_intents = 1;
    int synonyms_per_slot = 1;
    int realizations_per_intent = 1;
    int vocab_budget = 64;
};

// One search intent. Realizations are produced from token patterns over two
// intent-specific content slots plus a shared filler pool; any two
// realizations of the same intent are same-intent by construction.
struct IntentClass {
    int id = 0;
    // slot 0, 1: content synonym groups unique to this intent; slot 2: fillers
    std::array<std::vector<TokenId>, 3> slot_words;
    std::vector<TokenSeq> realizations;  // terminated, distinct

    // Every sequence this intent's template can produce, canonical order.
    std::vector<TokenSeq> enumerate_expansions() const;
};

struct RewritePair {
    TokenSeq query;
    TokenSeq rewrite;
    int intent = 0;
};

struct RewriteDataset {
    std::vector<RewritePair> pairs;
};

struct SyntheticCorpus {
    CorpusSpec spec;
    std::uint64_t seed = 0;
    Vocab vocab;
    std::vector<IntentClass> intents;
    RewriteDataset dataset;
    std::vector<TokenSeq> keyword_catalog;  // sorted, no duplicates
    std::unordered_map<TokenSeq, int> intent_of;
};

// Deterministic in (spec, seed). Throws ConfigError when vocab_budget cannot
// host all distinct words or realizations_per_intent exceeds the template
// expansion of an intent.
SyntheticCorpus generate_corpus(const CorpusSpec& spec, std::uint64_t seed);

// True iff rewrite realizes the same intent as query. Throws DataError when
// the query realizes no known intent; unknown rewrites are simply false.
bool oracle_quality(const TokenSeq& query, const TokenSeq& rewrite, const SyntheticCorpus& corpus);

struct SplitRatios {
    double train = 0.8;
    double val = 0.1;
    double test = 0.1;
};

struct DatasetSplits {
    RewriteDataset train;
    RewriteDataset val;
    RewriteDataset test;
};

// Partition by intent id so no intent straddles splits.
DatasetSplits split_dataset(const RewriteDataset& dataset, const SplitRatios& ratios,
                            std::uint64_t seed);

// vocab.tsv, dataset.jsonl, catalog.txt (the public formats) plus
// intents.json so downstream stages can rebuild the intent oracle.
void save_corpus(const SyntheticCorpus& corpus, const std::filesystem::path& dir);
SyntheticCorpus load_corpus(const std::filesystem::path& dir);

}  // namespace clover

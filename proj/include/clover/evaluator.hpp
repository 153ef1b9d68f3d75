#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "clover/corpus.hpp"
#include "clover/types.hpp"

namespace clover {

// Rewrite-quality scorer P_e(rewrite, anchor) in [0, 1]: four pair features
// through a logistic layer. Inputs are not treated symmetrically.
struct EvaluatorModel {
    static constexpr int kNumFeatures = 4;
    static const std::array<const char*, kNumFeatures>& feature_names();

    std::array<double, kNumFeatures> weights{};
    double bias = 0.0;
    int emb_dim = 8;
    int vocab_size = 0;
    std::vector<double> embed;            // [vocab, emb_dim], fixed at construction
    std::vector<std::int32_t> word_class;  // [vocab], synonym-group id per word
};

// Feature extractor context comes from the corpus: content-slot synonym
// groups become word classes; all other words are singleton classes.
EvaluatorModel make_evaluator(const SyntheticCorpus& corpus, int emb_dim, std::uint64_t seed);

std::array<double, EvaluatorModel::kNumFeatures> pair_features(const EvaluatorModel& model,
                                                               const TokenSeq& rewrite,
                                                               const TokenSeq& anchor);

// P_e(rewrite, anchor); 0.5 everywhere for a zero-weight model.
double quality_score(const EvaluatorModel& model, const TokenSeq& rewrite, const TokenSeq& anchor);

struct LabeledPair {
    TokenSeq query;
    TokenSeq rewrite;
    int label = 0;  // 0 or 1
};

struct RatedPair {
    TokenSeq query;
    TokenSeq rewrite;
    int rating = 1;  // 1..5 Likert
};

struct EvaluatorConfig {
    double learning_rate = 1.0;
    int epochs = 200;
};

// Full-batch gradient descent on binary cross-entropy; returns the per-epoch
// losses (monotone non-increasing up to tolerance). Throws DataError on
// single-class data or conflicting duplicate pairs.
std::vector<double> train_evaluator(EvaluatorModel& model, std::span<const LabeledPair> labeled,
                                    const EvaluatorConfig& config, int threads = 1);

struct RewardSpec {
    double alpha = 0.5;
    bool use_reference = true;

    void validate() const;
};

// r = alpha * P_e(rewrite, query) + (1 - alpha) * P_e(rewrite, reference).
// Without use_reference alpha is treated as 1 and reference is ignored;
// with it, a missing reference is a contract error.
double reward(const EvaluatorModel& model, const TokenSeq& rewrite, const TokenSeq& query,
              const std::optional<TokenSeq>& reference, const RewardSpec& spec);

// Rank-based AUC-ROC over raw scores; ties contribute 0.5 via midranks.
// Throws DataError unless both classes are present.
double auc_from_scores(std::span<const double> scores, std::span<const int> labels);

// AUC of the model's quality scores on labeled test pairs.
double evaluator_auc(const EvaluatorModel& model, std::span<const LabeledPair> test);

// Likert ratings for evaluator training: dataset pairs are rated 4, sampled
// cross-intent and one-synonym-off negatives are rated 2.
std::vector<RatedPair> synthesize_ratings(const SyntheticCorpus& corpus,
                                          const RewriteDataset& dataset, std::uint64_t seed);

// Ratings of 3 and above become label 1.
std::vector<LabeledPair> binarize_ratings(std::span<const RatedPair> rated);

// labels.jsonl: {"query":…, "rewrite":…, "rating":…}
void save_ratings(std::span<const RatedPair> rated, const Vocab& vocab,
                  const std::filesystem::path& file);
std::vector<RatedPair> load_ratings(const std::filesystem::path& file, const Vocab& vocab);

void save_evaluator(const EvaluatorModel& model, const std::filesystem::path& path);
EvaluatorModel load_evaluator(const std::filesystem::path& path);

}  // namespace clover

#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "clover/corpus.hpp"
#include "clover/evaluator.hpp"
#include "oracles.hpp"

using namespace clover;
using oracle::seq;

TEST_SUITE_BEGIN("evaluator");

namespace {

struct Fixture {
    SyntheticCorpus corpus = generate_corpus({8, 3, 8, 128}, 19);
    DatasetSplits splits = split_dataset(corpus.dataset, {0.75, 0.25, 0.0}, 4);
    EvaluatorModel model = make_evaluator(corpus, 8, 12);
    std::vector<LabeledPair> train_labels =
        binarize_ratings(synthesize_ratings(corpus, splits.train, 5));
    std::vector<LabeledPair> heldout_labels =
        binarize_ratings(synthesize_ratings(corpus, splits.val, 6));
};

}  // namespace

TEST_CASE("an untrained model scores one half everywhere") {
    SyntheticCorpus corpus = generate_corpus({2, 2, 3, 32}, 1);
    EvaluatorModel model = make_evaluator(corpus, 4, 2);
    for (const auto& a : corpus.keyword_catalog)
        for (const auto& b : corpus.keyword_catalog) CHECK(quality_score(model, a, b) == 0.5);
}

TEST_CASE("ratings binarize at three and validate their range") {
    std::vector<RatedPair> rated{{seq({1, 0}), seq({2, 0}), 4}, {seq({1, 0}), seq({3, 0}), 2}};
    auto labeled = binarize_ratings(rated);
    CHECK(labeled[0].label == 1);
    CHECK(labeled[1].label == 0);
    rated[0].rating = 6;
    CHECK_THROWS_AS(binarize_ratings(rated), DataError);
}

TEST_CASE("training separates intent-preserving pairs") {
    Fixture f;
    EvaluatorConfig cfg;
    cfg.epochs = 400;
    std::vector<double> losses = train_evaluator(f.model, f.train_labels, cfg);

    int correct = 0;
    for (const auto& ex : f.train_labels) {
        double s = quality_score(f.model, ex.rewrite, ex.query);
        if ((s >= 0.5) == (ex.label == 1)) ++correct;
    }
    CHECK(static_cast<double>(correct) / f.train_labels.size() >= 0.99);

    SUBCASE("training loss is monotone non-increasing") {
        for (std::size_t e = 1; e < losses.size(); ++e) CHECK(losses[e] <= losses[e - 1] + 1e-9);
    }
    SUBCASE("held-out agreement with the intent oracle") {
        int agree = 0;
        for (const auto& ex : f.heldout_labels) {
            double s = quality_score(f.model, ex.rewrite, ex.query);
            if ((s >= 0.5) == (ex.label == 1)) ++agree;
        }
        CHECK(static_cast<double>(agree) / f.heldout_labels.size() >= 0.9);
    }
    SUBCASE("held-out anchors prefer themselves over other intents") {
        int wins = 0, total = 0;
        for (const auto& intent : f.corpus.intents) {
            const TokenSeq& q = intent.realizations.front();
            const TokenSeq& other =
                f.corpus.intents[(static_cast<std::size_t>(intent.id) + 1) % f.corpus.intents.size()]
                    .realizations.front();
            total += 1;
            if (quality_score(f.model, q, q) >= quality_score(f.model, other, q)) ++wins;
        }
        CHECK(static_cast<double>(wins) / total >= 0.95);
    }
    SUBCASE("scores survive a checkpoint round trip bit-exactly") {
        auto path = std::filesystem::temp_directory_path() / "clover_test_eval.ckpt";
        save_evaluator(f.model, path);
        EvaluatorModel loaded = load_evaluator(path);
        for (const auto& ex : f.heldout_labels)
            CHECK(quality_score(loaded, ex.rewrite, ex.query) ==
                  quality_score(f.model, ex.rewrite, ex.query));
        std::filesystem::remove(path);
    }
}

TEST_CASE("flipping the labels flips the scores") {
    Fixture f;
    EvaluatorConfig cfg;
    cfg.epochs = 150;
    train_evaluator(f.model, f.train_labels, cfg);

    std::vector<LabeledPair> flipped = f.train_labels;
    for (auto& ex : flipped) ex.label = 1 - ex.label;
    EvaluatorModel mirror = make_evaluator(f.corpus, 8, 12);
    train_evaluator(mirror, flipped, cfg);

    for (std::size_t i = 0; i < f.heldout_labels.size(); i += 7) {
        const auto& ex = f.heldout_labels[i];
        double s = quality_score(f.model, ex.rewrite, ex.query);
        double sf = quality_score(mirror, ex.rewrite, ex.query);
        CHECK(sf == doctest::Approx(1.0 - s).epsilon(1e-3));
    }
}

TEST_CASE("degenerate training data is rejected") {
    Fixture f;
    std::vector<LabeledPair> only_pos;
    for (const auto& ex : f.train_labels)
        if (ex.label == 1) only_pos.push_back(ex);
    CHECK_THROWS_AS(train_evaluator(f.model, only_pos, {}), DataError);

    std::vector<LabeledPair> conflicting = {f.train_labels.front(), f.train_labels.front()};
    conflicting[1].label = 1 - conflicting[1].label;
    CHECK_THROWS_AS(train_evaluator(f.model, conflicting, {}), DataError);
}

TEST_CASE("reward is the stated affine combination") {
    Fixture f;
    train_evaluator(f.model, f.train_labels, {});
    TokenSeq rewrite = f.corpus.intents[0].realizations[0];
    TokenSeq query = f.corpus.intents[0].realizations[1];
    TokenSeq reference = f.corpus.intents[0].realizations[2];
    double s_q = quality_score(f.model, rewrite, query);
    double s_r = quality_score(f.model, rewrite, reference);

    for (double alpha : {0.0, 0.25, 0.5, 1.0}) {
        RewardSpec spec{alpha, true};
        double r = reward(f.model, rewrite, query, reference, spec);
        CHECK(r == doctest::Approx(alpha * s_q + (1.0 - alpha) * s_r).epsilon(1e-15));
        CHECK(r >= 0.0);
        CHECK(r <= 1.0);
    }
    RewardSpec no_ref{0.3, false};
    CHECK(reward(f.model, rewrite, query, std::nullopt, no_ref) == s_q);
    RewardSpec needs_ref{0.3, true};
    CHECK_THROWS_AS(reward(f.model, rewrite, query, std::nullopt, needs_ref), ContractError);
}

TEST_CASE("AUC on hand-checked scores") {
    std::vector<double> scores{0.9, 0.8, 0.7, 0.85};
    std::vector<int> labels{1, 1, 0, 0};
    CHECK(auc_from_scores(scores, labels) == 0.75);  // 3 of 4 concordant

    SUBCASE("perfect separation") {
        std::vector<double> s{0.9, 0.8, 0.2, 0.1};
        CHECK(auc_from_scores(s, labels) == 1.0);
    }
    SUBCASE("all ties") {
        std::vector<double> s{0.4, 0.4, 0.4, 0.4};
        CHECK(auc_from_scores(s, labels) == 0.5);
    }
    SUBCASE("single class errors") {
        std::vector<int> ones{1, 1, 1, 1};
        CHECK_THROWS_AS(auc_from_scores(scores, ones), DataError);
    }
    SUBCASE("invariant under strictly increasing transforms") {
        std::vector<double> warped(scores.size());
        for (std::size_t i = 0; i < scores.size(); ++i)
            warped[i] = std::tanh(3.0 * scores[i]) + scores[i] * scores[i];
        CHECK(auc_from_scores(warped, labels) == auc_from_scores(scores, labels));
    }
}

TEST_CASE("trained evaluator ranks the held-out split well") {
    Fixture f;
    EvaluatorConfig cfg;
    cfg.epochs = 400;
    train_evaluator(f.model, f.train_labels, cfg);
    CHECK(evaluator_auc(f.model, f.heldout_labels) >= 0.90);
}

TEST_SUITE_END();

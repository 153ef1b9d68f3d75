#include <doctest.h>

#include <filesystem>
#include <set>

#include "clover/corpus.hpp"
#include "oracles.hpp"

using namespace clover;

TEST_SUITE_BEGIN("corpus");

TEST_CASE("tokenize maps words in order and appends the end marker") {
    Vocab v;
    v.add("pad1");
    v.add("pad2");
    v.add("best");  // id 3
    v.add("pad3");
    v.add("hotels");  // id 5
    v.add("pad4");
    v.add("london");  // id 7
    CHECK(tokenize("best hotels london", v).ids == std::vector<TokenId>{3, 5, 7, 0});
    CHECK(tokenize("", v).ids == std::vector<TokenId>{0});
    CHECK_THROWS_WITH_AS(tokenize("best zzz", v), "zzz not in vocabulary", DataError);
}

TEST_CASE("detokenize inverts tokenize on catalog keywords") {
    SyntheticCorpus corpus = generate_corpus({4, 2, 4, 64}, 3);
    for (const TokenSeq& k : corpus.keyword_catalog)
        CHECK(tokenize(detokenize(k, corpus.vocab), corpus.vocab) == k);
}

TEST_CASE("degenerate single-realization intent") {
    SyntheticCorpus corpus = generate_corpus({1, 1, 1, 10}, 7);
    CHECK(corpus.keyword_catalog.size() == 1);
    CHECK(corpus.dataset.pairs.empty());
}

TEST_CASE("template expansion counts and intent agreement") {
    CorpusSpec spec{2, 2, 4, 50};
    SyntheticCorpus corpus = generate_corpus(spec, 1);
    CHECK(corpus.keyword_catalog.size() == 8);

    // every realization must come from its intent's template expansion
    for (const IntentClass& intent : corpus.intents) {
        std::vector<TokenSeq> expansions = intent.enumerate_expansions();
        std::set<TokenSeq> allowed(expansions.begin(), expansions.end());
        CHECK(intent.realizations.size() == 4);
        for (const TokenSeq& r : intent.realizations) CHECK(allowed.count(r) == 1);
    }
    for (const auto& p : corpus.dataset.pairs) {
        CHECK(corpus.intent_of.at(p.query) == p.intent);
        CHECK(corpus.intent_of.at(p.rewrite) == p.intent);
    }
}

TEST_CASE("generation is a pure function of spec and seed") {
    CorpusSpec spec{3, 2, 5, 64};
    SyntheticCorpus a = generate_corpus(spec, 42);
    SyntheticCorpus b = generate_corpus(spec, 42);
    CHECK(a.vocab.surfaces() == b.vocab.surfaces());
    CHECK(a.keyword_catalog == b.keyword_catalog);
    REQUIRE(a.dataset.pairs.size() == b.dataset.pairs.size());
    for (std::size_t i = 0; i < a.dataset.pairs.size(); ++i) {
        CHECK(a.dataset.pairs[i].query == b.dataset.pairs[i].query);
        CHECK(a.dataset.pairs[i].rewrite == b.dataset.pairs[i].rewrite);
    }
    SyntheticCorpus c = generate_corpus(spec, 43);
    CHECK(a.vocab.surfaces() != c.vocab.surfaces());
}

TEST_CASE("vocab budget is enforced") {
    CHECK_THROWS_AS(generate_corpus({10, 3, 4, 10}, 1), ConfigError);
    CHECK_THROWS_AS(generate_corpus({0, 1, 1, 10}, 1), ConfigError);
    // more realizations than the template can produce
    CHECK_THROWS_AS(generate_corpus({1, 1, 100, 64}, 1), ConfigError);
}

TEST_CASE("oracle quality follows intent classes") {
    SyntheticCorpus corpus = generate_corpus({4, 2, 4, 64}, 9);
    const auto& i0 = corpus.intents[0].realizations;
    const auto& i1 = corpus.intents[1].realizations;
    CHECK(oracle_quality(i0[0], i0[1], corpus));
    CHECK(oracle_quality(i0[0], i0[0], corpus));  // reflexive
    CHECK_FALSE(oracle_quality(i0[0], i1[0], corpus));

    TokenSeq unknown = oracle::seq({1, 1, 1, 0});
    CHECK_FALSE(oracle_quality(i0[0], unknown, corpus));
    CHECK_THROWS_AS(oracle_quality(unknown, i0[0], corpus), DataError);
}

TEST_CASE("oracle is an equivalence relation over realizations") {
    SyntheticCorpus corpus = generate_corpus({3, 2, 4, 64}, 11);
    std::vector<TokenSeq> all = corpus.keyword_catalog;
    for (const auto& a : all)
        for (const auto& b : all) {
            CHECK(oracle_quality(a, b, corpus) == oracle_quality(b, a, corpus));  // symmetric
            for (const auto& c : all)
                if (oracle_quality(a, b, corpus) && oracle_quality(b, c, corpus))
                    CHECK(oracle_quality(a, c, corpus));  // transitive
        }
}

namespace {

RewriteDataset intents_dataset(int num_intents) {
    // one self-describing pair per intent; queries are [intent+1, end]
    RewriteDataset d;
    for (int i = 0; i < num_intents; ++i) {
        RewritePair p;
        p.query = oracle::seq({static_cast<TokenId>(i + 1), 0});
        p.rewrite = oracle::seq({static_cast<TokenId>(i + 1), 0});
        p.intent = i;
        d.pairs.push_back(p);
    }
    return d;
}

}  // namespace

TEST_CASE("split partitions intents by ratio") {
    RewriteDataset d = intents_dataset(10);
    DatasetSplits s = split_dataset(d, {0.8, 0.1, 0.1}, 5);
    auto intents_of = [](const RewriteDataset& ds) {
        std::set<int> ids;
        for (const auto& p : ds.pairs) ids.insert(p.intent);
        return ids;
    };
    CHECK(intents_of(s.train).size() == 8);
    CHECK(intents_of(s.val).size() == 1);
    CHECK(intents_of(s.test).size() == 1);

    // disjoint and exhaustive
    std::set<int> seen;
    for (const auto* part : {&s.train, &s.val, &s.test})
        for (const auto& p : part->pairs) seen.insert(p.intent);
    CHECK(seen.size() == 10);
    CHECK(s.train.pairs.size() + s.val.pairs.size() + s.test.pairs.size() == d.pairs.size());
}

TEST_CASE("split edge cases") {
    RewriteDataset d = intents_dataset(10);
    DatasetSplits s = split_dataset(d, {0.5, 0.5, 0.0}, 1);
    CHECK(s.test.pairs.empty());
    CHECK_THROWS_AS(split_dataset(d, {0.5, 0.6, 0.1}, 1), ConfigError);
    CHECK_THROWS_AS(split_dataset(intents_dataset(2), {0.4, 0.3, 0.3}, 1), DataError);

    DatasetSplits a = split_dataset(d, {0.8, 0.1, 0.1}, 5);
    DatasetSplits b = split_dataset(d, {0.8, 0.1, 0.1}, 5);
    CHECK(a.train.pairs.size() == b.train.pairs.size());
    for (std::size_t i = 0; i < a.train.pairs.size(); ++i)
        CHECK(a.train.pairs[i].query == b.train.pairs[i].query);
}

TEST_CASE("corpus round trip through the serialized files") {
    SyntheticCorpus corpus = generate_corpus({3, 2, 5, 64}, 21);
    auto dir = std::filesystem::temp_directory_path() / "clover_test_corpus";
    std::filesystem::remove_all(dir);
    save_corpus(corpus, dir);
    SyntheticCorpus loaded = load_corpus(dir);

    CHECK(loaded.vocab.surfaces() == corpus.vocab.surfaces());
    CHECK(loaded.keyword_catalog == corpus.keyword_catalog);
    CHECK(loaded.intent_of == corpus.intent_of);
    REQUIRE(loaded.dataset.pairs.size() == corpus.dataset.pairs.size());
    for (std::size_t i = 0; i < loaded.dataset.pairs.size(); ++i) {
        CHECK(loaded.dataset.pairs[i].query == corpus.dataset.pairs[i].query);
        CHECK(loaded.dataset.pairs[i].rewrite == corpus.dataset.pairs[i].rewrite);
        CHECK(loaded.dataset.pairs[i].intent == corpus.dataset.pairs[i].intent);
    }
    std::filesystem::remove_all(dir);
}

TEST_SUITE_END();

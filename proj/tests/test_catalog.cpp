#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <functional>
#include <set>

#include "clover/catalog.hpp"
#include "clover/corpus.hpp"
#include "clover/rng.hpp"
#include "oracles.hpp"

using namespace clover;
using oracle::seq;

TEST_SUITE_BEGIN("catalog");

namespace {

// vocab ids: 0 end, 1 red, 2 shoes, 3 socks, 4 running, 5 blue
KeywordCatalog shoe_catalog() {
    return KeywordCatalog{{seq({1, 2, 0}), seq({1, 3, 0})}};
}

}  // namespace

TEST_CASE("trie structure over a two-keyword catalog") {
    KeywordTrie trie = build_trie(shoe_catalog());
    auto root = trie.allowed_continuations(seq({}));
    CHECK(std::vector<TokenId>(root.begin(), root.end()) == std::vector<TokenId>{1});
    auto after_red = trie.allowed_continuations(seq({1}));
    CHECK(std::vector<TokenId>(after_red.begin(), after_red.end()) == std::vector<TokenId>{2, 3});
    auto after_shoes = trie.allowed_continuations(seq({1, 2}));
    CHECK(std::vector<TokenId>(after_shoes.begin(), after_shoes.end()) ==
          std::vector<TokenId>{0});
    // node count <= total tokens + 1
    CHECK(trie.node_count() <= 7);
    CHECK(trie.max_depth() == 3);
}

TEST_CASE("single keyword builds a chain") {
    KeywordTrie trie = build_trie(KeywordCatalog{{seq({1, 0})}});
    CHECK(trie.node_count() == 3);
    CHECK(trie.contains(seq({1, 0})));
}

TEST_CASE("empty catalog is a build error") {
    CHECK_THROWS_AS(build_trie(KeywordCatalog{}), ConfigError);
}

TEST_CASE("membership follows the catalog exactly") {
    KeywordTrie trie = build_trie(shoe_catalog());
    CHECK(trie.contains(seq({1, 2, 0})));
    CHECK_FALSE(trie.contains(seq({1, 0})));     // prefix, not a member
    CHECK_FALSE(trie.contains(seq({5, 2, 0})));  // unknown first token
    CHECK_THROWS_AS(trie.allowed_continuations(seq({5})), ContractError);
}

TEST_CASE("keyword completion and longer extension coexist") {
    KeywordTrie trie = build_trie(KeywordCatalog{{seq({1, 2, 0}), seq({1, 2, 3, 0})}});
    auto conts = trie.allowed_continuations(seq({1, 2}));
    CHECK(std::vector<TokenId>(conts.begin(), conts.end()) == std::vector<TokenId>{0, 3});
    CHECK(trie.contains(seq({1, 2, 0})));
    CHECK(trie.contains(seq({1, 2, 3, 0})));
}

TEST_CASE("constrain_distribution masks and renormalizes") {
    // keywords: "red shoes", "red running shoes" over ids {red:1, shoes:2, running:4}
    KeywordTrie trie = build_trie(KeywordCatalog{{seq({1, 2, 0}), seq({1, 4, 2, 0})}});
    std::vector<double> dist = {0.0, 0.0, 0.5, 0.3, 0.2};  // shoes .5, socks .3, running .2
    TokenSeq prefix = seq({1});
    std::vector<double> out = constrain_distribution(dist, trie, prefix.ids);
    CHECK(out[2] == doctest::Approx(5.0 / 7.0).epsilon(1e-12));
    CHECK(out[4] == doctest::Approx(2.0 / 7.0).epsilon(1e-12));
    CHECK(out[3] == 0.0);
    CHECK(out[0] == 0.0);

    SUBCASE("degenerate mass errors in strict mode, falls back in decode mode") {
        std::vector<double> zeros = {0.0, 0.0, 0.0, 1.0, 0.0};
        CHECK_THROWS_AS(constrain_distribution(zeros, trie, prefix.ids, MaskMode::strict),
                        ContractError);
        std::vector<double> fb = constrain_distribution(zeros, trie, prefix.ids, MaskMode::decode);
        CHECK(fb[2] == 0.5);
        CHECK(fb[4] == 0.5);
    }
    SUBCASE("unnormalized input is rejected") {
        std::vector<double> bad = {0.0, 0.0, 0.5, 0.3, 0.3};
        CHECK_THROWS_AS(constrain_distribution(bad, trie, prefix.ids), ContractError);
    }
}

TEST_CASE("allowed set covering the whole vocab leaves the distribution unchanged") {
    // after [a]: end, a, b are all continuations -> whole vocab of size 3
    KeywordTrie trie = build_trie(
        KeywordCatalog{{seq({1, 0}), seq({1, 1, 0}), seq({1, 2, 0})}});
    std::vector<double> dist = {0.25, 0.5, 0.25};
    TokenSeq prefix = seq({1});
    std::vector<double> out = constrain_distribution(dist, trie, prefix.ids);
    for (std::size_t v = 0; v < dist.size(); ++v)
        CHECK(out[v] == doctest::Approx(dist[v]).epsilon(1e-12));
}

TEST_CASE("trie membership matches the generating catalog") {
    SyntheticCorpus corpus = generate_corpus({6, 3, 8, 128}, 17);
    KeywordTrie trie = build_trie(KeywordCatalog{corpus.keyword_catalog});
    std::set<TokenSeq> members(corpus.keyword_catalog.begin(), corpus.keyword_catalog.end());
    for (const TokenSeq& k : corpus.keyword_catalog) CHECK(trie.contains(k));

    Rng rng(99);
    int checked = 0;
    while (checked < 1000) {
        TokenSeq s;
        int len = 1 + static_cast<int>(rng.next_below(4));
        for (int i = 0; i < len; ++i)
            s.ids.push_back(static_cast<TokenId>(1 + rng.next_below(
                                static_cast<std::uint64_t>(corpus.vocab.size() - 1))));
        s.ids.push_back(kEndToken);
        if (members.count(s)) continue;
        CHECK_FALSE(trie.contains(s));
        ++checked;
    }
}

TEST_CASE("greedy walks under the constraint always reach a keyword") {
    SyntheticCorpus corpus = generate_corpus({5, 2, 6, 128}, 23);
    KeywordTrie trie = build_trie(KeywordCatalog{corpus.keyword_catalog});
    // no dead ends: from any node, following first allowed edges terminates
    std::function<void(TokenSeq&)> walk = [&](TokenSeq& prefix) {
        auto allowed = trie.allowed_continuations(prefix);
        REQUIRE(!allowed.empty());
        for (TokenId t : allowed) {
            if (t == kEndToken) {
                TokenSeq done = prefix;
                done.ids.push_back(kEndToken);
                CHECK(trie.contains(done));
                continue;
            }
            prefix.ids.push_back(t);
            walk(prefix);
            prefix.ids.pop_back();
        }
    };
    TokenSeq root;
    walk(root);
}

TEST_CASE("production map stores scores and minima") {
    ProductionMap map;
    TokenSeq q = seq({1, 0});
    map.add(q, seq({1, 2, 0}), 0.6);
    map.add(q, seq({1, 3, 0}), 0.8);
    CHECK(map.has_keyword(q, seq({1, 2, 0})));
    CHECK_FALSE(map.has_keyword(q, seq({1, 4, 0})));
    CHECK(map.min_quality(q) == 0.6);
    CHECK(map.min_quality(seq({2, 0})) == 0.0);  // unmapped
    map.add(q, seq({1, 2, 0}), 0.9);             // refresh
    CHECK(map.keywords_for(q).size() == 2);
    CHECK(map.min_quality(q) == 0.8);
}

TEST_CASE("production map serializes scores with six decimals") {
    Vocab v;
    v.add("red");
    v.add("shoes");
    ProductionMap map;
    map.add(tokenize("red", v), tokenize("red shoes", v), 0.1234567);
    auto file = std::filesystem::temp_directory_path() / "clover_test_map.jsonl";
    save_production_map(map, v, file);

    std::ifstream in(file);
    std::string line;
    std::getline(in, line);
    CHECK(line.find("0.123457") != std::string::npos);

    ProductionMap loaded = load_production_map(file, v);
    CHECK(loaded.has_keyword(tokenize("red", v), tokenize("red shoes", v)));
    std::filesystem::remove(file);
}

TEST_SUITE_END();

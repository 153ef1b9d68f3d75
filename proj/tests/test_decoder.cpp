#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "clover/corpus.hpp"
#include "clover/decoder.hpp"
#include "clover/rng.hpp"
#include "clover/trainer.hpp"
#include "oracles.hpp"

using namespace clover;
using oracle::seq;

TEST_SUITE_BEGIN("decoder");

namespace {

DecoderSpec beam_spec(int B, int max_len = 4, const KeywordTrie* trie = nullptr) {
    DecoderSpec s;
    s.algorithm = DecodeAlgo::beam;
    s.beam_size = B;
    s.diversity_strength = 0.0;
    s.trie = trie;
    s.max_len = max_len;
    return s;
}

DecoderSpec dss_spec(int B, double gamma, int max_len = 4, const KeywordTrie* trie = nullptr) {
    DecoderSpec s = beam_spec(B, max_len, trie);
    s.algorithm = DecodeAlgo::diverse_sibling;
    s.diversity_strength = gamma;
    return s;
}

DecoderSpec sample_spec(int B, std::uint64_t sd, int max_len = 4,
                        const KeywordTrie* trie = nullptr) {
    DecoderSpec s = beam_spec(B, max_len, trie);
    s.algorithm = DecodeAlgo::sample;
    s.seed = sd;
    return s;
}

}  // namespace

TEST_CASE("beam with B=1 is the greedy argmax chain") {
    PolicyParams p = init_params({4, 4, 5, 4, 1}, 2);
    scale(6.0, p);
    TokenSeq query = seq({1, 0});

    TokenSeq greedy;
    std::vector<double> ctx = encode_query(p, query);
    for (int t = 0; t < 4; ++t) {
        std::vector<double> lp = step_log_probs(p, ctx, std::span<const TokenId>(greedy.ids));
        TokenId best = static_cast<TokenId>(std::max_element(lp.begin(), lp.end()) - lp.begin());
        greedy.ids.push_back(best);
        if (best == kEndToken) break;
    }

    DecodeResult res = beam_search(p, query, beam_spec(1));
    if (greedy.terminated()) {
        REQUIRE(res.hypotheses.size() == 1);
        CHECK(res.hypotheses[0].tokens == greedy);
    } else {
        CHECK(res.hypotheses.empty());
        CHECK(res.truncation_warning);
    }
}

TEST_CASE("a large beam recovers the exhaustive top scores") {
    for (std::uint64_t sd : {3, 4, 5}) {
        PolicyParams p = init_params({3, 3, 4, 3, 1}, sd);
        scale(5.0, p);
        TokenSeq query = seq({2, 0});

        std::vector<std::pair<double, TokenSeq>> enumerated;
        for (const auto& o : oracle::enumerate_outcomes(p, query, 3))
            if (o.terminated) enumerated.push_back({o.log_prob, TokenSeq(o.actions)});
        std::sort(enumerated.begin(), enumerated.end(),
                  [](const auto& a, const auto& b) { return a.first > b.first; });

        DecodeResult res = beam_search(p, query, beam_spec(32, 3));
        REQUIRE(res.hypotheses.size() == enumerated.size());
        for (std::size_t i = 0; i < res.hypotheses.size(); ++i) {
            CHECK(res.hypotheses[i].tokens == enumerated[i].second);
            CHECK(res.hypotheses[i].score ==
                  doctest::Approx(enumerated[i].first).epsilon(1e-12));
        }
    }
}

TEST_CASE("trie-constrained outputs stay inside the catalog") {
    KeywordTrie trie = build_trie(KeywordCatalog{{seq({1, 2, 0}), seq({2, 1, 0})}});
    for (std::uint64_t sd = 0; sd < 8; ++sd) {
        PolicyParams p = init_params({4, 3, 4, 4, 1}, 50 + sd);
        for (const auto& spec :
             {beam_spec(4, 4, &trie), dss_spec(4, 0.7, 4, &trie), sample_spec(4, sd, 4, &trie)}) {
            DecodeResult res = decode(p, seq({1, 0}), spec);
            if (spec.algorithm != DecodeAlgo::sample) CHECK(!res.hypotheses.empty());
            for (const Hypothesis& h : res.hypotheses) CHECK(trie.contains(h.tokens));
        }
    }
}

TEST_CASE("sibling penalties follow rank") {
    std::vector<std::pair<TokenId, double>> exp{{1, -1.0}, {2, -1.2}, {3, -1.3}};
    auto out = sibling_penalized_scores(exp, 0.5);
    CHECK(out[0].second == doctest::Approx(-1.5).epsilon(1e-12));
    CHECK(out[1].second == doctest::Approx(-2.2).epsilon(1e-12));
    CHECK(out[2].second == doctest::Approx(-2.8).epsilon(1e-12));

    SUBCASE("gamma zero is the identity") {
        auto same = sibling_penalized_scores(exp, 0.0);
        for (std::size_t i = 0; i < exp.size(); ++i) CHECK(same[i].second == exp[i].second);
    }
    SUBCASE("ties break toward the lower token id") {
        std::vector<std::pair<TokenId, double>> tie{{7, -1.0}, {2, -1.0}};
        auto ranked = sibling_penalized_scores(tie, 1.0);
        CHECK(ranked[1].second == doctest::Approx(-2.0));  // id 2 pays rank 1
        CHECK(ranked[0].second == doctest::Approx(-3.0));  // id 7 pays rank 2
    }
}

TEST_CASE("gamma=0 diverse sibling search is bitwise beam search") {
    for (std::uint64_t sd = 0; sd < 20; ++sd) {
        PolicyParams p = init_params({5, 4, 5, 4, 1}, 200 + sd);
        scale(3.0, p);
        TokenSeq query = seq({static_cast<TokenId>(1 + sd % 4), 0});
        DecodeResult beam = beam_search(p, query, beam_spec(4));
        DecodeResult dss = diverse_sibling_search(p, query, dss_spec(4, 0.0));
        REQUIRE(beam.hypotheses.size() == dss.hypotheses.size());
        for (std::size_t i = 0; i < beam.hypotheses.size(); ++i) {
            CHECK(beam.hypotheses[i].tokens == dss.hypotheses[i].tokens);
            CHECK(beam.hypotheses[i].score == dss.hypotheses[i].score);  // bitwise
        }
    }
}

TEST_CASE("a huge penalty forces distinct first tokens") {
    PolicyParams p = init_params({4, 4, 5, 4, 1}, 77);
    scale(2.0, p);
    DecodeResult res = diverse_sibling_search(p, seq({1, 0}), dss_spec(2, 10.0));
    if (res.hypotheses.size() == 2)
        CHECK(res.hypotheses[0].tokens.ids[0] != res.hypotheses[1].tokens.ids[0]);
}

TEST_CASE("increasing gamma never shrinks first-token variety") {
    PolicyParams p = init_params({5, 4, 6, 4, 1}, 91);
    scale(4.0, p);
    TokenSeq query = seq({2, 0});
    std::size_t prev_count = 0;
    for (double gamma : {0.0, 0.1, 0.5, 1.0}) {
        DecodeResult res = diverse_sibling_search(p, query, dss_spec(3, gamma));
        std::set<TokenId> firsts;
        for (const Hypothesis& h : res.hypotheses) firsts.insert(h.tokens.ids.front());
        CHECK(firsts.size() >= prev_count);
        prev_count = firsts.size();
    }
}

TEST_CASE("sampling is reproducible; a missing seed is rejected") {
    PolicyParams p = init_params({4, 4, 5, 4, 1}, 5);
    TokenSeq query = seq({1, 0});
    DecodeResult a = sample_sequences(p, query, sample_spec(6, 99));
    DecodeResult b = sample_sequences(p, query, sample_spec(6, 99));
    REQUIRE(a.hypotheses.size() == 6);
    for (std::size_t i = 0; i < 6; ++i) {
        CHECK(a.hypotheses[i].tokens == b.hypotheses[i].tokens);
        CHECK(a.hypotheses[i].score == b.hypotheses[i].score);
    }
    DecoderSpec no_seed = sample_spec(2, 1);
    no_seed.seed.reset();
    CHECK_THROWS_AS(sample_sequences(p, query, no_seed), ConfigError);
}

TEST_CASE("a deterministic policy samples B identical copies") {
    PolicyParams p = zeros_like({3, 3, 3, 4, 1});
    p.out_b[0] = 40.0;  // end immediately
    DecodeResult res = sample_sequences(p, seq({1, 0}), sample_spec(5, 3));
    REQUIRE(res.hypotheses.size() == 5);
    for (const Hypothesis& h : res.hypotheses) CHECK(h.tokens == seq({0}));
}

TEST_CASE("sample frequencies match enumerated probabilities") {
    // uniform policy over {end, a}: outcomes [0] 1/2, [a 0] 1/4, [a a] 1/4
    PolicyParams p = zeros_like({2, 3, 3, 2, 1});
    TokenSeq query = seq({1, 0});
    auto outcomes = oracle::enumerate_outcomes(p, query, 2);
    REQUIRE(outcomes.size() == 3);

    const int N = 100000;
    DecodeResult res = sample_sequences(p, query, sample_spec(N, 1234, 2));
    std::map<std::vector<TokenId>, int> counts;
    for (const Hypothesis& h : res.hypotheses) {
        auto actions = hypothesis_actions(h);
        counts[std::vector<TokenId>(actions.begin(), actions.end())] += 1;
    }

    for (const auto& o : outcomes) {
        double prob = std::exp(o.log_prob);
        double freq = static_cast<double>(counts[o.actions]) / N;
        double sigma = std::sqrt(prob * (1.0 - prob) / N);
        CHECK(std::abs(freq - prob) <= 3.0 * sigma);
    }
}

TEST_CASE("scores equal independently recomputed log-probs") {
    SyntheticCorpus corpus = generate_corpus({4, 2, 6, 64}, 31);
    KeywordTrie trie = build_trie(KeywordCatalog{corpus.keyword_catalog});
    PolicyParams p = init_params({corpus.vocab.size(), 6, 8, 6, 1}, 44);
    scale(3.0, p);
    TokenSeq query = corpus.keyword_catalog[0];
    for (const auto& spec : {beam_spec(5, 6, &trie), dss_spec(5, 0.5, 6, &trie),
                             sample_spec(5, 7, 6, &trie), beam_spec(5, 6), dss_spec(5, 1.0, 6)}) {
        DecodeResult res = decode(p, query, spec);
        for (const Hypothesis& h : res.hypotheses) {
            if (h.truncated) continue;
            CHECK(h.score == doctest::Approx(sequence_log_prob(p, query, h.tokens)).epsilon(1e-9));
        }
    }
}

TEST_CASE("truncation is reported") {
    // never emits the end token: huge bias toward token 1
    PolicyParams p = zeros_like({3, 3, 3, 4, 1});
    p.out_b[1] = 40.0;
    TokenSeq query = seq({2, 0});

    DecodeResult beam = beam_search(p, query, beam_spec(1, 3));
    CHECK(beam.hypotheses.empty());
    CHECK(beam.truncation_warning);

    DecodeResult samp = sample_sequences(p, query, sample_spec(3, 5, 3));
    REQUIRE(samp.hypotheses.size() == 3);
    for (const Hypothesis& h : samp.hypotheses) {
        CHECK(h.truncated);
        CHECK(h.tokens.terminated());  // force-closed
        // the forced end marker is not scored as an action
        CHECK(h.score ==
              doctest::Approx(action_log_prob(p, query, hypothesis_actions(h))).epsilon(1e-12));
    }
}

TEST_SUITE_END();

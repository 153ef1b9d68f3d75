// Timing comparison between the serial reference paths and the OpenMP
// kernels: supervised batch gradients, RL rollout steps, batch decoding,
// and the entropy probe.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <vector>

#include "clover/decoder.hpp"
#include "clover/parallel.hpp"
#include "clover/pipeline.hpp"
#include "clover/rng.hpp"
#include "clover/trainer.hpp"

using namespace clover;

namespace {

double ms_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
        .count();
}

template <typename F>
double time_best_of(int reps, F&& fn) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        auto t0 = std::chrono::steady_clock::now();
        fn();
        best = std::min(best, ms_since(t0));
    }
    return best;
}

void report(const char* name, double serial_ms, double parallel_ms, int threads) {
    std::printf("%-26s serial %9.2f ms   %d threads %9.2f ms   speedup %5.2fx\n", name, serial_ms,
                threads, parallel_ms, serial_ms / parallel_ms);
}

}  // namespace

int main(int argc, char** argv) {
    int threads = argc > 1 ? std::atoi(argv[1]) : par::default_threads();
    int reps = argc > 2 ? std::atoi(argv[2]) : 3;
    std::printf("comparing serial reference vs %d OpenMP threads (best of %d)\n\n", threads, reps);

    CorpusSpec spec{24, 3, 8, 256};
    SyntheticCorpus corpus = generate_corpus(spec, 7);
    KeywordCatalog catalog{corpus.keyword_catalog};
    KeywordTrie trie = build_trie(catalog);

    PolicyDims dims{corpus.vocab.size(), 20, 40, 6, 2};
    PolicyParams params = init_params(dims, 11);
    EvaluatorModel evaluator = make_evaluator(corpus, 8, 13);
    evaluator.weights = {0.5, 4.0, 0.5, 0.5};
    evaluator.bias = -2.0;

    std::vector<RewritePair> batch(corpus.dataset.pairs.begin(),
                                   corpus.dataset.pairs.begin() +
                                       std::min<std::size_t>(64, corpus.dataset.pairs.size()));

    {
        SupervisedConfig cfg;
        cfg.label_smoothing = 0.0;
        double serial =
            time_best_of(reps, [&] { (void)supervised_batch_reference(params, batch, cfg); });
        double par_ms =
            time_best_of(reps, [&] { (void)supervised_batch(params, batch, cfg, threads); });
        report("supervised batch grad", serial, par_ms, threads);
    }

    {
        RLConfig rl;
        rl.algorithm = RLAlgo::diversity_rl;
        rl.decoder_spec.algorithm = DecodeAlgo::diverse_sibling;
        rl.decoder_spec.beam_size = 12;
        rl.decoder_spec.trie = &trie;
        rl.decoder_spec.max_len = dims.max_len;
        rl.learning_rate = 1e-9;  // keep params effectively frozen while timing
        std::span<const RewritePair> rl_batch(batch.data(), std::min<std::size_t>(16, batch.size()));
        double serial = time_best_of(reps, [&] {
            PolicyParams p = params;
            (void)diversity_rl_step(p, rl_batch, rl, evaluator, 1);
        });
        double par_ms = time_best_of(reps, [&] {
            PolicyParams p = params;
            (void)diversity_rl_step(p, rl_batch, rl, evaluator, threads);
        });
        report("diversity RL step", serial, par_ms, threads);
    }

    {
        std::vector<TokenSeq> queries = distinct_queries(corpus.dataset, 160);
        DecoderSpec dspec;
        dspec.algorithm = DecodeAlgo::diverse_sibling;
        dspec.beam_size = 20;
        dspec.trie = &trie;
        dspec.max_len = dims.max_len;
        double serial = time_best_of(reps, [&] { (void)batch_decode(params, queries, dspec, 1); });
        double par_ms =
            time_best_of(reps, [&] { (void)batch_decode(params, queries, dspec, threads); });
        report("batch decode (160 q)", serial, par_ms, threads);
    }

    {
        std::vector<TokenSeq> queries = distinct_queries(corpus.dataset, 64);
        double serial =
            time_best_of(reps, [&] { (void)policy_entropy(params, queries, 16, 99, 1); });
        double par_ms =
            time_best_of(reps, [&] { (void)policy_entropy(params, queries, 16, 99, threads); });
        report("entropy probe (64x16)", serial, par_ms, threads);
    }

    return 0;
}

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "clover/corpus.hpp"
#include "clover/types.hpp"

namespace clover {

struct PolicyDims {
    int vocab = 0;    // V
    int embed = 16;   // d
    int hidden = 32;  // h
    int max_len = 8;  // longest sequence including the end marker
    int horizon = 2;  // prediction heads; head 0 is the decoding head

    friend bool operator==(const PolicyDims&, const PolicyDims&) = default;
};

// Conditional sequence model P(w_t | w_<t, Q). The query is mean-pooled
// through an embedding table and a linear projection into a context vector;
// the decoder combines previous-token embedding, context, and a per-position
// bias through one tanh layer, then projects to vocab logits per head.
struct PolicyParams {
    PolicyDims dims;
    std::vector<double> enc_embed;  // [V, d]
    std::vector<double> enc_proj;   // [d, d]
    std::vector<double> enc_bias;   // [d]
    std::vector<double> dec_embed;  // [V, d]
    std::vector<double> w_prev;     // [h, d]
    std::vector<double> w_ctx;      // [h, d]
    std::vector<double> pos_emb;    // [max_len, h]
    std::vector<double> hid_bias;   // [h]
    std::vector<double> out_w;      // [horizon, V, h]
    std::vector<double> out_b;      // [horizon, V]

    // Visit every tensor in a fixed order (checkpointing, algebra, checks).
    template <typename Fn>
    void for_each_tensor(Fn&& fn) {
        fn("enc_embed", enc_embed);
        fn("enc_proj", enc_proj);
        fn("enc_bias", enc_bias);
        fn("dec_embed", dec_embed);
        fn("w_prev", w_prev);
        fn("w_ctx", w_ctx);
        fn("pos_emb", pos_emb);
        fn("hid_bias", hid_bias);
        fn("out_w", out_w);
        fn("out_b", out_b);
    }
    template <typename Fn>
    void for_each_tensor(Fn&& fn) const {
        const_cast<PolicyParams*>(this)->for_each_tensor(
            [&fn](const char* name, std::vector<double>& v) {
                fn(name, static_cast<const std::vector<double>&>(v));
            });
    }

    std::size_t parameter_count() const;
    bool all_finite() const;
    // Name of the first tensor holding a non-finite value, or empty.
    std::string first_non_finite() const;
};

PolicyParams zeros_like(const PolicyDims& dims);
// uniform(-0.1, 0.1) scaled by 1/sqrt(embed dim)
PolicyParams init_params(const PolicyDims& dims, std::uint64_t seed);

// y += a * x (same dims)
void axpy(double a, const PolicyParams& x, PolicyParams& y);
void scale(double a, PolicyParams& x);
double dot(const PolicyParams& a, const PolicyParams& b);
double max_abs(const PolicyParams& a);

// Flatten round trip, used by finite-difference oracles in the tests.
std::vector<double> flatten(const PolicyParams& p);
void unflatten(std::span<const double> flat, PolicyParams& p);

// Query context vector (encoder output), reusable across decode steps.
std::vector<double> encode_query(const PolicyParams& params, const TokenSeq& query);

// Head-0 logits for predicting position prefix.size(). The prefix must be
// unterminated and shorter than max_len.
std::vector<double> next_token_logits(const PolicyParams& params, const TokenSeq& query,
                                      const TokenSeq& prefix);

// log softmax of head-0 logits given a precomputed context.
std::vector<double> step_log_probs(const PolicyParams& params, std::span<const double> ctx,
                                   std::span<const TokenId> prefix);

// Sum of step log-probabilities of the leading `actions` tokens of a
// sequence (each conditioned on the tokens before it). For a terminated
// sequence this covers the end marker; for a truncated sample pass only the
// tokens that were actually drawn.
double action_log_prob(const PolicyParams& params, const TokenSeq& query,
                       std::span<const TokenId> actions);

// log P(seq | query); seq must be terminated and well formed.
double sequence_log_prob(const PolicyParams& params, const TokenSeq& query, const TokenSeq& seq);

// Analytic gradient of action_log_prob, scaled by weight, added into grad.
void accumulate_log_prob_gradient(const PolicyParams& params, const TokenSeq& query,
                                  std::span<const TokenId> actions, double weight,
                                  PolicyParams& grad);

// Gradient of sequence_log_prob with the same shapes as params.
PolicyParams log_prob_gradient(const PolicyParams& params, const TokenSeq& query,
                               const TokenSeq& seq);

struct SupervisedConfig {
    int n = 2;                                  // future-token horizon
    std::vector<double> alpha_weights = {0.5, 0.5};
    double learning_rate = 0.1;
    int batch_size = 32;
    double label_smoothing = 0.1;
    // Recorded optimizer defaults; the simple-SGD path is the reference.
    std::string optimizer = "sgd";  // "sgd" | "adam"
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    void validate(const PolicyDims& dims) const;
};

// Mean next-n-gram loss over the batch and its gradient; positions past the
// end of a rewrite are skipped. threads parallelizes over pairs with a fixed
// reduction order, so results are identical for any thread count.
struct SupervisedBatch {
    double loss = 0.0;
    PolicyParams grad;
};
SupervisedBatch supervised_batch(const PolicyParams& params, std::span<const RewritePair> batch,
                                 const SupervisedConfig& config, int threads = 1);

// Serial reference twin of supervised_batch (plain accumulation loop); kept
// for the parallel-equivalence tests and the benchmark.
SupervisedBatch supervised_batch_reference(const PolicyParams& params,
                                           std::span<const RewritePair> batch,
                                           const SupervisedConfig& config);

// One SGD update on the batch; returns the loss before the update.
double supervised_step(PolicyParams& params, std::span<const RewritePair> batch,
                       const SupervisedConfig& config, int threads = 1);

// Monte-Carlo estimate of the per-sequence policy entropy
// E_Q E_{S~P(.|Q)}[-log P(S|Q)], sampling num_samples rollouts per query
// truncated at max_len. Deterministic in seed and thread count.
double policy_entropy(const PolicyParams& params, std::span<const TokenSeq> queries,
                      int num_samples, std::uint64_t seed, int threads = 1);

}  // namespace clover

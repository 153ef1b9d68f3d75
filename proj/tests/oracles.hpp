#pragma once

// Test-only oracles, independent of the decoding/training code paths they
// check: exhaustive rollout enumeration and central finite differences.

#include <cmath>
#include <functional>
#include <vector>

#include "clover/catalog.hpp"
#include "clover/policy.hpp"

namespace clover::oracle {

struct Outcome {
    std::vector<TokenId> actions;  // sampled steps; end marker included iff terminated
    double log_prob = 0.0;         // log-prob of the actions under the sampling process
    bool terminated = false;
};

// Every outcome of ancestral sampling truncated at max_len: terminated
// sequences plus unterminated length-max_len prefixes. With a trie the step
// distributions are the renormalized constrained ones, so outcome
// probabilities always sum to 1.
inline std::vector<Outcome> enumerate_outcomes(const PolicyParams& params, const TokenSeq& query,
                                               int max_len, const KeywordTrie* trie = nullptr) {
    std::vector<Outcome> out;
    std::vector<double> ctx = encode_query(params, query);
    std::vector<TokenId> prefix;

    std::function<void(double)> walk = [&](double lp_so_far) {
        if (static_cast<int>(prefix.size()) >= max_len) {
            out.push_back({prefix, lp_so_far, false});
            return;
        }
        std::vector<double> lp = step_log_probs(params, ctx, prefix);
        if (trie) {
            std::vector<double> probs(lp.size());
            for (std::size_t v = 0; v < lp.size(); ++v) probs[v] = std::exp(lp[v]);
            std::vector<double> constrained =
                constrain_distribution(probs, *trie, prefix, MaskMode::decode);
            for (std::size_t v = 0; v < constrained.size(); ++v) {
                if (constrained[v] <= 0.0) continue;
                prefix.push_back(static_cast<TokenId>(v));
                double lp_next = lp_so_far + std::log(constrained[v]);
                if (static_cast<TokenId>(v) == kEndToken)
                    out.push_back({prefix, lp_next, true});
                else
                    walk(lp_next);
                prefix.pop_back();
            }
        } else {
            for (std::size_t v = 0; v < lp.size(); ++v) {
                prefix.push_back(static_cast<TokenId>(v));
                double lp_next = lp_so_far + lp[v];
                if (static_cast<TokenId>(v) == kEndToken)
                    out.push_back({prefix, lp_next, true});
                else
                    walk(lp_next);
                prefix.pop_back();
            }
        }
    };
    walk(0.0);
    return out;
}

// Central finite differences of an arbitrary scalar function of the
// parameters, as a flat vector aligned with flatten().
template <typename F>
std::vector<double> finite_diff_gradient(const PolicyParams& params, F&& fn, double eps) {
    PolicyParams work = params;
    std::vector<double> flat = flatten(params);
    std::vector<double> grad(flat.size(), 0.0);
    for (std::size_t i = 0; i < flat.size(); ++i) {
        double orig = flat[i];
        flat[i] = orig + eps;
        unflatten(flat, work);
        double up = fn(work);
        flat[i] = orig - eps;
        unflatten(flat, work);
        double down = fn(work);
        flat[i] = orig;
        grad[i] = (up - down) / (2.0 * eps);
    }
    return grad;
}

inline double l2(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

inline double rel_l2_error(const std::vector<double>& a, const std::vector<double>& b) {
    double diff = 0.0, ref = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        ref += b[i] * b[i];
    }
    return std::sqrt(diff) / std::max(1e-300, std::sqrt(ref));
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    return ab / std::max(1e-300, std::sqrt(aa) * std::sqrt(bb));
}

// Shorthand for building token sequences in tests.
inline TokenSeq seq(std::initializer_list<TokenId> ids) { return TokenSeq(std::vector<TokenId>(ids)); }

}  // namespace clover::oracle

#include "clover/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include <json.hpp>

#include "clover/metrics.hpp"
#include "clover/parallel.hpp"
#include "clover/rng.hpp"

namespace clover {

void RLConfig::validate() const {
    decoder_spec.validate();
    reward_spec.validate();
    if (algorithm == RLAlgo::diversity_rl) {
        if (decoder_spec.algorithm != DecodeAlgo::diverse_sibling)
            throw ConfigError("diversity_rl requires the diverse_sibling decoder");
        if (decoder_spec.beam_size < 2) throw ConfigError("diversity_rl requires B >= 2");
    } else {
        if (decoder_spec.algorithm != DecodeAlgo::sample)
            throw ConfigError("reinforce variants require the sampling decoder");
    }
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (entropy_log_interval < 1) throw ConfigError("entropy_log_interval must be >= 1");
    if (probe_queries < 1 || probe_samples < 1) throw ConfigError("probe sizes must be >= 1");
}

std::span<const TokenId> hypothesis_actions(const Hypothesis& h) {
    std::span<const TokenId> ids(h.tokens.ids);
    if (h.truncated && !ids.empty() && ids.back() == kEndToken) ids = ids.subspan(0, ids.size() - 1);
    return ids;
}

namespace {

// Fixed block size keeps the reduction order independent of thread count.
constexpr std::size_t kGradBlock = 8;

PolicyParams weighted_grad(const PolicyParams& params, std::span<const TokenSeq> queries,
                           std::span<const Hypothesis> rewrites, std::span<const double> weights,
                           int threads) {
    if (queries.size() != rewrites.size() || queries.size() != weights.size())
        throw ContractError("queries, rewrites, and weights must align");
    const std::size_t n = queries.size();
    const std::size_t blocks = (n + kGradBlock - 1) / kGradBlock;
    std::vector<PolicyParams> partials(blocks);
    par::for_index(blocks, threads, [&](std::size_t b) {
        partials[b] = zeros_like(params.dims);
        std::size_t lo = b * kGradBlock;
        std::size_t hi = std::min(n, lo + kGradBlock);
        for (std::size_t i = lo; i < hi; ++i)
            accumulate_log_prob_gradient(params, queries[i], hypothesis_actions(rewrites[i]),
                                         weights[i], partials[b]);
    });
    PolicyParams grad = zeros_like(params.dims);
    for (std::size_t b = 0; b < blocks; ++b) axpy(1.0, partials[b], grad);
    return grad;
}

}  // namespace

PolicyParams reinforce_grad(const PolicyParams& params, std::span<const TokenSeq> queries,
                            std::span<const Hypothesis> rewrites, std::span<const double> rewards,
                            int threads) {
    return weighted_grad(params, queries, rewrites, rewards, threads);
}

PolicyParams reinforce_grad_reference(const PolicyParams& params,
                                      std::span<const TokenSeq> queries,
                                      std::span<const Hypothesis> rewrites,
                                      std::span<const double> rewards) {
    if (queries.size() != rewrites.size() || queries.size() != rewards.size())
        throw ContractError("queries, rewrites, and rewards must align");
    PolicyParams grad = zeros_like(params.dims);
    for (std::size_t i = 0; i < queries.size(); ++i)
        accumulate_log_prob_gradient(params, queries[i], hypothesis_actions(rewrites[i]),
                                     rewards[i], grad);
    return grad;
}

std::vector<double> loo_baselines(std::span<const double> rewards) {
    const std::size_t B = rewards.size();
    if (B < 2) throw ContractError("leave-one-out baseline needs at least two rewards");
    std::vector<double> out(B, 0.0);
    for (std::size_t j = 0; j < B; ++j) {
        double sum = 0.0;
        for (std::size_t k = 0; k < B; ++k)
            if (k != j) sum += rewards[k];
        out[j] = sum / static_cast<double>(B - 1);
    }
    return out;
}

PolicyParams reinforce_baseline_grad(const PolicyParams& params,
                                     std::span<const TokenSeq> queries,
                                     std::span<const Hypothesis> rewrites,
                                     std::span<const double> rewards,
                                     std::span<const double> baselines, int threads) {
    if (rewards.size() != baselines.size())
        throw ContractError("rewards and baselines must align");
    std::vector<double> advantages(rewards.size());
    for (std::size_t i = 0; i < rewards.size(); ++i) advantages[i] = rewards[i] - baselines[i];
    return weighted_grad(params, queries, rewrites, advantages, threads);
}

namespace {

struct Rollout {
    std::vector<Hypothesis> hyps;
    std::vector<double> rewards;
    std::vector<double> baselines;  // empty when baselines are off
    bool skipped = false;
};

// Per-query rollouts against a frozen params snapshot. For diversity RL the
// decode is deterministic; sampling variants derive one seed per query.
std::vector<Rollout> rollout_batch(const PolicyParams& params, std::span<const RewritePair> batch,
                                   const RLConfig& config, const EvaluatorModel& evaluator,
                                   bool with_baseline, std::uint64_t step_seed, int threads) {
    std::vector<Rollout> rollouts(batch.size());
    par::for_index(batch.size(), threads, [&](std::size_t i) {
        DecoderSpec spec = config.decoder_spec;
        if (spec.algorithm == DecodeAlgo::sample)
            spec.seed = mix_seed({step_seed, hash_str64("rollout"), i});
        DecodeResult res = decode(params, batch[i].query, spec);
        Rollout& r = rollouts[i];
        r.hyps = std::move(res.hypotheses);
        if (with_baseline && r.hyps.size() < 2) {
            r.skipped = true;
            return;
        }
        if (r.hyps.empty()) {
            r.skipped = true;
            return;
        }
        r.rewards.reserve(r.hyps.size());
        std::optional<TokenSeq> reference;
        if (config.reward_spec.use_reference) reference = batch[i].rewrite;
        for (const Hypothesis& h : r.hyps)
            r.rewards.push_back(reward(evaluator, h.tokens, batch[i].query, reference,
                                       config.reward_spec));
        if (with_baseline) {
            r.baselines = loo_baselines(r.rewards);
            double residual = 0.0;
            for (std::size_t j = 0; j < r.rewards.size(); ++j)
                residual += r.rewards[j] - r.baselines[j];
            if (std::abs(residual) > 1e-12)
                throw Error("leave-one-out advantages failed the zero-sum check");
        }
    });
    return rollouts;
}

StepStats apply_rollouts(PolicyParams& params, std::span<const RewritePair> batch,
                         const RLConfig& config, std::span<const Rollout> rollouts,
                         bool with_baseline, int threads) {
    std::vector<TokenSeq> queries;
    std::vector<Hypothesis> hyps;
    std::vector<double> rewards;
    std::vector<double> baselines;
    StepStats stats;
    stats.decoded.resize(batch.size());

    double reward_sum = 0.0, adv_sum = 0.0;
    std::size_t n_terms = 0;
    for (std::size_t i = 0; i < rollouts.size(); ++i) {
        const Rollout& r = rollouts[i];
        for (const Hypothesis& h : r.hyps) stats.decoded[i].push_back(h.tokens);
        if (r.skipped) {
            ++stats.queries_skipped;
            continue;
        }
        for (std::size_t j = 0; j < r.hyps.size(); ++j) {
            queries.push_back(batch[i].query);
            hyps.push_back(r.hyps[j]);
            rewards.push_back(r.rewards[j]);
            if (with_baseline) {
                baselines.push_back(r.baselines[j]);
                adv_sum += r.rewards[j] - r.baselines[j];
            }
            reward_sum += r.rewards[j];
            ++n_terms;
        }
    }
    if (n_terms > 0) {
        PolicyParams grad =
            with_baseline
                ? reinforce_baseline_grad(params, queries, hyps, rewards, baselines, threads)
                : reinforce_grad(params, queries, hyps, rewards, threads);
        axpy(config.learning_rate, grad, params);  // ascent
        stats.mean_reward = reward_sum / static_cast<double>(n_terms);
        stats.mean_advantage = with_baseline ? adv_sum / static_cast<double>(n_terms) : 0.0;
    }
    return stats;
}

}  // namespace

StepStats diversity_rl_step(PolicyParams& params, std::span<const RewritePair> batch,
                            const RLConfig& config, const EvaluatorModel& evaluator, int threads) {
    config.validate();
    if (config.algorithm != RLAlgo::diversity_rl)
        throw ContractError("diversity_rl_step requires algorithm = diversity_rl");
    auto rollouts = rollout_batch(params, batch, config, evaluator, /*with_baseline=*/true,
                                  config.seed, threads);
    StepStats stats = apply_rollouts(params, batch, config, rollouts, true, threads);
    if (stats.queries_skipped > 0)
        std::fprintf(stderr, "warning: %d queries skipped (decoder returned < 2 hypotheses)\n",
                     stats.queries_skipped);
    return stats;
}

StepStats reinforce_step(PolicyParams& params, std::span<const RewritePair> batch,
                         const RLConfig& config, const EvaluatorModel& evaluator,
                         bool with_baseline, std::uint64_t step_seed, int threads) {
    config.validate();
    auto rollouts =
        rollout_batch(params, batch, config, evaluator, with_baseline, step_seed, threads);
    return apply_rollouts(params, batch, config, rollouts, with_baseline, threads);
}

namespace {

std::vector<TokenSeq> probe_set(const RewriteDataset& dataset, int max_queries) {
    std::vector<TokenSeq> probes;
    std::set<TokenSeq> seen;
    for (const auto& p : dataset.pairs) {
        if (static_cast<int>(probes.size()) >= max_queries) break;
        if (seen.insert(p.query).second) probes.push_back(p.query);
    }
    return probes;
}

TraceRecord make_record(int iter, const StepStats& stats, double entropy, double wall_ms) {
    TraceRecord rec;
    rec.iter = iter;
    rec.mean_reward = stats.mean_reward;
    rec.mean_advantage = stats.mean_advantage;
    rec.entropy = entropy;
    std::vector<std::vector<TokenSeq>> nonempty;
    for (const auto& set : stats.decoded)
        if (!set.empty()) nonempty.push_back(set);
    rec.distinct1 = nonempty.empty() ? 0.0 : distinct_ngram(nonempty, 1);
    rec.distinct2 = nonempty.empty() ? 0.0 : distinct_ngram(nonempty, 2);
    rec.wall_ms = wall_ms;
    return rec;
}

}  // namespace

TrainTrace train_rl(PolicyParams& params, const RewriteDataset& dataset, const RLConfig& config,
                    const EvaluatorModel& evaluator, int threads) {
    config.validate();
    if (dataset.pairs.empty()) throw ContractError("train_rl needs a nonempty dataset");

    const std::vector<TokenSeq> probes = probe_set(dataset, config.probe_queries);
    const std::uint64_t probe_seed = mix_seed({config.seed, hash_str64("probe")});
    auto probe_entropy = [&]() {
        return policy_entropy(params, probes, config.probe_samples, probe_seed, threads);
    };

    TrainTrace trace;
    const std::size_t n = dataset.pairs.size();
    const std::size_t bs = static_cast<std::size_t>(config.batch_size);
    const std::size_t steps_per_epoch = (n + bs - 1) / bs;
    int iter = 0;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::vector<std::size_t> order(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        Rng perm(mix_seed({config.seed, hash_str64("perm"), static_cast<std::uint64_t>(epoch)}));
        perm.shuffle(order);

        for (std::size_t s = 0; s < steps_per_epoch; ++s, ++iter) {
            std::vector<RewritePair> batch;
            batch.reserve(bs);
            for (std::size_t k = s * bs; k < std::min(n, (s + 1) * bs); ++k)
                batch.push_back(dataset.pairs[order[k]]);

            bool log_now = (iter % config.entropy_log_interval) == 0;
            double entropy = log_now ? probe_entropy() : 0.0;
            auto t0 = std::chrono::steady_clock::now();

            RLConfig step_cfg = config;
            std::uint64_t step_seed =
                mix_seed({config.seed, hash_str64("step"), static_cast<std::uint64_t>(iter)});
            StepStats stats;
            switch (config.algorithm) {
                case RLAlgo::diversity_rl:
                    step_cfg.seed = step_seed;
                    stats = diversity_rl_step(params, batch, step_cfg, evaluator, threads);
                    break;
                case RLAlgo::reinforce:
                    stats = reinforce_step(params, batch, step_cfg, evaluator, false, step_seed,
                                           threads);
                    break;
                case RLAlgo::reinforce_baseline:
                    stats = reinforce_step(params, batch, step_cfg, evaluator, true, step_seed,
                                           threads);
                    break;
            }

            std::string bad = params.first_non_finite();
            if (!bad.empty())
                throw Error("non-finite parameters in tensor " + bad + " after step " +
                            std::to_string(iter));

            if (log_now) {
                double wall_ms = std::chrono::duration<double, std::milli>(
                                     std::chrono::steady_clock::now() - t0)
                                     .count();
                trace.records.push_back(make_record(iter, stats, entropy, wall_ms));
            }
        }
    }

    // Final record on the trained parameters; rollouts only, no update.
    {
        std::vector<RewritePair> batch;
        for (std::size_t k = 0; k < std::min(n, bs); ++k) batch.push_back(dataset.pairs[k]);
        bool with_baseline = config.algorithm != RLAlgo::reinforce;
        auto rollouts = rollout_batch(params, batch, config, evaluator, with_baseline,
                                      mix_seed({config.seed, hash_str64("final")}), threads);
        StepStats stats;
        stats.decoded.resize(batch.size());
        double reward_sum = 0.0;
        std::size_t n_terms = 0;
        for (std::size_t i = 0; i < rollouts.size(); ++i) {
            for (const Hypothesis& h : rollouts[i].hyps)
                stats.decoded[i].push_back(h.tokens);
            if (rollouts[i].skipped) {
                ++stats.queries_skipped;
                continue;
            }
            for (double r : rollouts[i].rewards) {
                reward_sum += r;
                ++n_terms;
            }
        }
        if (n_terms > 0) stats.mean_reward = reward_sum / static_cast<double>(n_terms);
        trace.records.push_back(make_record(iter, stats, probe_entropy(), 0.0));
    }
    return trace;
}

void save_trace(const TrainTrace& trace, const std::filesystem::path& file) {
    std::ofstream out(file, std::ios::binary);
    for (const TraceRecord& rec : trace.records) {
        nlohmann::ordered_json j;
        j["iter"] = rec.iter;
        j["mean_reward"] = rec.mean_reward;
        j["mean_advantage"] = rec.mean_advantage;
        j["entropy"] = rec.entropy;
        j["distinct1"] = rec.distinct1;
        j["distinct2"] = rec.distinct2;
        out << j.dump() << '\n';
    }
}

}  // namespace clover

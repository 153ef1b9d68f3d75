#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "clover/decoder.hpp"
#include "clover/evaluator.hpp"
#include "clover/policy.hpp"

namespace clover {

enum class RLAlgo { reinforce, reinforce_baseline, diversity_rl };

struct RLConfig {
    RLAlgo algorithm = RLAlgo::diversity_rl;
    DecoderSpec decoder_spec;  // diverse_sibling for diversity_rl, sample otherwise
    RewardSpec reward_spec;
    int batch_size = 8;
    double learning_rate = 0.02;
    int epochs = 1;
    int entropy_log_interval = 10;
    std::uint64_t seed = 0;
    int probe_queries = 64;   // entropy probe set size
    int probe_samples = 16;   // rollouts per probe query

    void validate() const;
};

// The action tokens of a hypothesis: the full sequence including the end
// marker, except that a forced end on a truncated sample is not an action.
std::span<const TokenId> hypothesis_actions(const Hypothesis& h);

// Sum of reward-weighted log-prob gradients over sampled rewrites, one entry
// per (query, rewrite, reward) triple.
PolicyParams reinforce_grad(const PolicyParams& params, std::span<const TokenSeq> queries,
                            std::span<const Hypothesis> rewrites, std::span<const double> rewards,
                            int threads = 1);

// Serial single-accumulator twin kept for tests and the benchmark.
PolicyParams reinforce_grad_reference(const PolicyParams& params,
                                      std::span<const TokenSeq> queries,
                                      std::span<const Hypothesis> rewrites,
                                      std::span<const double> rewards);

// Leave-one-out baselines: b_j = mean of the other B-1 rewards. B >= 2.
std::vector<double> loo_baselines(std::span<const double> rewards);

// Advantage-weighted gradient; baselines must not depend on their own sample.
PolicyParams reinforce_baseline_grad(const PolicyParams& params,
                                     std::span<const TokenSeq> queries,
                                     std::span<const Hypothesis> rewrites,
                                     std::span<const double> rewards,
                                     std::span<const double> baselines, int threads = 1);

struct StepStats {
    double mean_reward = 0.0;
    double mean_advantage = 0.0;
    int queries_skipped = 0;
    std::vector<std::vector<TokenSeq>> decoded;  // per query, for diversity stats
};

// One ascent step of the diversity-driven objective: decode B diverse
// rewrites per query, reward them, subtract leave-one-out baselines, ascend
// the advantage-weighted log-prob gradient. Queries whose decode yields
// fewer than two hypotheses are skipped.
StepStats diversity_rl_step(PolicyParams& params, std::span<const RewritePair> batch,
                            const RLConfig& config, const EvaluatorModel& evaluator,
                            int threads = 1);

// One step of plain REINFORCE (with_baseline=false) or REINFORCE with
// leave-one-out baselines over B sampled rollouts per query.
StepStats reinforce_step(PolicyParams& params, std::span<const RewritePair> batch,
                         const RLConfig& config, const EvaluatorModel& evaluator,
                         bool with_baseline, std::uint64_t step_seed, int threads = 1);

struct TraceRecord {
    int iter = 0;
    double mean_reward = 0.0;
    double mean_advantage = 0.0;
    double entropy = 0.0;
    double distinct1 = 0.0;
    double distinct2 = 0.0;
    double wall_ms = 0.0;  // not serialized; runs must be byte-reproducible
};

struct TrainTrace {
    std::vector<TraceRecord> records;
};

// Policy-gradient fine-tuning per the configured algorithm. The trace logs
// step 0, every entropy_log_interval-th step, and a final post-training
// record. Deterministic in (seed, config, data) for any thread count.
// Aborts with a diagnostic if an update produces non-finite parameters.
TrainTrace train_rl(PolicyParams& params, const RewriteDataset& dataset, const RLConfig& config,
                    const EvaluatorModel& evaluator, int threads = 1);

// trace.jsonl: {"iter":…, "mean_reward":…, "entropy":…, "distinct1":…, "distinct2":…}
void save_trace(const TrainTrace& trace, const std::filesystem::path& file);

}  // namespace clover

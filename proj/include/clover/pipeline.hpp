#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "clover/corpus.hpp"
#include "clover/evaluator.hpp"
#include "clover/metrics.hpp"
#include "clover/policy.hpp"
#include "clover/trainer.hpp"

namespace clover {

// Everything one end-to-end run needs; every stage derives its seed from the
// single global seed, so stages are independently reproducible.
struct RunConfig {
    std::uint64_t seed = 7;
    int threads = 0;  // 0 = CLOVER_THREADS / OpenMP default

    CorpusSpec corpus_spec{24, 3, 8, 256};
    SplitRatios ratios{};

    int embed = 20;
    int hidden = 40;
    int max_len = 6;

    SupervisedConfig sup{};
    int sup_epochs = 40;

    int eval_emb_dim = 8;
    EvaluatorConfig eval_cfg{};

    std::string rl_algorithm = "diversity_rl";  // reinforce | reinforce_baseline | diversity_rl
    int rl_beam = 12;
    double rl_gamma = 1.0;
    double rl_alpha = 0.5;
    bool rl_use_reference = true;
    bool rl_use_trie = true;
    int rl_batch = 8;
    double rl_lr = 0.02;
    int rl_epochs = 2;
    int rl_log_interval = 10;

    int decode_beam = 20;
    double decode_gamma = 1.0;
    double tau = 0.5;
    int map_keywords_per_query = 2;
    int eval_queries_cap = 160;

    void validate() const;
    // Canonical key=value dump; the config hash is the FNV-1a of this text.
    std::string dump() const;
    std::string config_hash() const;
    std::uint64_t stage_seed(const std::string& stage) const;

    PolicyDims policy_dims(int vocab) const;
    RLAlgo rl_algo() const;
};

// Conventional layout under one output directory.
struct PipelinePaths {
    std::filesystem::path root;

    std::filesystem::path corpus_dir() const { return root / "corpus"; }
    std::filesystem::path manifest() const { return root / "manifest.json"; }
    std::filesystem::path policy_sup() const { return root / "policy_sup.ckpt"; }
    std::filesystem::path policy_rl() const { return root / "policy_rl.ckpt"; }
    std::filesystem::path evaluator_ckpt() const { return root / "evaluator.ckpt"; }
    std::filesystem::path labels() const { return root / "labels.jsonl"; }
    std::filesystem::path trace() const { return root / "trace.jsonl"; }
    std::filesystem::path production_map() const { return root / "production_map.jsonl"; }
    std::filesystem::path decodes_dir() const { return root / "decodes"; }
    std::filesystem::path report() const { return root / "report.json"; }
};

// Distinct queries of a dataset in first-appearance order, capped.
std::vector<TokenSeq> distinct_queries(const RewriteDataset& dataset, int cap);

// Baseline production map: the first k reference rewrites per query, scored
// by the evaluator (stands in for keywords mined by earlier systems).
ProductionMap build_base_map(const RewriteDataset& dataset, std::span<const TokenSeq> queries,
                             const EvaluatorModel& evaluator, int keywords_per_query);

// Epoch/batch driver over supervised_step-style updates (sgd or adam).
// Returns per-epoch mean losses.
std::vector<double> train_supervised(PolicyParams& params, const RewriteDataset& train,
                                     const SupervisedConfig& config, int epochs,
                                     std::uint64_t seed, int threads);

// Stage drivers used by the CLI subcommands; they read and write the
// conventional files under paths.root.
SyntheticCorpus stage_gen_corpus(const RunConfig& cfg, const PipelinePaths& paths);
void stage_train_sup(const RunConfig& cfg, const PipelinePaths& paths);
void stage_train_eval(const RunConfig& cfg, const PipelinePaths& paths);
void stage_train_rl(const RunConfig& cfg, const PipelinePaths& paths);
void stage_decode(const RunConfig& cfg, const PipelinePaths& paths,
                  const std::filesystem::path& policy_ckpt, const std::string& algo, int beam,
                  double gamma, const std::filesystem::path& out_file);

// Score + filter decode output against a map/catalog; one report per stage
// list entry, ensembled in order over the base map.
EvalReport evaluate_stages(const std::vector<std::pair<std::string, std::filesystem::path>>& stages,
                           const SyntheticCorpus& corpus, const KeywordTrie& trie,
                           const ProductionMap& base_map, const EvaluatorModel& evaluator,
                           double tau);

// The full workflow: corpus, supervised, evaluator, RL, three decode
// configurations, filters, ensemble report.
EvalReport run_pipeline(const RunConfig& cfg, const PipelinePaths& paths);

void write_manifest(const RunConfig& cfg, const PipelinePaths& paths);

}  // namespace clover

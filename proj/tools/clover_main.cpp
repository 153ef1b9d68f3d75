// clover: batch driver for catalog-constrained query rewriting.
// Subcommands: gen-corpus, train-sup, train-eval, train-rl, decode,
// evaluate, report, pipeline.

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "clover/checkpoint.hpp"
#include "clover/decoder.hpp"
#include "clover/parallel.hpp"
#include "clover/pipeline.hpp"

namespace {

using clover::PipelinePaths;
using clover::RunConfig;

void add_common_options(CLI::App* cmd, RunConfig& cfg, std::string& out_dir) {
    cmd->add_option("--out", out_dir, "run directory")->required();
    cmd->add_option("--seed", cfg.seed, "global seed; every stage derives from it");
    cmd->add_option("--threads", cfg.threads, "worker threads (0 = CLOVER_THREADS or OpenMP default)");
}

void add_corpus_options(CLI::App* cmd, RunConfig& cfg) {
    cmd->add_option("--intents", cfg.corpus_spec.num_intents, "number of intent classes");
    cmd->add_option("--synonyms", cfg.corpus_spec.synonyms_per_slot, "synonyms per content slot");
    cmd->add_option("--realizations", cfg.corpus_spec.realizations_per_intent,
                    "realizations generated per intent");
    cmd->add_option("--budget", cfg.corpus_spec.vocab_budget, "vocabulary budget");
}

void add_model_options(CLI::App* cmd, RunConfig& cfg) {
    cmd->add_option("--embed", cfg.embed, "embedding width");
    cmd->add_option("--hidden", cfg.hidden, "decoder hidden width");
    cmd->add_option("--max-len", cfg.max_len, "max sequence length incl. end marker");
}

void add_sup_options(CLI::App* cmd, RunConfig& cfg) {
    cmd->add_option("--sup-epochs", cfg.sup_epochs, "supervised epochs");
    cmd->add_option("--sup-lr", cfg.sup.learning_rate, "supervised learning rate");
    cmd->add_option("--sup-batch", cfg.sup.batch_size, "supervised batch size");
    cmd->add_option("--ngram", cfg.sup.n, "future-token horizon n");
    cmd->add_option("--label-smoothing", cfg.sup.label_smoothing, "label smoothing");
    cmd->add_option("--optimizer", cfg.sup.optimizer, "sgd or adam");
}

void add_rl_options(CLI::App* cmd, RunConfig& cfg) {
    cmd->add_option("--rl-algorithm", cfg.rl_algorithm,
                    "reinforce | reinforce_baseline | diversity_rl");
    cmd->add_option("--rl-beam", cfg.rl_beam, "rollouts per query (B)");
    cmd->add_option("--rl-gamma", cfg.rl_gamma, "diversity strength");
    cmd->add_option("--rl-alpha", cfg.rl_alpha, "reward weight alpha");
    cmd->add_option("--rl-use-reference", cfg.rl_use_reference,
                    "blend reference-rewrite score into the reward");
    cmd->add_option("--rl-use-trie", cfg.rl_use_trie, "constrain training rollouts to the catalog");
    cmd->add_option("--rl-batch", cfg.rl_batch, "queries per RL step");
    cmd->add_option("--rl-lr", cfg.rl_lr, "RL learning rate");
    cmd->add_option("--rl-epochs", cfg.rl_epochs, "RL epochs");
    cmd->add_option("--rl-log-interval", cfg.rl_log_interval, "trace every k steps");
}

void add_metric_options(CLI::App* cmd, RunConfig& cfg) {
    cmd->add_option("--tau", cfg.tau, "global quality threshold");
    cmd->add_option("--decode-beam", cfg.decode_beam, "decode beam size");
    cmd->add_option("--decode-gamma", cfg.decode_gamma, "decode diversity strength");
    cmd->add_option("--map-keywords", cfg.map_keywords_per_query,
                    "baseline production-map keywords per query");
    cmd->add_option("--eval-queries", cfg.eval_queries_cap, "evaluated query cap");
}

int run(int argc, char** argv) {
    CLI::App app{"catalog-constrained query rewriting: corpus, training, decoding, evaluation"};
    app.require_subcommand(1);
    app.set_config("--config", "", "config file (ini format, [section] nesting)");

    RunConfig cfg;
    std::string out_dir = "out";

    auto* gen = app.add_subcommand("gen-corpus", "generate the synthetic corpus");
    add_common_options(gen, cfg, out_dir);
    add_corpus_options(gen, cfg);

    auto* tsup = app.add_subcommand("train-sup", "supervised training from the corpus");
    add_common_options(tsup, cfg, out_dir);
    add_corpus_options(tsup, cfg);
    add_model_options(tsup, cfg);
    add_sup_options(tsup, cfg);

    auto* teval = app.add_subcommand("train-eval", "train the rewrite-quality evaluator");
    add_common_options(teval, cfg, out_dir);
    add_corpus_options(teval, cfg);
    teval->add_option("--eval-epochs", cfg.eval_cfg.epochs, "evaluator epochs");
    teval->add_option("--eval-lr", cfg.eval_cfg.learning_rate, "evaluator learning rate");
    teval->add_option("--eval-emb", cfg.eval_emb_dim, "evaluator embedding width");

    auto* trl = app.add_subcommand("train-rl", "policy-gradient fine-tuning");
    add_common_options(trl, cfg, out_dir);
    add_corpus_options(trl, cfg);
    add_rl_options(trl, cfg);

    auto* dec = app.add_subcommand("decode", "batch decode evaluation queries");
    std::string dec_policy, dec_algo = "diverse_sibling", dec_out;
    add_common_options(dec, cfg, out_dir);
    add_corpus_options(dec, cfg);
    add_metric_options(dec, cfg);
    dec->add_option("--policy", dec_policy, "policy checkpoint")->required();
    dec->add_option("--algo", dec_algo, "beam | diverse_sibling | sample");
    dec->add_option("--decodes-out", dec_out, "output jsonl")->required();

    auto* ev = app.add_subcommand("evaluate", "filter + score one decode file");
    std::string ev_rewrites, ev_map, ev_catalog, ev_evaluator, ev_report = "report.json";
    ev->add_option("--rewrites", ev_rewrites, "decode jsonl")->required();
    ev->add_option("--map", ev_map, "production map jsonl")->required();
    ev->add_option("--catalog", ev_catalog, "catalog.txt")->required();
    ev->add_option("--corpus", out_dir, "corpus directory (vocabulary)")->required();
    ev->add_option("--evaluator", ev_evaluator, "evaluator checkpoint")->required();
    ev->add_option("--tau", cfg.tau, "global quality threshold");
    ev->add_option("--report-out", ev_report, "report destination");
    ev->add_option("--seed", cfg.seed, "seed echoed into the report");

    auto* rep = app.add_subcommand("report", "ensemble report across decode stages");
    std::vector<std::string> rep_stages;
    std::string rep_map, rep_catalog, rep_evaluator, rep_report = "report.json";
    rep->add_option("--stage", rep_stages, "name=decode.jsonl, ensembled in order")
        ->required()
        ->expected(-1);
    rep->add_option("--map", rep_map, "production map jsonl")->required();
    rep->add_option("--catalog", rep_catalog, "catalog.txt")->required();
    rep->add_option("--corpus", out_dir, "corpus directory (vocabulary)")->required();
    rep->add_option("--evaluator", rep_evaluator, "evaluator checkpoint")->required();
    rep->add_option("--tau", cfg.tau, "global quality threshold");
    rep->add_option("--report-out", rep_report, "report destination");
    rep->add_option("--seed", cfg.seed, "seed echoed into the report");

    auto* pipe = app.add_subcommand("pipeline", "run every stage end to end");
    add_common_options(pipe, cfg, out_dir);
    add_corpus_options(pipe, cfg);
    add_model_options(pipe, cfg);
    add_sup_options(pipe, cfg);
    pipe->add_option("--eval-epochs", cfg.eval_cfg.epochs, "evaluator epochs");
    pipe->add_option("--eval-lr", cfg.eval_cfg.learning_rate, "evaluator learning rate");
    pipe->add_option("--eval-emb", cfg.eval_emb_dim, "evaluator embedding width");
    add_rl_options(pipe, cfg);
    add_metric_options(pipe, cfg);

    CLI11_PARSE(app, argc, argv);

    PipelinePaths paths{out_dir};
    if (gen->parsed()) {
        clover::stage_gen_corpus(cfg, paths);
    } else if (tsup->parsed()) {
        clover::stage_train_sup(cfg, paths);
    } else if (teval->parsed()) {
        clover::stage_train_eval(cfg, paths);
    } else if (trl->parsed()) {
        clover::stage_train_rl(cfg, paths);
    } else if (dec->parsed()) {
        clover::stage_decode(cfg, paths, dec_policy, dec_algo, cfg.decode_beam, cfg.decode_gamma,
                             dec_out);
    } else if (ev->parsed() || rep->parsed()) {
        bool single = ev->parsed();
        clover::SyntheticCorpus corpus = clover::load_corpus(out_dir);
        clover::KeywordCatalog catalog =
            clover::load_catalog(single ? ev_catalog : rep_catalog, corpus.vocab);
        clover::KeywordTrie trie = clover::build_trie(catalog);
        clover::ProductionMap map =
            clover::load_production_map(single ? ev_map : rep_map, corpus.vocab);
        clover::EvaluatorModel evaluator =
            clover::load_evaluator(single ? ev_evaluator : rep_evaluator);

        std::vector<std::pair<std::string, std::filesystem::path>> stages;
        if (single) {
            stages.emplace_back("rewrites", ev_rewrites);
        } else {
            for (const std::string& s : rep_stages) {
                auto eq = s.find('=');
                if (eq == std::string::npos)
                    throw clover::ConfigError("--stage expects name=path, got " + s);
                stages.emplace_back(s.substr(0, eq), s.substr(eq + 1));
            }
        }
        clover::EvalReport report =
            clover::evaluate_stages(stages, corpus, trie, map, evaluator, cfg.tau);
        clover::save_report(report, single ? ev_report : rep_report, cfg.config_hash(), cfg.seed);
        for (const auto& s : report.ensemble.stages)
            std::fprintf(stderr, "%-28s retrieved %.3f net-new %.3f\n", s.name.c_str(),
                         s.retrieved, s.net_new);
    } else if (pipe->parsed()) {
        clover::EvalReport report = clover::run_pipeline(cfg, paths);
        for (const auto& s : report.ensemble.stages)
            std::fprintf(stderr, "%-28s retrieved %.3f net-new %.3f\n", s.name.c_str(),
                         s.retrieved, s.net_new);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const clover::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "unexpected error: %s\n", e.what());
        return 2;
    }
}

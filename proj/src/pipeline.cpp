#include "clover/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "clover/checkpoint.hpp"
#include "clover/decoder.hpp"
#include "clover/parallel.hpp"
#include "clover/rng.hpp"

namespace clover {

void RunConfig::validate() const {
    if (embed < 1 || hidden < 1 || max_len < 2) throw ConfigError("bad policy dimensions");
    if (sup_epochs < 0 || rl_epochs < 0) throw ConfigError("epochs must be >= 0");
    if (tau < 0.0 || tau > 1.0) throw ConfigError("tau must be in [0, 1]");
    if (rl_algorithm != "reinforce" && rl_algorithm != "reinforce_baseline" &&
        rl_algorithm != "diversity_rl")
        throw ConfigError("unknown rl algorithm: " + rl_algorithm);
    if (map_keywords_per_query < 0) throw ConfigError("map_keywords_per_query must be >= 0");
    if (eval_queries_cap < 1) throw ConfigError("eval_queries_cap must be >= 1");
}

std::string RunConfig::dump() const {
    std::ostringstream out;
    out << "seed=" << seed << '\n';
    out << "corpus.num_intents=" << corpus_spec.num_intents << '\n';
    out << "corpus.synonyms_per_slot=" << corpus_spec.synonyms_per_slot << '\n';
    out << "corpus.realizations_per_intent=" << corpus_spec.realizations_per_intent << '\n';
    out << "corpus.vocab_budget=" << corpus_spec.vocab_budget << '\n';
    out << "split.train=" << ratios.train << '\n';
    out << "split.val=" << ratios.val << '\n';
    out << "split.test=" << ratios.test << '\n';
    out << "model.embed=" << embed << '\n';
    out << "model.hidden=" << hidden << '\n';
    out << "model.max_len=" << max_len << '\n';
    out << "sup.n=" << sup.n << '\n';
    out << "sup.alpha=";
    for (std::size_t i = 0; i < sup.alpha_weights.size(); ++i)
        out << (i ? "," : "") << sup.alpha_weights[i];
    out << '\n';
    out << "sup.learning_rate=" << sup.learning_rate << '\n';
    out << "sup.batch_size=" << sup.batch_size << '\n';
    out << "sup.label_smoothing=" << sup.label_smoothing << '\n';
    out << "sup.optimizer=" << sup.optimizer << '\n';
    out << "sup.adam_beta1=" << sup.adam_beta1 << '\n';
    out << "sup.adam_beta2=" << sup.adam_beta2 << '\n';
    out << "sup.epochs=" << sup_epochs << '\n';
    out << "eval.emb_dim=" << eval_emb_dim << '\n';
    out << "eval.learning_rate=" << eval_cfg.learning_rate << '\n';
    out << "eval.epochs=" << eval_cfg.epochs << '\n';
    out << "rl.algorithm=" << rl_algorithm << '\n';
    out << "rl.beam=" << rl_beam << '\n';
    out << "rl.gamma=" << rl_gamma << '\n';
    out << "rl.alpha=" << rl_alpha << '\n';
    out << "rl.use_reference=" << (rl_use_reference ? 1 : 0) << '\n';
    out << "rl.use_trie=" << (rl_use_trie ? 1 : 0) << '\n';
    out << "rl.batch=" << rl_batch << '\n';
    out << "rl.learning_rate=" << rl_lr << '\n';
    out << "rl.epochs=" << rl_epochs << '\n';
    out << "rl.log_interval=" << rl_log_interval << '\n';
    out << "decode.beam=" << decode_beam << '\n';
    out << "decode.gamma=" << decode_gamma << '\n';
    out << "metrics.tau=" << tau << '\n';
    out << "map.keywords_per_query=" << map_keywords_per_query << '\n';
    out << "eval_queries_cap=" << eval_queries_cap << '\n';
    return out.str();
}

std::string RunConfig::config_hash() const {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(hash_str64(dump())));
    return std::string(buf);
}

std::uint64_t RunConfig::stage_seed(const std::string& stage) const {
    return mix_seed({seed, hash_str64(stage)});
}

PolicyDims RunConfig::policy_dims(int vocab) const {
    PolicyDims dims;
    dims.vocab = vocab;
    dims.embed = embed;
    dims.hidden = hidden;
    dims.max_len = max_len;
    dims.horizon = sup.n;
    return dims;
}

RLAlgo RunConfig::rl_algo() const {
    if (rl_algorithm == "reinforce") return RLAlgo::reinforce;
    if (rl_algorithm == "reinforce_baseline") return RLAlgo::reinforce_baseline;
    return RLAlgo::diversity_rl;
}

std::vector<TokenSeq> distinct_queries(const RewriteDataset& dataset, int cap) {
    std::vector<TokenSeq> out;
    std::set<TokenSeq> seen;
    for (const auto& p : dataset.pairs) {
        if (static_cast<int>(out.size()) >= cap) break;
        if (seen.insert(p.query).second) out.push_back(p.query);
    }
    return out;
}

ProductionMap build_base_map(const RewriteDataset& dataset, std::span<const TokenSeq> queries,
                             const EvaluatorModel& evaluator, int keywords_per_query) {
    std::set<TokenSeq> wanted(queries.begin(), queries.end());
    std::map<TokenSeq, int> count;
    ProductionMap map;
    for (const auto& p : dataset.pairs) {
        if (!wanted.count(p.query)) continue;
        int& c = count[p.query];
        if (c >= keywords_per_query) continue;
        if (map.has_keyword(p.query, p.rewrite)) continue;
        map.add(p.query, p.rewrite, quality_score(evaluator, p.rewrite, p.query));
        ++c;
    }
    return map;
}

namespace {

// In-place Adam over the tensor list; moments live alongside the params.
void adam_update(PolicyParams& params, const PolicyParams& grad, PolicyParams& m, PolicyParams& v,
                 int t, const SupervisedConfig& cfg) {
    std::vector<const std::vector<double>*> gs;
    grad.for_each_tensor([&gs](const char*, const std::vector<double>& g) { gs.push_back(&g); });
    std::vector<std::vector<double>*> ms, vs;
    m.for_each_tensor([&ms](const char*, std::vector<double>& x) { ms.push_back(&x); });
    v.for_each_tensor([&vs](const char*, std::vector<double>& x) { vs.push_back(&x); });
    double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
    double bc1 = 1.0 - std::pow(b1, t), bc2 = 1.0 - std::pow(b2, t);
    std::size_t idx = 0;
    params.for_each_tensor([&](const char*, std::vector<double>& w) {
        const std::vector<double>& g = *gs[idx];
        std::vector<double>& mm = *ms[idx];
        std::vector<double>& vv = *vs[idx];
        for (std::size_t i = 0; i < w.size(); ++i) {
            mm[i] = b1 * mm[i] + (1.0 - b1) * g[i];
            vv[i] = b2 * vv[i] + (1.0 - b2) * g[i] * g[i];
            double mhat = mm[i] / bc1;
            double vhat = vv[i] / bc2;
            w[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_eps);
        }
        ++idx;
    });
}

}  // namespace

std::vector<double> train_supervised(PolicyParams& params, const RewriteDataset& train,
                                     const SupervisedConfig& config, int epochs,
                                     std::uint64_t seed, int threads) {
    if (train.pairs.empty()) throw ContractError("supervised training needs a nonempty dataset");
    config.validate(params.dims);
    const std::size_t n = train.pairs.size();
    const std::size_t bs = static_cast<std::size_t>(config.batch_size);

    PolicyParams m = zeros_like(params.dims), v = zeros_like(params.dims);
    int adam_t = 0;
    std::vector<double> epoch_losses;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        std::vector<std::size_t> order(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        Rng perm(mix_seed({seed, hash_str64("sup-perm"), static_cast<std::uint64_t>(epoch)}));
        perm.shuffle(order);

        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t at = 0; at < n; at += bs, ++batches) {
            std::vector<RewritePair> batch;
            for (std::size_t k = at; k < std::min(n, at + bs); ++k)
                batch.push_back(train.pairs[order[k]]);
            if (config.optimizer == "adam") {
                SupervisedBatch b = supervised_batch(params, batch, config, threads);
                adam_update(params, b.grad, m, v, ++adam_t, config);
                loss_sum += b.loss;
            } else {
                loss_sum += supervised_step(params, batch, config, threads);
            }
        }
        epoch_losses.push_back(loss_sum / static_cast<double>(batches));
    }
    return epoch_losses;
}

SyntheticCorpus stage_gen_corpus(const RunConfig& cfg, const PipelinePaths& paths) {
    cfg.validate();
    SyntheticCorpus corpus = generate_corpus(cfg.corpus_spec, cfg.stage_seed("corpus"));
    save_corpus(corpus, paths.corpus_dir());
    write_manifest(cfg, paths);
    return corpus;
}

namespace {

DatasetSplits pipeline_splits(const RunConfig& cfg, const SyntheticCorpus& corpus) {
    return split_dataset(corpus.dataset, cfg.ratios, cfg.stage_seed("split"));
}

}  // namespace

void stage_train_sup(const RunConfig& cfg, const PipelinePaths& paths) {
    cfg.validate();
    SyntheticCorpus corpus = load_corpus(paths.corpus_dir());
    DatasetSplits splits = pipeline_splits(cfg, corpus);
    PolicyParams params = init_params(cfg.policy_dims(corpus.vocab.size()),
                                      cfg.stage_seed("policy-init"));
    std::vector<double> losses = train_supervised(params, splits.train, cfg.sup, cfg.sup_epochs,
                                                  cfg.stage_seed("sup"), cfg.threads);
    if (!losses.empty())
        std::fprintf(stderr, "supervised: %d epochs, loss %.4f -> %.4f\n", cfg.sup_epochs,
                     losses.front(), losses.back());
    nlohmann::ordered_json meta;
    meta["config_hash"] = cfg.config_hash();
    meta["seed"] = cfg.seed;
    meta["stage"] = "supervised";
    save_policy(params, paths.policy_sup(), meta);
}

void stage_train_eval(const RunConfig& cfg, const PipelinePaths& paths) {
    cfg.validate();
    SyntheticCorpus corpus = load_corpus(paths.corpus_dir());
    DatasetSplits splits = pipeline_splits(cfg, corpus);

    std::vector<RatedPair> ratings =
        synthesize_ratings(corpus, splits.train, cfg.stage_seed("ratings"));
    save_ratings(ratings, corpus.vocab, paths.labels());
    std::vector<LabeledPair> labeled = binarize_ratings(ratings);

    EvaluatorModel model = make_evaluator(corpus, cfg.eval_emb_dim, cfg.stage_seed("eval-embed"));
    train_evaluator(model, labeled, cfg.eval_cfg, cfg.threads);
    save_evaluator(model, paths.evaluator_ckpt());

    // Held-out sanity number; the acceptance suite checks it formally.
    const RewriteDataset& held = splits.val.pairs.empty() ? splits.test : splits.val;
    if (!held.pairs.empty()) {
        std::vector<LabeledPair> test = binarize_ratings(
            synthesize_ratings(corpus, held, cfg.stage_seed("ratings-heldout")));
        std::fprintf(stderr, "evaluator: held-out AUC %.4f\n", evaluator_auc(model, test));
    }
}

namespace {

RLConfig make_rl_config(const RunConfig& cfg, const KeywordTrie* trie, int policy_max_len) {
    RLConfig rl;
    rl.algorithm = cfg.rl_algo();
    rl.decoder_spec.algorithm = rl.algorithm == RLAlgo::diversity_rl ? DecodeAlgo::diverse_sibling
                                                                     : DecodeAlgo::sample;
    rl.decoder_spec.beam_size = cfg.rl_beam;
    rl.decoder_spec.diversity_strength = cfg.rl_gamma;
    rl.decoder_spec.trie = cfg.rl_use_trie ? trie : nullptr;
    rl.decoder_spec.max_len = policy_max_len;
    rl.decoder_spec.seed = cfg.stage_seed("rl-decode");
    rl.reward_spec.alpha = cfg.rl_alpha;
    rl.reward_spec.use_reference = cfg.rl_use_reference;
    rl.batch_size = cfg.rl_batch;
    rl.learning_rate = cfg.rl_lr;
    rl.epochs = cfg.rl_epochs;
    rl.entropy_log_interval = cfg.rl_log_interval;
    rl.seed = cfg.stage_seed("rl");
    return rl;
}

}  // namespace

void stage_train_rl(const RunConfig& cfg, const PipelinePaths& paths) {
    cfg.validate();
    if (!std::filesystem::exists(paths.policy_sup()))
        throw DataError("missing supervised checkpoint " + paths.policy_sup().string() +
                        "; run train-sup first");
    SyntheticCorpus corpus = load_corpus(paths.corpus_dir());
    DatasetSplits splits = pipeline_splits(cfg, corpus);
    auto [params, meta] = load_policy(paths.policy_sup());

    KeywordCatalog catalog{corpus.keyword_catalog};
    KeywordTrie trie = build_trie(catalog);
    EvaluatorModel evaluator = load_evaluator(paths.evaluator_ckpt());

    RLConfig rl = make_rl_config(cfg, &trie, params.dims.max_len);
    TrainTrace trace = train_rl(params, splits.train, rl, evaluator, cfg.threads);
    save_trace(trace, paths.trace());
    if (trace.records.size() >= 2)
        std::fprintf(stderr, "rl: entropy %.4f -> %.4f, reward %.4f -> %.4f\n",
                     trace.records.front().entropy, trace.records.back().entropy,
                     trace.records.front().mean_reward, trace.records.back().mean_reward);

    nlohmann::ordered_json rl_meta;
    rl_meta["config_hash"] = cfg.config_hash();
    rl_meta["seed"] = cfg.seed;
    rl_meta["stage"] = "rl";
    rl_meta["algorithm"] = cfg.rl_algorithm;
    save_policy(params, paths.policy_rl(), rl_meta);
}

void stage_decode(const RunConfig& cfg, const PipelinePaths& paths,
                  const std::filesystem::path& policy_ckpt, const std::string& algo, int beam,
                  double gamma, const std::filesystem::path& out_file) {
    cfg.validate();
    SyntheticCorpus corpus = load_corpus(paths.corpus_dir());
    DatasetSplits splits = pipeline_splits(cfg, corpus);
    auto [params, meta] = load_policy(policy_ckpt);

    KeywordCatalog catalog{corpus.keyword_catalog};
    KeywordTrie trie = build_trie(catalog);

    DecoderSpec spec;
    if (algo == "beam")
        spec.algorithm = DecodeAlgo::beam;
    else if (algo == "diverse_sibling")
        spec.algorithm = DecodeAlgo::diverse_sibling;
    else if (algo == "sample")
        spec.algorithm = DecodeAlgo::sample;
    else
        throw ConfigError("unknown decode algorithm: " + algo);
    spec.beam_size = beam;
    spec.diversity_strength = gamma;
    spec.trie = &trie;
    spec.max_len = params.dims.max_len;
    spec.seed = cfg.stage_seed("decode");

    std::vector<TokenSeq> queries = distinct_queries(splits.train, cfg.eval_queries_cap);
    std::vector<BatchDecodeEntry> decodes = batch_decode(params, queries, spec, cfg.threads);
    std::filesystem::create_directories(out_file.parent_path());
    save_decodes(decodes, corpus.vocab, out_file);
}

EvalReport evaluate_stages(const std::vector<std::pair<std::string, std::filesystem::path>>& stages,
                           const SyntheticCorpus& corpus, const KeywordTrie& trie,
                           const ProductionMap& base_map, const EvaluatorModel& evaluator,
                           double tau) {
    if (stages.empty()) throw ContractError("evaluate_stages needs at least one stage");

    // Queries come from the first stage's decode file; all stages must align.
    std::vector<BatchDecodeEntry> first = load_decodes(stages.front().second, corpus.vocab);
    std::vector<TokenSeq> queries;
    for (const auto& e : first) queries.push_back(e.query);

    std::vector<EnsembleStage> ensemble_stages;
    std::vector<std::vector<ScoredRewrite>> last_filtered;
    for (const auto& [name, file] : stages) {
        std::vector<BatchDecodeEntry> decodes = load_decodes(file, corpus.vocab);
        if (decodes.size() != queries.size())
            throw DataError("decode file " + file.string() + " does not align with the first stage");
        EnsembleStage stage;
        stage.name = name;
        stage.per_query.resize(queries.size());
        for (std::size_t q = 0; q < decodes.size(); ++q) {
            std::vector<ScoredRewrite> scored;
            for (const Hypothesis& h : decodes[q].result.hypotheses)
                scored.push_back(
                    {h.tokens, quality_score(evaluator, h.tokens, decodes[q].query), name});
            stage.per_query[q] = filter_cascade(scored, trie, base_map, decodes[q].query, tau);
        }
        last_filtered = stage.per_query;
        ensemble_stages.push_back(std::move(stage));
    }

    EvalReport report;
    report.ensemble = ensemble(ensemble_stages, queries, base_map);
    report.unique_hq_per_query = unique_hq_count(last_filtered);
    report.distinct1 = distinct_ngram_scored(last_filtered, 1);
    report.distinct2 = distinct_ngram_scored(last_filtered, 2);
    return report;
}

void write_manifest(const RunConfig& cfg, const PipelinePaths& paths) {
    std::filesystem::create_directories(paths.root);
    nlohmann::ordered_json j;
    j["config_hash"] = cfg.config_hash();
    j["seed"] = cfg.seed;
    j["config"] = cfg.dump();
    std::ofstream out(paths.manifest(), std::ios::binary);
    out << j.dump(2) << '\n';
}

EvalReport run_pipeline(const RunConfig& cfg, const PipelinePaths& paths) {
    cfg.validate();
    std::filesystem::create_directories(paths.decodes_dir());

    stage_gen_corpus(cfg, paths);
    stage_train_sup(cfg, paths);
    stage_train_eval(cfg, paths);
    stage_train_rl(cfg, paths);

    SyntheticCorpus corpus = load_corpus(paths.corpus_dir());
    DatasetSplits splits = pipeline_splits(cfg, corpus);
    KeywordCatalog catalog{corpus.keyword_catalog};
    KeywordTrie trie = build_trie(catalog);
    EvaluatorModel evaluator = load_evaluator(paths.evaluator_ckpt());

    std::vector<TokenSeq> queries = distinct_queries(splits.train, cfg.eval_queries_cap);
    ProductionMap base_map =
        build_base_map(splits.train, queries, evaluator, cfg.map_keywords_per_query);
    save_production_map(base_map, corpus.vocab, paths.production_map());

    auto beam_sup = paths.decodes_dir() / "beam_sup.jsonl";
    auto dss_sup = paths.decodes_dir() / "dss_sup.jsonl";
    auto dss_rl = paths.decodes_dir() / "dss_rl.jsonl";
    stage_decode(cfg, paths, paths.policy_sup(), "beam", cfg.decode_beam, 0.0, beam_sup);
    stage_decode(cfg, paths, paths.policy_sup(), "diverse_sibling", cfg.decode_beam,
                 cfg.decode_gamma, dss_sup);
    stage_decode(cfg, paths, paths.policy_rl(), "diverse_sibling", cfg.decode_beam,
                 cfg.decode_gamma, dss_rl);

    EvalReport report = evaluate_stages({{"beam_supervised", beam_sup},
                                         {"diverse_sibling_supervised", dss_sup},
                                         {"diversity_rl", dss_rl}},
                                        corpus, trie, base_map, evaluator, cfg.tau);
    save_report(report, paths.report(), cfg.config_hash(), cfg.seed);
    return report;
}

}  // namespace clover

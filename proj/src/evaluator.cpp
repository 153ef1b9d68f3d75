#include "clover/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "clover/checkpoint.hpp"
#include "clover/parallel.hpp"
#include "clover/rng.hpp"

namespace clover {

const std::array<const char*, EvaluatorModel::kNumFeatures>& EvaluatorModel::feature_names() {
    static const std::array<const char*, kNumFeatures> names = {
        "token_jaccard", "class_jaccard", "length_ratio", "embedding_cosine"};
    return names;
}

EvaluatorModel make_evaluator(const SyntheticCorpus& corpus, int emb_dim, std::uint64_t seed) {
    if (emb_dim < 1) throw ConfigError("evaluator emb_dim must be >= 1");
    EvaluatorModel model;
    model.emb_dim = emb_dim;
    model.vocab_size = corpus.vocab.size();

    // Content-slot synonym groups share a class; every other word (fillers,
    // the end marker) is its own class.
    model.word_class.assign(static_cast<std::size_t>(model.vocab_size), -1);
    std::int32_t next_class = 0;
    for (const IntentClass& intent : corpus.intents)
        for (int slot = 0; slot < 2; ++slot) {
            for (TokenId w : intent.slot_words[static_cast<std::size_t>(slot)])
                model.word_class[static_cast<std::size_t>(w)] = next_class;
            ++next_class;
        }
    for (std::size_t w = 0; w < model.word_class.size(); ++w)
        if (model.word_class[w] < 0) model.word_class[w] = next_class++;

    Rng rng(mix_seed({seed, hash_str64("evaluator-embed")}));
    model.embed.resize(static_cast<std::size_t>(model.vocab_size) * emb_dim);
    for (double& x : model.embed) x = rng.uniform(-1.0, 1.0);
    return model;
}

namespace {

double jaccard(const std::set<std::int32_t>& a, const std::set<std::int32_t>& b) {
    if (a.empty() && b.empty()) return 1.0;
    std::size_t inter = 0;
    for (std::int32_t x : a) inter += b.count(x);
    std::size_t uni = a.size() + b.size() - inter;
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

std::array<double, EvaluatorModel::kNumFeatures> pair_features(const EvaluatorModel& model,
                                                               const TokenSeq& rewrite,
                                                               const TokenSeq& anchor) {
    auto rc = rewrite.content();
    auto ac = anchor.content();

    std::set<std::int32_t> r_tok(rc.begin(), rc.end());
    std::set<std::int32_t> a_tok(ac.begin(), ac.end());
    std::set<std::int32_t> r_cls, a_cls;
    for (TokenId t : rc) r_cls.insert(model.word_class.at(static_cast<std::size_t>(t)));
    for (TokenId t : ac) a_cls.insert(model.word_class.at(static_cast<std::size_t>(t)));

    double len_ratio;
    if (rc.empty() && ac.empty())
        len_ratio = 1.0;
    else if (rc.empty() || ac.empty())
        len_ratio = 0.0;
    else
        len_ratio = static_cast<double>(std::min(rc.size(), ac.size())) /
                    static_cast<double>(std::max(rc.size(), ac.size()));

    const int D = model.emb_dim;
    std::vector<double> rm(static_cast<std::size_t>(D), 0.0), am(static_cast<std::size_t>(D), 0.0);
    for (TokenId t : rc)
        for (int k = 0; k < D; ++k)
            rm[static_cast<std::size_t>(k)] += model.embed[static_cast<std::size_t>(t) * D + k];
    for (TokenId t : ac)
        for (int k = 0; k < D; ++k)
            am[static_cast<std::size_t>(k)] += model.embed[static_cast<std::size_t>(t) * D + k];
    double rr = 0.0, aa = 0.0, ra = 0.0;
    for (int k = 0; k < D; ++k) {
        rr += rm[static_cast<std::size_t>(k)] * rm[static_cast<std::size_t>(k)];
        aa += am[static_cast<std::size_t>(k)] * am[static_cast<std::size_t>(k)];
        ra += rm[static_cast<std::size_t>(k)] * am[static_cast<std::size_t>(k)];
    }
    double cosine = (rr > 0.0 && aa > 0.0) ? ra / (std::sqrt(rr) * std::sqrt(aa)) : 0.0;

    return {jaccard(r_tok, a_tok), jaccard(r_cls, a_cls), len_ratio, cosine};
}

double quality_score(const EvaluatorModel& model, const TokenSeq& rewrite, const TokenSeq& anchor) {
    auto f = pair_features(model, rewrite, anchor);
    double z = model.bias;
    for (int i = 0; i < EvaluatorModel::kNumFeatures; ++i)
        z += model.weights[static_cast<std::size_t>(i)] * f[static_cast<std::size_t>(i)];
    return sigmoid(z);
}

std::vector<double> train_evaluator(EvaluatorModel& model, std::span<const LabeledPair> labeled,
                                    const EvaluatorConfig& config, int threads) {
    if (config.learning_rate <= 0.0) throw ConfigError("evaluator learning_rate must be positive");
    if (config.epochs < 0) throw ConfigError("evaluator epochs must be >= 0");

    bool has_pos = false, has_neg = false;
    std::map<std::pair<TokenSeq, TokenSeq>, int> seen;
    for (const LabeledPair& ex : labeled) {
        if (ex.label != 0 && ex.label != 1) throw DataError("labels must be 0 or 1");
        (ex.label ? has_pos : has_neg) = true;
        auto key = std::make_pair(ex.query, ex.rewrite);
        auto it = seen.find(key);
        if (it != seen.end() && it->second != ex.label)
            throw DataError("conflicting labels for a duplicate (query, rewrite) pair");
        seen.emplace(key, ex.label);
    }
    if (!has_pos || !has_neg)
        throw DataError("evaluator training needs both positive and negative examples");

    const std::size_t n = labeled.size();
    std::vector<std::array<double, EvaluatorModel::kNumFeatures>> feats(n);
    par::for_index(n, threads, [&](std::size_t i) {
        feats[i] = pair_features(model, labeled[i].rewrite, labeled[i].query);
    });

    std::vector<double> losses;
    losses.reserve(static_cast<std::size_t>(config.epochs));
    const double inv_n = 1.0 / static_cast<double>(n);
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::array<double, EvaluatorModel::kNumFeatures> gw{};
        double gb = 0.0, loss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double z = model.bias;
            for (int k = 0; k < EvaluatorModel::kNumFeatures; ++k)
                z += model.weights[static_cast<std::size_t>(k)] * feats[i][static_cast<std::size_t>(k)];
            double s = sigmoid(z);
            double y = static_cast<double>(labeled[i].label);
            // clamp for the log only; the gradient uses the exact sigmoid
            double sc = std::min(std::max(s, 1e-12), 1.0 - 1e-12);
            loss -= y * std::log(sc) + (1.0 - y) * std::log(1.0 - sc);
            double d = s - y;
            for (int k = 0; k < EvaluatorModel::kNumFeatures; ++k)
                gw[static_cast<std::size_t>(k)] += d * feats[i][static_cast<std::size_t>(k)];
            gb += d;
        }
        for (int k = 0; k < EvaluatorModel::kNumFeatures; ++k)
            model.weights[static_cast<std::size_t>(k)] -= config.learning_rate * gw[static_cast<std::size_t>(k)] * inv_n;
        model.bias -= config.learning_rate * gb * inv_n;
        losses.push_back(loss * inv_n);
    }
    return losses;
}

void RewardSpec::validate() const {
    if (alpha < 0.0 || alpha > 1.0) throw ConfigError("reward alpha must be in [0, 1]");
}

double reward(const EvaluatorModel& model, const TokenSeq& rewrite, const TokenSeq& query,
              const std::optional<TokenSeq>& reference, const RewardSpec& spec) {
    spec.validate();
    if (!spec.use_reference) return quality_score(model, rewrite, query);
    if (!reference.has_value())
        throw ContractError("reward with use_reference requires a reference rewrite");
    return spec.alpha * quality_score(model, rewrite, query) +
           (1.0 - spec.alpha) * quality_score(model, rewrite, *reference);
}

double auc_from_scores(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw ContractError("scores and labels must align");
    std::vector<std::pair<double, int>> scored;
    scored.reserve(scores.size());
    std::size_t pos = 0, neg = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        scored.emplace_back(scores[i], labels[i]);
        (labels[i] ? pos : neg) += 1;
    }
    if (pos == 0 || neg == 0) throw DataError("AUC needs both classes in the test set");

    // Mann-Whitney with midranks for ties.
    std::sort(scored.begin(), scored.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    double pos_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < scored.size()) {
        std::size_t j = i;
        while (j < scored.size() && scored[j].first == scored[i].first) ++j;
        double midrank = 0.5 * static_cast<double>(i + 1 + j);  // average of ranks i+1..j
        for (std::size_t k = i; k < j; ++k)
            if (scored[k].second == 1) pos_rank_sum += midrank;
        i = j;
    }
    double p = static_cast<double>(pos), q = static_cast<double>(neg);
    return (pos_rank_sum - p * (p + 1.0) / 2.0) / (p * q);
}

double evaluator_auc(const EvaluatorModel& model, std::span<const LabeledPair> test) {
    std::vector<double> scores;
    std::vector<int> labels;
    scores.reserve(test.size());
    labels.reserve(test.size());
    for (const LabeledPair& ex : test) {
        scores.push_back(quality_score(model, ex.rewrite, ex.query));
        labels.push_back(ex.label);
    }
    return auc_from_scores(scores, labels);
}

std::vector<RatedPair> synthesize_ratings(const SyntheticCorpus& corpus,
                                          const RewriteDataset& dataset, std::uint64_t seed) {
    if (corpus.intents.size() < 2)
        throw DataError("negative sampling needs at least two intents");
    Rng rng(mix_seed({seed, hash_str64("ratings")}));

    // Intents actually present in this dataset (splits see a subset).
    std::set<int> present;
    for (const auto& p : dataset.pairs) present.insert(p.intent);
    std::vector<int> intent_ids(present.begin(), present.end());

    // Swap one content word of seq for the same-slot word of another intent.
    auto one_synonym_off = [&rng](TokenSeq seq, const IntentClass& own,
                                  const IntentClass& other) {
        for (TokenId& t : seq.ids) {
            for (int slot = 0; slot < 2; ++slot) {
                const auto& group = own.slot_words[static_cast<std::size_t>(slot)];
                if (std::find(group.begin(), group.end(), t) != group.end()) {
                    const auto& other_group = other.slot_words[static_cast<std::size_t>(slot)];
                    t = other_group[rng.next_below(other_group.size())];
                    return seq;
                }
            }
        }
        return seq;
    };

    std::vector<RatedPair> out;
    out.reserve(dataset.pairs.size() * 4);
    for (const auto& p : dataset.pairs) {
        const IntentClass& own = corpus.intents.at(static_cast<std::size_t>(p.intent));

        // dataset pair plus a random same-intent rewrite, so positive ratings
        // cover lexically diverse realizations the way production rewrites do
        out.push_back({p.query, p.rewrite, 4});
        if (own.realizations.size() > 1) {
            TokenSeq diverse = p.query;
            while (diverse == p.query)
                diverse = own.realizations[rng.next_below(own.realizations.size())];
            out.push_back({p.query, diverse, 4});
        }

        int other = p.intent;
        while (other == p.intent)
            other = intent_ids.size() > 1
                        ? intent_ids[rng.next_below(intent_ids.size())]
                        : static_cast<int>(rng.next_below(corpus.intents.size()));
        const IntentClass& other_intent = corpus.intents.at(static_cast<std::size_t>(other));

        TokenSeq cross =
            other_intent.realizations[rng.next_below(other_intent.realizations.size())];
        if (!oracle_quality(p.query, cross, corpus)) out.push_back({p.query, cross, 2});

        TokenSeq hard = one_synonym_off(p.rewrite, own, other_intent);
        if (!(hard == p.rewrite) && !oracle_quality(p.query, hard, corpus))
            out.push_back({p.query, hard, 2});
    }
    return out;
}

std::vector<LabeledPair> binarize_ratings(std::span<const RatedPair> rated) {
    std::vector<LabeledPair> out;
    out.reserve(rated.size());
    for (const RatedPair& r : rated) {
        if (r.rating < 1 || r.rating > 5) throw DataError("ratings must be on the 1..5 scale");
        out.push_back({r.query, r.rewrite, r.rating >= 3 ? 1 : 0});
    }
    return out;
}

void save_ratings(std::span<const RatedPair> rated, const Vocab& vocab,
                  const std::filesystem::path& file) {
    std::ofstream out(file, std::ios::binary);
    for (const RatedPair& r : rated) {
        nlohmann::ordered_json j;
        j["query"] = detokenize(r.query, vocab);
        j["rewrite"] = detokenize(r.rewrite, vocab);
        j["rating"] = r.rating;
        out << j.dump() << '\n';
    }
}

std::vector<RatedPair> load_ratings(const std::filesystem::path& file, const Vocab& vocab) {
    std::ifstream in(file);
    if (!in) throw DataError("cannot open ratings file " + file.string());
    std::vector<RatedPair> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        out.push_back({tokenize(j["query"].get<std::string>(), vocab),
                       tokenize(j["rewrite"].get<std::string>(), vocab), j["rating"].get<int>()});
    }
    return out;
}

void save_evaluator(const EvaluatorModel& model, const std::filesystem::path& path) {
    TensorFile file;
    file.meta["kind"] = "evaluator";
    file.meta["features"] = EvaluatorModel::feature_names();
    file.meta["emb_dim"] = model.emb_dim;
    file.meta["vocab"] = model.vocab_size;
    file.meta["word_class"] = model.word_class;
    file.tensors.emplace_back("weights",
                              std::vector<double>(model.weights.begin(), model.weights.end()));
    file.tensors.emplace_back("bias", std::vector<double>{model.bias});
    file.tensors.emplace_back("embed", model.embed);
    write_tensor_file(path, file);
}

EvaluatorModel load_evaluator(const std::filesystem::path& path) {
    TensorFile file = read_tensor_file(path);
    if (file.meta.value("kind", "") != "evaluator")
        throw DataError("checkpoint is not an evaluator: " + path.string());
    EvaluatorModel model;
    model.emb_dim = file.meta["emb_dim"];
    model.vocab_size = file.meta["vocab"];
    model.word_class = file.meta["word_class"].get<std::vector<std::int32_t>>();
    const auto& w = file.tensors.at(0).second;
    std::copy(w.begin(), w.end(), model.weights.begin());
    model.bias = file.tensors.at(1).second.at(0);
    model.embed = file.tensors.at(2).second;
    return model;
}

}  // namespace clover

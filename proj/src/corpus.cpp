#include "clover/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "clover/rng.hpp"

namespace clover {

namespace {

const std::vector<std::string>& filler_pool() {
    static const std::vector<std::string> fillers = {"in", "for"};
    return fillers;
}

// Pronounceable synthetic word, distinct from everything already in vocab.
std::string fresh_word(Rng& rng, const Vocab& vocab) {
    static const char consonants[] = "bdfghklmnprstvz";
    static const char vowels[] = "aeiou";
    for (int attempt = 0; attempt < 1000; ++attempt) {
        int syllables = 2 + static_cast<int>(rng.next_below(2));
        std::string w;
        for (int s = 0; s < syllables; ++s) {
            w += consonants[rng.next_below(sizeof(consonants) - 1)];
            w += vowels[rng.next_below(sizeof(vowels) - 1)];
        }
        if (!vocab.contains(w)) return w;
    }
    throw ConfigError("could not draw a fresh word; vocabulary too dense");
}

void check_spec(const CorpusSpec& spec) {
    if (spec.num_intents < 1) throw ConfigError("num_intents must be >= 1");
    if (spec.synonyms_per_slot < 1) throw ConfigError("synonyms_per_slot must be >= 1");
    if (spec.realizations_per_intent < 1) throw ConfigError("realizations_per_intent must be >= 1");
    int words_needed = spec.num_intents * 2 * spec.synonyms_per_slot +
                       static_cast<int>(filler_pool().size()) + 1;  // + end marker
    if (words_needed > spec.vocab_budget)
        throw ConfigError("vocab_budget " + std::to_string(spec.vocab_budget) +
                          " too small; corpus needs " + std::to_string(words_needed) + " words");
}

}  // namespace

std::vector<TokenSeq> IntentClass::enumerate_expansions() const {
    const auto& a = slot_words[0];
    const auto& b = slot_words[1];
    const auto& f = slot_words[2];
    std::vector<TokenSeq> out;
    auto emit = [&out](std::initializer_list<TokenId> ids) {
        TokenSeq s;
        s.ids.assign(ids.begin(), ids.end());
        s.ids.push_back(kEndToken);
        out.push_back(std::move(s));
    };
    for (TokenId wa : a)
        for (TokenId wb : b) emit({wa, wb});
    for (TokenId wa : a)
        for (TokenId wb : b) emit({wb, wa});
    for (TokenId wf : f)
        for (TokenId wa : a)
            for (TokenId wb : b) emit({wa, wf, wb});
    return out;
}

SyntheticCorpus generate_corpus(const CorpusSpec& spec, std::uint64_t seed) {
    check_spec(spec);

    SyntheticCorpus corpus;
    corpus.spec = spec;
    corpus.seed = seed;
    Rng rng(mix_seed({seed, hash_str64("corpus")}));

    std::vector<TokenId> fillers;
    for (const auto& w : filler_pool()) fillers.push_back(corpus.vocab.add(w));

    for (int i = 0; i < spec.num_intents; ++i) {
        IntentClass intent;
        intent.id = i;
        for (int slot = 0; slot < 2; ++slot)
            for (int s = 0; s < spec.synonyms_per_slot; ++s)
                intent.slot_words[slot].push_back(corpus.vocab.add(fresh_word(rng, corpus.vocab)));
        intent.slot_words[2] = fillers;

        std::vector<TokenSeq> expansions = intent.enumerate_expansions();
        if (spec.realizations_per_intent > static_cast<int>(expansions.size()))
            throw ConfigError("realizations_per_intent " +
                              std::to_string(spec.realizations_per_intent) +
                              " exceeds the " + std::to_string(expansions.size()) +
                              " expansions of intent " + std::to_string(i));
        rng.shuffle(expansions);
        expansions.resize(static_cast<std::size_t>(spec.realizations_per_intent));
        std::sort(expansions.begin(), expansions.end());
        intent.realizations = std::move(expansions);

        for (const TokenSeq& r : intent.realizations) {
            corpus.keyword_catalog.push_back(r);
            corpus.intent_of.emplace(r, i);
        }
        corpus.intents.push_back(std::move(intent));
    }
    std::sort(corpus.keyword_catalog.begin(), corpus.keyword_catalog.end());

    // Ordered same-intent pairs that share at least one content word. Mined
    // rewrite pairs are lexically close to their queries; full synonym swaps
    // stay out of the training data and must be found at decode time.
    for (const IntentClass& intent : corpus.intents) {
        auto is_content = [&intent](TokenId t) {
            for (int slot = 0; slot < 2; ++slot) {
                const auto& g = intent.slot_words[static_cast<std::size_t>(slot)];
                if (std::find(g.begin(), g.end(), t) != g.end()) return true;
            }
            return false;
        };
        for (const TokenSeq& q : intent.realizations)
            for (const TokenSeq& r : intent.realizations) {
                if (q == r) continue;
                bool shares = false;
                for (TokenId t : q.content()) {
                    if (!is_content(t)) continue;
                    auto rc = r.content();
                    if (std::find(rc.begin(), rc.end(), t) != rc.end()) {
                        shares = true;
                        break;
                    }
                }
                if (shares) corpus.dataset.pairs.push_back({q, r, intent.id});
            }
    }

    return corpus;
}

bool oracle_quality(const TokenSeq& query, const TokenSeq& rewrite, const SyntheticCorpus& corpus) {
    auto qit = corpus.intent_of.find(query);
    if (qit == corpus.intent_of.end()) throw DataError("query realizes no known intent");
    auto rit = corpus.intent_of.find(rewrite);
    return rit != corpus.intent_of.end() && rit->second == qit->second;
}

DatasetSplits split_dataset(const RewriteDataset& dataset, const SplitRatios& ratios,
                            std::uint64_t seed) {
    const double r[3] = {ratios.train, ratios.val, ratios.test};
    double sum = r[0] + r[1] + r[2];
    for (double x : r)
        if (x < 0.0) throw ConfigError("split ratios must be nonnegative");
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");

    std::set<int> intent_set;
    for (const auto& p : dataset.pairs) intent_set.insert(p.intent);
    std::vector<int> intents(intent_set.begin(), intent_set.end());
    const int n = static_cast<int>(intents.size());

    int nonempty = 0;
    for (double x : r)
        if (x > 0.0) ++nonempty;
    if (n < nonempty)
        throw DataError("dataset has " + std::to_string(n) + " intents but " +
                        std::to_string(nonempty) + " splits need one each");

    // Largest-remainder allocation over intents, then one intent guaranteed
    // to every positive-ratio split.
    int counts[3];
    double frac[3];
    int assigned = 0;
    for (int k = 0; k < 3; ++k) {
        double target = r[k] * n;
        counts[k] = static_cast<int>(std::floor(target));
        frac[k] = target - counts[k];
        assigned += counts[k];
    }
    while (assigned < n) {
        int best = 0;
        for (int k = 1; k < 3; ++k)
            if (frac[k] > frac[best]) best = k;
        ++counts[best];
        frac[best] = -1.0;
        ++assigned;
    }
    for (int k = 0; k < 3; ++k) {
        if (r[k] > 0.0 && counts[k] == 0) {
            int donor = 0;
            for (int j = 1; j < 3; ++j)
                if (counts[j] > counts[donor]) donor = j;
            --counts[donor];
            ++counts[k];
        }
    }

    Rng rng(mix_seed({seed, hash_str64("split")}));
    rng.shuffle(intents);

    std::unordered_map<int, int> split_of;
    int cursor = 0;
    for (int k = 0; k < 3; ++k)
        for (int c = 0; c < counts[k]; ++c) split_of[intents[static_cast<std::size_t>(cursor++)]] = k;

    DatasetSplits out;
    RewriteDataset* dests[3] = {&out.train, &out.val, &out.test};
    for (const auto& p : dataset.pairs) dests[split_of.at(p.intent)]->pairs.push_back(p);
    return out;
}

void save_corpus(const SyntheticCorpus& corpus, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);

    {
        std::ofstream out(dir / "vocab.tsv", std::ios::binary);
        for (int id = 0; id < corpus.vocab.size(); ++id)
            out << id << '\t' << corpus.vocab.surface(id) << '\n';
    }
    {
        std::ofstream out(dir / "dataset.jsonl", std::ios::binary);
        for (const auto& p : corpus.dataset.pairs) {
            nlohmann::ordered_json j;
            j["query"] = detokenize(p.query, corpus.vocab);
            j["rewrite"] = detokenize(p.rewrite, corpus.vocab);
            j["intent"] = p.intent;
            out << j.dump() << '\n';
        }
    }
    {
        std::ofstream out(dir / "catalog.txt", std::ios::binary);
        for (const auto& k : corpus.keyword_catalog) out << detokenize(k, corpus.vocab) << '\n';
    }
    {
        nlohmann::ordered_json j;
        j["spec"] = {{"num_intents", corpus.spec.num_intents},
                     {"synonyms_per_slot", corpus.spec.synonyms_per_slot},
                     {"realizations_per_intent", corpus.spec.realizations_per_intent},
                     {"vocab_budget", corpus.spec.vocab_budget}};
        j["seed"] = corpus.seed;
        nlohmann::ordered_json intents = nlohmann::ordered_json::array();
        for (const auto& intent : corpus.intents) {
            nlohmann::ordered_json ji;
            ji["id"] = intent.id;
            for (int slot = 0; slot < 3; ++slot) {
                nlohmann::ordered_json words = nlohmann::ordered_json::array();
                for (TokenId w : intent.slot_words[static_cast<std::size_t>(slot)])
                    words.push_back(corpus.vocab.surface(w));
                ji["slots"].push_back(words);
            }
            for (const auto& r : intent.realizations)
                ji["realizations"].push_back(detokenize(r, corpus.vocab));
            intents.push_back(ji);
        }
        j["intents"] = std::move(intents);
        std::ofstream out(dir / "intents.json", std::ios::binary);
        out << j.dump(2) << '\n';
    }
}

SyntheticCorpus load_corpus(const std::filesystem::path& dir) {
    SyntheticCorpus corpus;

    {
        std::ifstream in(dir / "vocab.tsv");
        if (!in) throw DataError("missing vocab.tsv in " + dir.string());
        std::string line;
        while (std::getline(in, line)) {
            auto tab = line.find('\t');
            if (tab == std::string::npos) continue;
            std::string surface = line.substr(tab + 1);
            if (surface == Vocab::end_surface()) continue;
            corpus.vocab.add(surface);
        }
    }
    {
        std::ifstream in(dir / "intents.json");
        if (!in) throw DataError("missing intents.json in " + dir.string());
        nlohmann::json j = nlohmann::json::parse(in);
        corpus.spec.num_intents = j["spec"]["num_intents"];
        corpus.spec.synonyms_per_slot = j["spec"]["synonyms_per_slot"];
        corpus.spec.realizations_per_intent = j["spec"]["realizations_per_intent"];
        corpus.spec.vocab_budget = j["spec"]["vocab_budget"];
        corpus.seed = j["seed"];
        for (const auto& ji : j["intents"]) {
            IntentClass intent;
            intent.id = ji["id"];
            for (int slot = 0; slot < 3; ++slot)
                for (const auto& w : ji["slots"][static_cast<std::size_t>(slot)])
                    intent.slot_words[static_cast<std::size_t>(slot)].push_back(
                        corpus.vocab.id_of(w.get<std::string>()));
            for (const auto& r : ji["realizations"]) {
                TokenSeq seq = tokenize(r.get<std::string>(), corpus.vocab);
                corpus.intent_of.emplace(seq, intent.id);
                intent.realizations.push_back(std::move(seq));
            }
            corpus.intents.push_back(std::move(intent));
        }
    }
    {
        std::ifstream in(dir / "catalog.txt");
        if (!in) throw DataError("missing catalog.txt in " + dir.string());
        std::string line;
        while (std::getline(in, line))
            if (!line.empty()) corpus.keyword_catalog.push_back(tokenize(line, corpus.vocab));
    }
    {
        std::ifstream in(dir / "dataset.jsonl");
        if (!in) throw DataError("missing dataset.jsonl in " + dir.string());
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            nlohmann::json j = nlohmann::json::parse(line);
            RewritePair p;
            p.query = tokenize(j["query"].get<std::string>(), corpus.vocab);
            p.rewrite = tokenize(j["rewrite"].get<std::string>(), corpus.vocab);
            p.intent = j["intent"];
            corpus.dataset.pairs.push_back(std::move(p));
        }
    }
    return corpus;
}

}  // namespace clover

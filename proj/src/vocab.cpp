#include "clover/vocab.hpp"

#include <sstream>

namespace clover {

TokenId Vocab::add(const std::string& word) {
    auto it = index_.find(word);
    if (it != index_.end()) return it->second;
    TokenId id = static_cast<TokenId>(surfaces_.size());
    surfaces_.push_back(word);
    index_.emplace(word, id);
    return id;
}

TokenId Vocab::id_of(const std::string& word) const {
    auto it = index_.find(word);
    if (it == index_.end()) throw DataError(word + " not in vocabulary");
    return it->second;
}

TokenSeq tokenize(const std::string& text, const Vocab& vocab) {
    TokenSeq seq;
    std::istringstream in(text);
    std::string word;
    while (in >> word) seq.ids.push_back(vocab.id_of(word));
    seq.ids.push_back(kEndToken);
    return seq;
}

std::string detokenize(const TokenSeq& seq, const Vocab& vocab) {
    std::string out;
    for (TokenId id : seq.content()) {
        if (!out.empty()) out += ' ';
        out += vocab.surface(id);
    }
    return out;
}

}  // namespace clover

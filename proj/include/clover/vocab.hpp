#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "clover/types.hpp"

namespace clover {

// Word-level vocabulary with dense ids. Id 0 is the end-of-sequence marker
// and never matches user text.
class Vocab {
  public:
    Vocab() { surfaces_.push_back(end_surface()); }

    static const std::string& end_surface() {
        static const std::string s = "</s>";
        return s;
    }

    // Insert a word if new; returns its id either way.
    TokenId add(const std::string& word);

    bool contains(const std::string& word) const { return index_.count(word) != 0; }
    TokenId id_of(const std::string& word) const;
    const std::string& surface(TokenId id) const { return surfaces_.at(static_cast<std::size_t>(id)); }
    int size() const { return static_cast<int>(surfaces_.size()); }

    const std::vector<std::string>& surfaces() const { return surfaces_; }

  private:
    std::vector<std::string> surfaces_;
    std::unordered_map<std::string, TokenId> index_;
};

// Order-preserving word lookup; appends the end marker. Throws DataError
// naming the first out-of-vocabulary word.
TokenSeq tokenize(const std::string& text, const Vocab& vocab);

// Inverse of tokenize for well-formed sequences; drops the end marker.
std::string detokenize(const TokenSeq& seq, const Vocab& vocab);

}  // namespace clover

#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace clover {

using TokenId = std::int32_t;

// Token id 0 is the end-of-sequence marker everywhere.
inline constexpr TokenId kEndToken = 0;

// Errors surfaced by the library. The CLI maps ConfigError/DataError/
// ContractError to exit code 2; CLI11 usage errors map to exit code 1.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
// Bad setup values: vocab budget exceeded, split ratios, invalid dims.
struct ConfigError : Error {
    using Error::Error;
};
// Bad data at runtime: OOV words, unknown intents, single-class label sets.
struct DataError : Error {
    using Error::Error;
};
// API misuse: terminated prefix, invalid trie path, missing reference rewrite.
struct ContractError : Error {
    using Error::Error;
};

// A query, rewrite, or keyword as an ordered token id list. A terminated
// sequence carries the end marker as its last id, exactly once.
struct TokenSeq {
    std::vector<TokenId> ids;

    TokenSeq() = default;
    explicit TokenSeq(std::vector<TokenId> v) : ids(std::move(v)) {}

    bool terminated() const { return !ids.empty() && ids.back() == kEndToken; }
    std::size_t size() const { return ids.size(); }
    bool empty() const { return ids.empty(); }

    // Tokens without the trailing end marker.
    std::span<const TokenId> content() const {
        return terminated() ? std::span<const TokenId>(ids.data(), ids.size() - 1)
                            : std::span<const TokenId>(ids.data(), ids.size());
    }

    // No interior end markers; at most one, at the back.
    bool well_formed() const {
        for (std::size_t i = 0; i + 1 < ids.size(); ++i)
            if (ids[i] == kEndToken) return false;
        return true;
    }

    friend bool operator==(const TokenSeq&, const TokenSeq&) = default;
    friend auto operator<=>(const TokenSeq& a, const TokenSeq& b) {
        return std::lexicographical_compare_three_way(a.ids.begin(), a.ids.end(),
                                                      b.ids.begin(), b.ids.end());
    }
};

inline std::uint64_t hash_ids(std::span<const TokenId> ids) {
    std::uint64_t h = 1469598103934665603ull;  // FNV-1a 64
    for (TokenId t : ids) {
        h ^= static_cast<std::uint64_t>(static_cast<std::uint32_t>(t));
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace clover

template <>
struct std::hash<clover::TokenSeq> {
    std::size_t operator()(const clover::TokenSeq& s) const noexcept {
        return static_cast<std::size_t>(clover::hash_ids(s.ids));
    }
};

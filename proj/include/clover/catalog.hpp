#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <vector>

#include "clover/types.hpp"
#include "clover/vocab.hpp"

namespace clover {

struct KeywordCatalog {
    std::vector<TokenSeq> keywords;  // terminated, distinct
};

// Immutable prefix trie over a keyword catalog. Keyword boundaries are
// explicit end-marker edges, so "red shoes" and "red shoes sale" coexist.
class KeywordTrie {
  public:
    // Children of the node reached by prefix (token ids, ascending). The end
    // marker appears iff the prefix is a complete keyword. Throws
    // ContractError when prefix is not a trie path.
    std::span<const TokenId> allowed_continuations(std::span<const TokenId> prefix) const;
    std::span<const TokenId> allowed_continuations(const TokenSeq& prefix) const {
        return allowed_continuations(std::span<const TokenId>(prefix.ids));
    }

    // Membership of a terminated sequence.
    bool contains(const TokenSeq& seq) const;

    std::size_t node_count() const { return nodes_.size(); }
    // Longest keyword length including the end marker.
    std::size_t max_depth() const { return max_depth_; }

    friend KeywordTrie build_trie(const KeywordCatalog& catalog);

  private:
    struct Node {
        std::vector<TokenId> edge_tokens;   // ascending
        std::vector<std::int32_t> edge_to;  // parallel to edge_tokens
    };

    // Node index for prefix, or -1 when the path does not exist.
    std::int32_t walk(std::span<const TokenId> prefix) const;

    std::vector<Node> nodes_;
    std::size_t max_depth_ = 0;
};

// Throws ConfigError on an empty catalog.
KeywordTrie build_trie(const KeywordCatalog& catalog);

enum class MaskMode {
    strict,  // all-zero allowed mass is an error
    decode,  // all-zero allowed mass falls back to uniform over allowed
};

// Zero the mass outside the trie's allowed continuations of prefix and
// renormalize. dist must sum to 1 (1e-9). Throws ContractError on an invalid
// prefix or, in strict mode, when every allowed token has zero mass.
std::vector<double> constrain_distribution(std::span<const double> dist, const KeywordTrie& trie,
                                           std::span<const TokenId> prefix,
                                           MaskMode mode = MaskMode::strict);

struct ScoredKeyword {
    TokenSeq keyword;
    double score = 0.0;
};

// Multivalue map query -> scored keywords. Keys and per-entry keywords are
// kept in canonical order so serialization is deterministic.
class ProductionMap {
  public:
    // Inserts or refreshes the score; keeps entries sorted by keyword.
    void add(const TokenSeq& query, const TokenSeq& keyword, double score);

    bool has_query(const TokenSeq& query) const { return entries_.count(query) != 0; }
    bool has_keyword(const TokenSeq& query, const TokenSeq& keyword) const;

    // Empty span when the query is unmapped.
    std::span<const ScoredKeyword> keywords_for(const TokenSeq& query) const;

    // Minimum stored quality for the query; 0 when unmapped.
    double min_quality(const TokenSeq& query) const;

    const std::map<TokenSeq, std::vector<ScoredKeyword>>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }

  private:
    std::map<TokenSeq, std::vector<ScoredKeyword>> entries_;
};

void save_catalog(const KeywordCatalog& catalog, const Vocab& vocab,
                  const std::filesystem::path& file);
KeywordCatalog load_catalog(const std::filesystem::path& file, const Vocab& vocab);

// production_map.jsonl: one line per query, scores with 6 decimal places.
void save_production_map(const ProductionMap& map, const Vocab& vocab,
                         const std::filesystem::path& file);
ProductionMap load_production_map(const std::filesystem::path& file, const Vocab& vocab);

}  // namespace clover

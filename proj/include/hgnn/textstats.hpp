#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace hgnn {

class TextStatsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::string_view kUrlToken = "<url>";
inline constexpr std::string_view kMentionToken = "<mention>";
inline constexpr std::string_view kHashtagToken = "<hashtag>";

struct TokenizedDoc {
  std::string doc_id;
  std::vector<std::string> tokens;
};

// Lowercases, splits on whitespace and punctuation, and collapses URLs,
// @mentions and #hashtags (including PAN's #URL#/#USER#/#HASHTAG#
// placeholders) into the three special tokens. Punctuation-only pieces are
// dropped.
std::vector<std::string> tokenize(std::string_view text);

using WordId = std::uint32_t;

struct Vocabulary {
  std::vector<std::string> words;                   // id -> word
  std::unordered_map<std::string, WordId> index;    // word -> id
  std::vector<std::uint64_t> term_count;            // id -> corpus frequency
  std::vector<std::uint64_t> doc_freq;              // id -> #docs containing the word
  std::size_t n_docs = 0;
  std::size_t min_count = 0;

  std::size_t size() const { return words.size(); }
  // False for out-of-vocabulary words.
  bool find(std::string_view word, WordId& id) const;
  bool is_special(WordId id) const;
};

// Words seen fewer than min_count times are dropped; the three special tokens
// are always kept. Ids run in descending frequency, ties lexicographic.
Vocabulary build_vocabulary(const std::vector<TokenizedDoc>& docs, std::size_t min_count = 15);

// tf(w) * ln(n_docs / df(w)) with raw in-doc counts. OOV words are skipped and
// zero weights omitted. Returned in ascending word id.
std::vector<std::pair<WordId, double>> compute_tfidf(const TokenizedDoc& doc,
                                                     const Vocabulary& vocab,
                                                     std::size_t n_docs);

struct CooccurrenceStats {
  std::uint64_t window_count = 0;
  std::vector<std::uint64_t> single_count;  // word id -> #windows containing it
  // (a << 32 | b) with a < b -> #windows containing both
  std::unordered_map<std::uint64_t, std::uint64_t> pair_count;
  std::size_t window = 0;

  static std::uint64_t key(WordId a, WordId b) {
    return (static_cast<std::uint64_t>(a) << 32) | b;
  }
  std::uint64_t pair(WordId a, WordId b) const;
};

// Slides a window of `window` tokens (stride 1) over the in-vocabulary token
// sequence of each document; documents shorter than the window contribute a
// single window. Counts are per-window presence.
CooccurrenceStats count_cooccurrence(const std::vector<TokenizedDoc>& docs,
                                     const Vocabulary& vocab, std::size_t window = 20);

struct PmiEdge {
  WordId a;
  WordId b;
  double pmi;
};

// Pairs with strictly positive PMI, sorted by (a, b) with a < b.
std::vector<PmiEdge> pmi_edges(const CooccurrenceStats& stats);

inline std::vector<PmiEdge> compute_pmi(const std::vector<TokenizedDoc>& docs,
                                        const Vocabulary& vocab, std::size_t window = 20) {
  return pmi_edges(count_cooccurrence(docs, vocab, window));
}

}  // namespace hgnn

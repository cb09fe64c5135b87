#include "hgnn/textstats.hpp"

#include <algorithm>
#include <cmath>

namespace hgnn {

namespace {

bool is_word_byte(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
         c >= 0x80;
}

bool is_space(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

char lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

bool starts_with_ci(std::string_view s, std::string_view prefix) {
  if (s.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (lower(s[i]) != prefix[i]) return false;
  }
  return true;
}

std::size_t word_run(std::string_view s, std::size_t from) {
  std::size_t i = from;
  while (i < s.size() && is_word_byte(static_cast<unsigned char>(s[i]))) ++i;
  return i;
}

void tokenize_chunk(std::string_view chunk, std::vector<std::string>& out) {
  struct Placeholder {
    std::string_view text;
    std::string_view token;
  };
  static constexpr Placeholder kPlaceholders[] = {
      {"#url#", kUrlToken}, {"#user#", kMentionToken}, {"#hashtag#", kHashtagToken}};

  std::size_t i = 0;
  while (i < chunk.size()) {
    const std::string_view rest = chunk.substr(i);
    bool matched = false;
    for (const auto& p : kPlaceholders) {
      if (starts_with_ci(rest, p.text)) {
        out.emplace_back(p.token);
        i += p.text.size();
        matched = true;
        break;
      }
    }
    if (matched) continue;

    if (starts_with_ci(rest, "http://") || starts_with_ci(rest, "https://") ||
        starts_with_ci(rest, "www.")) {
      out.emplace_back(kUrlToken);
      return;  // the URL runs to the end of the whitespace chunk
    }
    const char c = chunk[i];
    const bool next_is_word =
        i + 1 < chunk.size() && is_word_byte(static_cast<unsigned char>(chunk[i + 1]));
    if ((c == '@' || c == '#') && next_is_word) {
      out.emplace_back(c == '@' ? kMentionToken : kHashtagToken);
      i = word_run(chunk, i + 1);
      continue;
    }
    if (is_word_byte(static_cast<unsigned char>(c))) {
      const std::size_t end = word_run(chunk, i);
      std::string word(chunk.substr(i, end - i));
      std::transform(word.begin(), word.end(), word.begin(), lower);
      out.push_back(std::move(word));
      i = end;
      continue;
    }
    ++i;  // punctuation
  }
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t end = i;
    while (end < text.size() && !is_space(static_cast<unsigned char>(text[end]))) ++end;
    if (end > i) tokenize_chunk(text.substr(i, end - i), tokens);
    i = end;
  }
  return tokens;
}

bool Vocabulary::find(std::string_view word, WordId& id) const {
  auto it = index.find(std::string(word));
  if (it == index.end()) return false;
  id = it->second;
  return true;
}

bool Vocabulary::is_special(WordId id) const {
  const std::string& w = words.at(id);
  return w == kUrlToken || w == kMentionToken || w == kHashtagToken;
}

Vocabulary build_vocabulary(const std::vector<TokenizedDoc>& docs, std::size_t min_count) {
  if (min_count < 1) throw TextStatsError("min_count must be at least 1");

  std::unordered_map<std::string, std::pair<std::uint64_t, std::uint64_t>> counts;  // term, doc
  for (const auto& special : {kUrlToken, kMentionToken, kHashtagToken}) {
    counts.try_emplace(std::string(special), 0, 0);
  }
  for (const auto& doc : docs) {
    std::vector<const std::string*> seen;
    for (const auto& tok : doc.tokens) {
      auto& c = counts[tok];
      ++c.first;
      seen.push_back(&tok);
    }
    std::sort(seen.begin(), seen.end(), [](auto* a, auto* b) { return *a < *b; });
    seen.erase(std::unique(seen.begin(), seen.end(), [](auto* a, auto* b) { return *a == *b; }),
               seen.end());
    for (const auto* tok : seen) ++counts[*tok].second;
  }

  auto special = [](const std::string& w) {
    return w == kUrlToken || w == kMentionToken || w == kHashtagToken;
  };
  std::vector<std::pair<std::string, std::pair<std::uint64_t, std::uint64_t>>> kept;
  std::size_t ordinary = 0;
  for (auto& [word, c] : counts) {
    if (special(word) || c.first >= min_count) {
      ordinary += special(word) ? 0 : 1;
      kept.emplace_back(word, c);
    }
  }
  if (ordinary == 0) {
    throw TextStatsError("vocabulary is empty after removing words seen fewer than " +
                         std::to_string(min_count) + " times");
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second.first != b.second.first) return a.second.first > b.second.first;
    return a.first < b.first;
  });

  Vocabulary vocab;
  vocab.n_docs = docs.size();
  vocab.min_count = min_count;
  for (auto& [word, c] : kept) {
    vocab.index.emplace(word, static_cast<WordId>(vocab.words.size()));
    vocab.words.push_back(word);
    vocab.term_count.push_back(c.first);
    vocab.doc_freq.push_back(c.second);
  }
  return vocab;
}

std::vector<std::pair<WordId, double>> compute_tfidf(const TokenizedDoc& doc,
                                                     const Vocabulary& vocab,
                                                     std::size_t n_docs) {
  if (n_docs < 1) throw TextStatsError("compute_tfidf: n_docs must be at least 1");
  std::map<WordId, std::uint64_t> tf;
  for (const auto& tok : doc.tokens) {
    WordId id;
    if (vocab.find(tok, id)) ++tf[id];
  }
  std::vector<std::pair<WordId, double>> weights;
  for (auto [id, count] : tf) {
    const std::uint64_t df = vocab.doc_freq[id];
    if (df == 0) {
      throw TextStatsError("compute_tfidf: word '" + vocab.words[id] + "' in doc " + doc.doc_id +
                           " has document frequency 0");
    }
    const double w = static_cast<double>(count) *
                     std::log(static_cast<double>(n_docs) / static_cast<double>(df));
    if (w > 0.0) weights.emplace_back(id, w);
  }
  return weights;
}

std::uint64_t CooccurrenceStats::pair(WordId a, WordId b) const {
  if (a > b) std::swap(a, b);
  auto it = pair_count.find(key(a, b));
  return it == pair_count.end() ? 0 : it->second;
}

CooccurrenceStats count_cooccurrence(const std::vector<TokenizedDoc>& docs,
                                     const Vocabulary& vocab, std::size_t window) {
  if (window < 2) throw TextStatsError("PMI window must be at least 2");
  CooccurrenceStats stats;
  stats.window = window;
  stats.single_count.assign(vocab.size(), 0);

  std::vector<WordId> ids;
  std::vector<WordId> distinct;
  for (const auto& doc : docs) {
    ids.clear();
    for (const auto& tok : doc.tokens) {
      WordId id;
      if (vocab.find(tok, id)) ids.push_back(id);
    }
    if (ids.empty()) continue;
    const std::size_t span = std::min(window, ids.size());
    const std::size_t n_windows = ids.size() - span + 1;
    for (std::size_t start = 0; start < n_windows; ++start) {
      distinct.assign(ids.begin() + start, ids.begin() + start + span);
      std::sort(distinct.begin(), distinct.end());
      distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
      ++stats.window_count;
      for (std::size_t i = 0; i < distinct.size(); ++i) {
        ++stats.single_count[distinct[i]];
        for (std::size_t j = i + 1; j < distinct.size(); ++j) {
          ++stats.pair_count[CooccurrenceStats::key(distinct[i], distinct[j])];
        }
      }
    }
  }
  return stats;
}

std::vector<PmiEdge> pmi_edges(const CooccurrenceStats& stats) {
  std::vector<PmiEdge> edges;
  const double w = static_cast<double>(stats.window_count);
  for (const auto& [key, count] : stats.pair_count) {
    const auto a = static_cast<WordId>(key >> 32);
    const auto b = static_cast<WordId>(key & 0xffffffffULL);
    const double ratio = static_cast<double>(count) * w /
                         (static_cast<double>(stats.single_count[a]) *
                          static_cast<double>(stats.single_count[b]));
    const double pmi = std::log(ratio);
    if (pmi > 0.0) edges.push_back({a, b, pmi});
  }
  std::sort(edges.begin(), edges.end(),
            [](const PmiEdge& x, const PmiEdge& y) { return x.a != y.a ? x.a < y.a : x.b < y.b; });
  return edges;
}

}  // namespace hgnn

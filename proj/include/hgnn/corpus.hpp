#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hgnn {

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Document {
  std::string doc_id;
  std::string author_id;
  std::string text;
};

struct Author {
  std::string author_id;
  int label = 0;  // 0 or 1
  std::vector<Document> documents;
};

struct Corpus {
  std::vector<Author> authors;
  std::array<std::string, 2> class_names{"0", "1"};

  std::size_t document_count() const;
  // Throws CorpusError when an invariant does not hold (unique ids, two
  // labels present, at least two authors, non-empty documents).
  void validate() const;
};

// Maps dataset label strings onto {0, 1}.
struct LabelTable {
  std::string name;
  std::array<std::string, 2> labels;  // labels[0] -> 0, labels[1] -> 1

  int lookup(std::string_view label) const;  // -1 when unknown
};

// binary (0/1), irony (NI/I), stance (AGAINST/INFAVOR), sentiment (negative/positive).
const std::vector<LabelTable>& builtin_label_tables();
// Accepts a built-in table name or "NEG,POS" for a custom pair.
LabelTable label_table_from_string(std::string_view spec);
// First built-in table whose two labels cover every value in `seen`.
LabelTable detect_label_table(const std::vector<std::string>& seen);

// PAN author-profiling layout: truth.txt with `id:::label` lines plus one
// `<id>.xml` per author whose <document> elements hold the texts. Without a
// table, one is picked from the truth labels (detect_label_table).
Corpus load_pan_corpus(const std::filesystem::path& dir, const LabelTable* table = nullptr);

// One JSON object per line: author_id, doc_id, text, label (0/1 or a string
// resolved through `table`).
Corpus load_jsonl_corpus(const std::filesystem::path& path, const LabelTable* table = nullptr);
void write_jsonl_corpus(const Corpus& corpus, const std::filesystem::path& path);

struct ActivityFilter {
  std::size_t min_docs = 50;
  std::size_t max_docs = 200;
  std::size_t min_len = 15;
  std::size_t max_len = 60;
};

// Drops documents whose token count is outside [min_len, max_len], then
// authors whose remaining document count is outside [min_docs, max_docs].
Corpus filter_by_activity(const Corpus& corpus, const ActivityFilter& filter);

enum class Split : std::uint8_t { Train = 0, Val = 1, Test = 2 };

std::string_view to_string(Split s);

struct SplitFractions {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

// Parses "0.8,0.1,0.1".
SplitFractions parse_fractions(std::string_view text);

struct SplitAssignment {
  std::map<std::string, Split> by_author;

  Split at(const std::string& author_id) const;
  std::size_t count(Split s) const;
};

// Stratified per class: each class's authors are shuffled with a generator
// seeded by `seed`, then cut at floor(cumulative fraction * class size).
SplitAssignment split_corpus(const Corpus& corpus, const SplitFractions& fractions,
                             std::uint64_t seed);

}  // namespace hgnn

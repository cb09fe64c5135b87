#include "hgnn/corpus.hpp"

#include "hgnn/random.hpp"
#include "hgnn/textstats.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace hgnn {

namespace {

std::string_view trim(std::string_view s) {
  const auto not_space = [](char c) { return c != ' ' && c != '\t' && c != '\r' && c != '\n'; };
  auto b = std::find_if(s.begin(), s.end(), not_space);
  auto e = std::find_if(s.rbegin(), s.rend(), not_space).base();
  return b < e ? std::string_view(&*b, static_cast<std::size_t>(e - b)) : std::string_view{};
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string decode_entities(std::string_view s) {
  static const std::pair<std::string_view, char> kEntities[] = {
      {"&amp;", '&'}, {"&lt;", '<'}, {"&gt;", '>'}, {"&quot;", '"'}, {"&apos;", '\''}};
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size();) {
    bool hit = false;
    if (s[i] == '&') {
      for (const auto& [name, ch] : kEntities) {
        if (s.substr(i, name.size()) == name) {
          out.push_back(ch);
          i += name.size();
          hit = true;
          break;
        }
      }
    }
    if (!hit) out.push_back(s[i++]);
  }
  return out;
}

// Text content of one <document> element: CDATA sections verbatim, other
// text with XML entities decoded, nested tags ignored.
std::string element_text(std::string_view body) {
  std::string out;
  std::size_t i = 0;
  while (i < body.size()) {
    if (body.compare(i, 9, "<![CDATA[") == 0) {
      const std::size_t end = body.find("]]>", i + 9);
      if (end == std::string_view::npos) throw CorpusError("unterminated CDATA section");
      out.append(body.substr(i + 9, end - i - 9));
      i = end + 3;
    } else if (body[i] == '<') {
      const std::size_t end = body.find('>', i);
      if (end == std::string_view::npos) throw CorpusError("unterminated tag");
      i = end + 1;
    } else {
      const std::size_t end = std::min(body.find('<', i), body.size());
      out += decode_entities(body.substr(i, end - i));
      i = end;
    }
  }
  return out;
}

std::vector<std::string> parse_pan_documents(std::string_view xml, const std::string& where) {
  std::vector<std::string> texts;
  std::size_t pos = 0;
  while ((pos = xml.find("<document", pos)) != std::string_view::npos) {
    const std::size_t after = pos + 9;
    if (after >= xml.size()) break;
    const char c = xml[after];
    if (c != '>' && c != ' ' && c != '\t' && c != '\n' && c != '\r' && c != '/') {
      pos = after;  // e.g. <documents>
      continue;
    }
    const std::size_t open_end = xml.find('>', after);
    if (open_end == std::string_view::npos) throw CorpusError(where + ": unterminated <document>");
    if (xml[open_end - 1] == '/') {
      texts.emplace_back();
      pos = open_end + 1;
      continue;
    }
    // CDATA may itself contain "</document>", so skip over CDATA when
    // searching for the closing tag.
    std::size_t scan = open_end + 1;
    std::size_t close = std::string_view::npos;
    while (scan < xml.size()) {
      const std::size_t cdata = xml.find("<![CDATA[", scan);
      const std::size_t end_tag = xml.find("</document>", scan);
      if (end_tag == std::string_view::npos) break;
      if (cdata != std::string_view::npos && cdata < end_tag) {
        const std::size_t cdata_end = xml.find("]]>", cdata + 9);
        if (cdata_end == std::string_view::npos) break;
        scan = cdata_end + 3;
        continue;
      }
      close = end_tag;
      break;
    }
    if (close == std::string_view::npos) throw CorpusError(where + ": missing </document>");
    texts.push_back(element_text(xml.substr(open_end + 1, close - open_end - 1)));
    pos = close + 11;
  }
  return texts;
}

void add_document(Author& author, std::string doc_id, std::string text, const std::string& where) {
  if (trim(text).empty()) throw CorpusError(where + ": empty document " + doc_id);
  author.documents.push_back({std::move(doc_id), author.author_id, std::move(text)});
}

}  // namespace

std::size_t Corpus::document_count() const {
  std::size_t n = 0;
  for (const auto& a : authors) n += a.documents.size();
  return n;
}

void Corpus::validate() const {
  if (authors.size() < 2) throw CorpusError("corpus needs at least 2 authors");
  std::unordered_set<std::string> author_ids;
  std::unordered_set<std::string> doc_ids;
  bool has[2] = {false, false};
  for (const auto& a : authors) {
    if (!author_ids.insert(a.author_id).second) {
      throw CorpusError("duplicate author id " + a.author_id);
    }
    if (a.label != 0 && a.label != 1) {
      throw CorpusError("author " + a.author_id + " has non-binary label");
    }
    has[a.label] = true;
    if (a.documents.empty()) throw CorpusError("author " + a.author_id + " has no documents");
    for (const auto& d : a.documents) {
      if (d.author_id != a.author_id) {
        throw CorpusError("document " + d.doc_id + " belongs to " + d.author_id + ", not " +
                          a.author_id);
      }
      if (!doc_ids.insert(d.doc_id).second) throw CorpusError("duplicate doc id " + d.doc_id);
      if (trim(d.text).empty()) throw CorpusError("empty document " + d.doc_id);
    }
  }
  if (!has[0] || !has[1]) throw CorpusError("corpus must contain both classes");
}

int LabelTable::lookup(std::string_view label) const {
  if (label == labels[0]) return 0;
  if (label == labels[1]) return 1;
  return -1;
}

const std::vector<LabelTable>& builtin_label_tables() {
  static const std::vector<LabelTable> tables = {
      {"binary", {"0", "1"}},
      {"irony", {"NI", "I"}},
      {"stance", {"AGAINST", "INFAVOR"}},
      {"sentiment", {"negative", "positive"}},
  };
  return tables;
}

LabelTable label_table_from_string(std::string_view spec) {
  for (const auto& t : builtin_label_tables()) {
    if (t.name == spec) return t;
  }
  const auto comma = spec.find(',');
  if (comma == std::string_view::npos || spec.find(',', comma + 1) != std::string_view::npos) {
    throw CorpusError("unknown label table '" + std::string(spec) +
                      "' (expected a built-in name or NEG,POS)");
  }
  LabelTable t{"custom", {std::string(trim(spec.substr(0, comma))),
                          std::string(trim(spec.substr(comma + 1)))}};
  if (t.labels[0].empty() || t.labels[1].empty() || t.labels[0] == t.labels[1]) {
    throw CorpusError("custom label table needs two distinct labels");
  }
  return t;
}

LabelTable detect_label_table(const std::vector<std::string>& seen) {
  for (const auto& t : builtin_label_tables()) {
    if (std::all_of(seen.begin(), seen.end(), [&](const auto& l) { return t.lookup(l) >= 0; })) {
      return t;
    }
  }
  std::set<std::string> distinct(seen.begin(), seen.end());
  std::string listed;
  for (const auto& l : distinct) listed += (listed.empty() ? "" : ", ") + l;
  throw CorpusError("no label table covers labels {" + listed + "}");
}

Corpus load_pan_corpus(const std::filesystem::path& dir, const LabelTable* table) {
  const auto truth_path = dir / "truth.txt";
  if (!std::filesystem::exists(truth_path)) {
    throw CorpusError("missing truth file " + truth_path.string());
  }
  std::vector<std::pair<std::string, std::string>> truth;
  {
    std::istringstream in(read_file(truth_path));
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto t = trim(line);
      if (t.empty()) continue;
      const auto sep = t.find(":::");
      if (sep == std::string_view::npos) {
        throw CorpusError(truth_path.string() + ":" + std::to_string(line_no) +
                          ": expected id:::label");
      }
      // Some PAN years append further :::fields; the label is the second one.
      auto rest = t.substr(sep + 3);
      rest = rest.substr(0, rest.find(":::"));
      truth.emplace_back(std::string(trim(t.substr(0, sep))), std::string(trim(rest)));
    }
  }

  LabelTable resolved;
  if (table != nullptr) {
    resolved = *table;
  } else {
    std::vector<std::string> labels;
    for (const auto& [id, label] : truth) labels.push_back(label);
    resolved = detect_label_table(labels);
  }

  Corpus corpus;
  corpus.class_names = resolved.labels;
  for (const auto& [id, label] : truth) {
    const int y = resolved.lookup(label);
    if (y < 0) {
      throw CorpusError("author " + id + ": label '" + label + "' is not in label table " +
                        resolved.name);
    }
    const auto xml_path = dir / (id + ".xml");
    if (!std::filesystem::exists(xml_path)) {
      throw CorpusError("missing author file " + xml_path.string());
    }
    Author author{id, y, {}};
    const auto texts = parse_pan_documents(read_file(xml_path), xml_path.string());
    for (std::size_t i = 0; i < texts.size(); ++i) {
      add_document(author, id + "/" + std::to_string(i), texts[i], xml_path.string());
    }
    corpus.authors.push_back(std::move(author));
  }
  corpus.validate();
  return corpus;
}

Corpus load_jsonl_corpus(const std::filesystem::path& path, const LabelTable* table) {
  std::istringstream in(read_file(path));
  struct Row {
    std::string author_id, doc_id, text;
    nlohmann::json label;
  };
  std::vector<Row> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw CorpusError(where + ": malformed line (" + e.what() + ")");
    }
    for (const char* field : {"author_id", "doc_id", "text", "label"}) {
      if (!j.is_object() || !j.contains(field)) {
        throw CorpusError(where + ": missing field '" + field + "'");
      }
    }
    if (!j["author_id"].is_string() || !j["doc_id"].is_string() || !j["text"].is_string()) {
      throw CorpusError(where + ": author_id, doc_id and text must be strings");
    }
    rows.push_back({j["author_id"].get<std::string>(), j["doc_id"].get<std::string>(),
                    j["text"].get<std::string>(), j["label"]});
  }
  if (rows.empty()) throw CorpusError(path.string() + ": empty corpus file");

  std::vector<std::string> string_labels;
  for (const auto& r : rows) {
    if (r.label.is_string()) string_labels.push_back(r.label.get<std::string>());
  }
  LabelTable resolved = table != nullptr ? *table
                        : string_labels.empty() ? builtin_label_tables().front()
                                                : detect_label_table(string_labels);

  Corpus corpus;
  corpus.class_names = resolved.labels;
  std::unordered_map<std::string, std::size_t> position;
  for (const auto& r : rows) {
    int y = -1;
    if (r.label.is_number_integer()) {
      y = r.label.get<int>();
    } else if (r.label.is_string()) {
      y = resolved.lookup(r.label.get<std::string>());
    }
    if (y != 0 && y != 1) {
      throw CorpusError(path.string() + ": doc " + r.doc_id + " has unknown label " +
                        r.label.dump());
    }
    auto [it, inserted] = position.try_emplace(r.author_id, corpus.authors.size());
    if (inserted) corpus.authors.push_back({r.author_id, y, {}});
    Author& author = corpus.authors[it->second];
    if (author.label != y) {
      throw CorpusError(path.string() + ": author " + r.author_id + " has conflicting labels");
    }
    add_document(author, r.doc_id, r.text, path.string());
  }
  corpus.validate();
  return corpus;
}

void write_jsonl_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CorpusError("cannot write " + path.string());
  for (const auto& a : corpus.authors) {
    for (const auto& d : a.documents) {
      nlohmann::json j = {
          {"author_id", a.author_id}, {"doc_id", d.doc_id}, {"text", d.text}, {"label", a.label}};
      out << j.dump() << '\n';
    }
  }
}

Corpus filter_by_activity(const Corpus& corpus, const ActivityFilter& f) {
  if (f.min_docs > f.max_docs || f.min_len > f.max_len) {
    throw CorpusError("filter_by_activity: minimum exceeds maximum");
  }
  Corpus out;
  out.class_names = corpus.class_names;
  for (const auto& a : corpus.authors) {
    Author kept{a.author_id, a.label, {}};
    for (const auto& d : a.documents) {
      const std::size_t len = tokenize(d.text).size();
      if (len >= f.min_len && len <= f.max_len) kept.documents.push_back(d);
    }
    const std::size_t n = kept.documents.size();
    if (n > 0 && n >= f.min_docs && n <= f.max_docs) out.authors.push_back(std::move(kept));
  }
  std::size_t per_class[2] = {0, 0};
  for (const auto& a : out.authors) ++per_class[a.label];
  if (out.authors.size() < 2 || per_class[0] == 0 || per_class[1] == 0) {
    throw CorpusError("filter_by_activity leaves " + std::to_string(out.authors.size()) +
                      " authors (" + std::to_string(per_class[0]) + "/" +
                      std::to_string(per_class[1]) + " per class); need both classes");
  }
  return out;
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

SplitFractions parse_fractions(std::string_view text) {
  std::vector<double> parts;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = std::min(text.find(',', start), text.size());
    const std::string piece(trim(text.substr(start, comma - start)));
    try {
      std::size_t used = 0;
      parts.push_back(std::stod(piece, &used));
      if (used != piece.size()) throw std::invalid_argument(piece);
    } catch (const std::exception&) {
      throw CorpusError("invalid split fraction '" + piece + "'");
    }
    start = comma + 1;
  }
  if (parts.size() != 3) throw CorpusError("expected three split fractions train,val,test");
  return {parts[0], parts[1], parts[2]};
}

Split SplitAssignment::at(const std::string& author_id) const {
  auto it = by_author.find(author_id);
  if (it == by_author.end()) throw CorpusError("author " + author_id + " has no split");
  return it->second;
}

std::size_t SplitAssignment::count(Split s) const {
  return static_cast<std::size_t>(std::count_if(
      by_author.begin(), by_author.end(), [s](const auto& kv) { return kv.second == s; }));
}

SplitAssignment split_corpus(const Corpus& corpus, const SplitFractions& fr, std::uint64_t seed) {
  if (fr.train < 0 || fr.val < 0 || fr.test < 0) {
    throw CorpusError("split fractions must be non-negative");
  }
  if (std::abs(fr.train + fr.val + fr.test - 1.0) > 1e-9) {
    throw CorpusError("split fractions must sum to 1");
  }
  Rng rng(seed);
  SplitAssignment out;
  for (int label = 0; label < 2; ++label) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < corpus.authors.size(); ++i) {
      if (corpus.authors[i].label == label) members.push_back(i);
    }
    rng.shuffle(std::span<std::size_t>(members));
    const double n = static_cast<double>(members.size());
    const auto cut = [&](double fraction) {
      return std::min(members.size(), static_cast<std::size_t>(std::floor(fraction * n + 1e-9)));
    };
    const std::size_t train_end = cut(fr.train);
    const std::size_t val_end = std::max(train_end, cut(fr.train + fr.val));
    if (train_end == 0 && !members.empty()) {
      throw CorpusError("class " + corpus.class_names[label] + " would get no training authors");
    }
    for (std::size_t k = 0; k < members.size(); ++k) {
      const Split s = k < train_end ? Split::Train : k < val_end ? Split::Val : Split::Test;
      out.by_author[corpus.authors[members[k]].author_id] = s;
    }
  }
  return out;
}

}  // namespace hgnn

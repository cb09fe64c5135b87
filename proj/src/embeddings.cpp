#include "hgnn/embeddings.hpp"

#include "hgnn/binary_io.hpp"
#include "hgnn/random.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace hgnn {

namespace {

constexpr std::string_view kSentMagic = "HGNNSENT";

void require_finite(const std::vector<double>& v, const std::string& where) {
  for (double x : v) {
    if (!std::isfinite(x)) throw EmbeddingError(where + ": non-finite value");
  }
}

}  // namespace

const std::vector<double>* WordEmbeddingTable::find(std::string_view word) const {
  auto it = vectors.find(std::string(word));
  return it == vectors.end() ? nullptr : &it->second;
}

const std::vector<double>* SentenceEmbeddingTable::find(std::string_view doc_id) const {
  auto it = vectors.find(std::string(doc_id));
  return it == vectors.end() ? nullptr : &it->second;
}

WordEmbeddingTable load_word_vectors(const std::filesystem::path& path,
                                     const std::unordered_set<std::string>* keep) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw EmbeddingError("cannot open " + path.string());
  WordEmbeddingTable table;
  std::string line;
  std::size_t line_no = 0;
  std::vector<double> values;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    const std::size_t sp = line.find(' ');
    if (sp == std::string::npos || sp == 0) throw EmbeddingError(where + ": expected token and values");
    values.clear();
    const char* p = line.data() + sp;
    const char* end = line.data() + line.size();
    while (p < end) {
      while (p < end && *p == ' ') ++p;
      if (p == end) break;
      double x;
      auto [next, ec] = std::from_chars(p, end, x);
      if (ec != std::errc() || (next < end && *next != ' ')) {
        throw EmbeddingError(where + ": non-numeric field");
      }
      values.push_back(x);
      p = next;
    }
    if (table.dim == 0) {
      if (values.empty()) throw EmbeddingError(where + ": no vector values");
      table.dim = values.size();
    } else if (values.size() != table.dim) {
      throw EmbeddingError(where + ": dimension " + std::to_string(values.size()) +
                           " differs from " + std::to_string(table.dim));
    }
    require_finite(values, where);
    std::string token = line.substr(0, sp);
    if (keep == nullptr || keep->count(token) > 0) {
      table.vectors.insert_or_assign(std::move(token), values);
    }
  }
  return table;
}

void write_word_vectors(const WordEmbeddingTable& table, const std::filesystem::path& path) {
  std::vector<std::string> words;
  for (const auto& [w, v] : table.vectors) words.push_back(w);
  std::sort(words.begin(), words.end());
  std::ostringstream out;
  char buf[64];
  for (const auto& w : words) {
    out << w;
    for (double x : table.vectors.at(w)) {
      auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
      out << ' ' << std::string_view(buf, static_cast<std::size_t>(p - buf));
    }
    out << '\n';
  }
  write_file_atomic(path, out.str());
}

std::vector<double> word_feature(std::string_view word, const WordEmbeddingTable& table,
                                 std::uint64_t seed, std::size_t dim) {
  if (const auto* v = table.find(word)) {
    if (v->size() != dim) {
      throw EmbeddingError("word vector for '" + std::string(word) + "' has dimension " +
                           std::to_string(v->size()) + ", expected " + std::to_string(dim));
    }
    return *v;
  }
  Rng rng(seed ^ fnv1a(word));
  std::vector<double> out(dim);
  for (auto& x : out) x = rng.uniform(-0.01, 0.01);
  return out;
}

SentenceEmbeddingTable load_sentence_embeddings(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  SentenceEmbeddingTable table;
  auto insert = [&](std::string id, std::vector<double> v, const std::string& where) {
    if (v.empty()) throw EmbeddingError(where + ": empty vector");
    if (table.dim == 0) table.dim = v.size();
    if (v.size() != table.dim) {
      throw EmbeddingError(where + ": dimension " + std::to_string(v.size()) + " differs from " +
                           std::to_string(table.dim));
    }
    require_finite(v, where);
    if (!table.vectors.emplace(id, std::move(v)).second) {
      throw EmbeddingError(where + ": duplicate doc_id " + id);
    }
  };

  if (bytes.size() >= kSentMagic.size() &&
      std::string_view(reinterpret_cast<const char*>(bytes.data()), kSentMagic.size()) ==
          kSentMagic) {
    try {
      ByteReader r(bytes);
      r.get_bytes(kSentMagic.size());
      const auto version = r.get<std::uint32_t>();
      if (version != 1) throw EmbeddingError(path.string() + ": unsupported version");
      const auto count = r.get<std::uint64_t>();
      const auto dim = r.get<std::uint64_t>();
      for (std::uint64_t i = 0; i < count; ++i) {
        std::string id = r.get_bytes(r.get<std::uint32_t>());
        std::vector<double> v(dim);
        r.get_array(std::span<double>(v));
        insert(std::move(id), std::move(v), path.string());
      }
    } catch (const FormatError& e) {
      throw EmbeddingError(path.string() + ": " + e.what());
    }
    return table;
  }

  std::istringstream in(std::string(bytes.begin(), bytes.end()));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    try {
      const auto j = nlohmann::json::parse(line);
      insert(j.at("doc_id").get<std::string>(), j.at("vector").get<std::vector<double>>(), where);
    } catch (const nlohmann::json::exception& e) {
      throw EmbeddingError(where + ": " + e.what());
    }
  }
  return table;
}

void write_sentence_embeddings(const SentenceEmbeddingTable& table,
                               const std::vector<std::string>& order,
                               const std::filesystem::path& path) {
  std::string out;
  for (const auto& id : order) {
    nlohmann::json j = {{"doc_id", id}, {"vector", table.vectors.at(id)}};
    out += j.dump();
    out += '\n';
  }
  write_file_atomic(path, out);
}

void write_sentence_embeddings_binary(const SentenceEmbeddingTable& table,
                                      const std::vector<std::string>& order,
                                      const std::filesystem::path& path) {
  ByteWriter w;
  w.put_bytes(kSentMagic);
  w.put<std::uint32_t>(1);
  w.put<std::uint64_t>(order.size());
  w.put<std::uint64_t>(table.dim);
  for (const auto& id : order) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(id.size()));
    w.put_bytes(id);
    w.put_array(std::span<const double>(table.vectors.at(id)));
  }
  const auto& b = w.bytes();
  write_file_atomic(path, std::string_view(reinterpret_cast<const char*>(b.data()), b.size()));
}

std::vector<double> pool_user_embedding(std::span<const std::vector<double>* const> vectors) {
  if (vectors.empty()) throw EmbeddingError("cannot pool an empty list of vectors");
  const std::size_t dim = vectors.front()->size();
  for (const auto* v : vectors) {
    if (v->size() != dim) throw EmbeddingError("cannot pool vectors of different dimension");
  }
  const double n = static_cast<double>(vectors.size());
  std::vector<double> mean(dim);
  std::vector<double> column(vectors.size());
  for (std::size_t k = 0; k < dim; ++k) {
    for (std::size_t i = 0; i < vectors.size(); ++i) column[i] = (*vectors[i])[k];
    std::sort(column.begin(), column.end());
    const double base = column.front();
    double offsets = 0.0;
    for (double x : column) offsets += x - base;
    mean[k] = base + offsets / n;
  }
  return mean;
}

std::vector<double> pool_user_embedding(const std::vector<std::vector<double>>& vectors) {
  std::vector<const std::vector<double>*> refs;
  refs.reserve(vectors.size());
  for (const auto& v : vectors) refs.push_back(&v);
  return pool_user_embedding(std::span<const std::vector<double>* const>(refs));
}

}  // namespace hgnn

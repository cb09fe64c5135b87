#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace hgnn {

class EmbeddingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct WordEmbeddingTable {
  std::size_t dim = 0;
  std::unordered_map<std::string, std::vector<double>> vectors;

  const std::vector<double>* find(std::string_view word) const;
};

struct SentenceEmbeddingTable {
  std::size_t dim = 0;
  std::unordered_map<std::string, std::vector<double>> vectors;

  const std::vector<double>* find(std::string_view doc_id) const;
};

// GloVe text format: `token v1 ... vd` per line. The dimension is taken from
// the first line and enforced afterwards. When `keep` is given, only those
// tokens are stored (full GloVe files are large), though every line is still
// validated.
WordEmbeddingTable load_word_vectors(const std::filesystem::path& path,
                                     const std::unordered_set<std::string>* keep = nullptr);
void write_word_vectors(const WordEmbeddingTable& table, const std::filesystem::path& path);

// Stored vector on a hit. On a miss, a uniform vector in [-0.01, 0.01]^dim
// generated from splitmix64(seed ^ fnv1a(word)) seeding mt19937_64, with
// 53-bit uniforms (see random.hpp).
std::vector<double> word_feature(std::string_view word, const WordEmbeddingTable& table,
                                 std::uint64_t seed, std::size_t dim);

// JSON Lines ({"doc_id": ..., "vector": [...]}) or the binary sidecar written
// by write_sentence_embeddings_binary; the format is detected from the magic.
SentenceEmbeddingTable load_sentence_embeddings(const std::filesystem::path& path);
void write_sentence_embeddings(const SentenceEmbeddingTable& table,
                               const std::vector<std::string>& order,
                               const std::filesystem::path& path);
// Layout: "HGNNSENT" | u32 version=1 | u64 count | u64 dim |
// count * (u32 id_len | id bytes | dim * f64), little-endian.
void write_sentence_embeddings_binary(const SentenceEmbeddingTable& table,
                                      const std::vector<std::string>& order,
                                      const std::filesystem::path& path);

// Elementwise mean. Computed per coordinate as min + (sum of sorted offsets
// from the min) / n, which makes the result exactly permutation invariant and
// exactly v for n copies of v.
std::vector<double> pool_user_embedding(std::span<const std::vector<double>* const> vectors);
std::vector<double> pool_user_embedding(const std::vector<std::vector<double>>& vectors);

}  // namespace hgnn

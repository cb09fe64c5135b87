#pragma once

#include "hgnn/corpus.hpp"
#include "hgnn/embeddings.hpp"

#include <cstdint>

namespace hgnn {

// Small linearly separable corpus: each class draws most tokens from its own
// word pool plus a few from a shared pool. Sentence embeddings are the mean
// of per-word seeded vectors plus noise, so they carry the class signal too.
struct SyntheticSpec {
  std::size_t users = 20;
  std::size_t docs_per_user = 10;
  std::size_t tokens_per_doc = 12;
  std::size_t class_tokens = 8;  // per doc, from the author's class pool
  std::size_t class_words = 20;  // pool size per class
  std::size_t shared_words = 10;
  std::size_t word_dim = 8;
  std::size_t sentence_dim = 16;
  double noise = 0.1;
  std::uint64_t seed = 7;
};

struct SyntheticData {
  Corpus corpus;
  WordEmbeddingTable word_vectors;
  SentenceEmbeddingTable sentence_vectors;
};

SyntheticData make_synthetic(const SyntheticSpec& spec);

}  // namespace hgnn

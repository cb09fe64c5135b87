#include "hgnn/synthetic.hpp"

#include "hgnn/random.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace hgnn {

namespace {

std::vector<double> seeded_vector(std::string_view key, std::uint64_t seed, std::size_t dim) {
  Rng rng(seed ^ fnv1a(key));
  std::vector<double> v(dim);
  for (auto& x : v) x = rng.normal();
  return v;
}

}  // namespace

SyntheticData make_synthetic(const SyntheticSpec& spec) {
  if (spec.users < 2 || spec.docs_per_user == 0 || spec.class_words == 0 ||
      spec.class_tokens > spec.tokens_per_doc ||
      (spec.shared_words == 0 && spec.class_tokens < spec.tokens_per_doc)) {
    throw std::invalid_argument("make_synthetic: inconsistent spec");
  }
  SyntheticData out;
  out.corpus.class_names = {"neg", "pos"};
  out.word_vectors.dim = spec.word_dim;
  out.sentence_vectors.dim = spec.sentence_dim;

  std::vector<std::string> pools[2];
  std::vector<std::string> shared;
  for (std::size_t i = 0; i < spec.class_words; ++i) {
    pools[0].push_back("calm" + std::to_string(i));
    pools[1].push_back("rage" + std::to_string(i));
  }
  for (std::size_t i = 0; i < spec.shared_words; ++i) shared.push_back("common" + std::to_string(i));
  for (const auto* pool : {&pools[0], &pools[1], &shared}) {
    for (const auto& w : *pool) {
      out.word_vectors.vectors[w] = seeded_vector(w, spec.seed + 1, spec.word_dim);
    }
  }

  Rng rng(spec.seed);
  for (std::size_t u = 0; u < spec.users; ++u) {
    Author a;
    a.author_id = "user" + std::to_string(u);
    a.label = static_cast<int>(u % 2);
    for (std::size_t d = 0; d < spec.docs_per_user; ++d) {
      Document doc;
      doc.author_id = a.author_id;
      doc.doc_id = a.author_id + "/" + std::to_string(d);
      std::vector<const std::string*> words;
      for (std::size_t k = 0; k < spec.tokens_per_doc; ++k) {
        const auto& pool = k < spec.class_tokens ? pools[a.label] : shared;
        words.push_back(&pool[rng.below(pool.size())]);
      }
      rng.shuffle(std::span<const std::string*>(words));
      std::vector<double> sent(spec.sentence_dim, 0.0);
      for (const auto* w : words) {
        if (!doc.text.empty()) doc.text += ' ';
        doc.text += *w;
        const auto v = seeded_vector(*w, spec.seed + 2, spec.sentence_dim);
        for (std::size_t j = 0; j < sent.size(); ++j) sent[j] += v[j] / static_cast<double>(words.size());
      }
      for (auto& x : sent) x += spec.noise * rng.normal();
      out.sentence_vectors.vectors[doc.doc_id] = std::move(sent);
      a.documents.push_back(std::move(doc));
    }
    out.corpus.authors.push_back(std::move(a));
  }
  return out;
}

}  // namespace hgnn

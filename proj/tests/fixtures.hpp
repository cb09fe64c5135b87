#pragma once

#include "hgnn/corpus.hpp"
#include "hgnn/embeddings.hpp"
#include "hgnn/hetgraph.hpp"
#include "hgnn/random.hpp"
#include "hgnn/synthetic.hpp"
#include "hgnn/textstats.hpp"

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <string>
#include <tuple>
#include <vector>

namespace fixture {

namespace fs = std::filesystem;

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("hgnn_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

// Up to 50 docs of up to 30 tokens over a skewed 14-word pool, with the odd
// special token and empty document.
inline std::vector<hgnn::TokenizedDoc> random_docs(std::uint64_t seed) {
  static const std::vector<std::string> pool{"the", "cat", "sat", "on",  "mat",  "dog",   "ran",
                                             "far", "red", "sky", "sea", "blue", "<url>", "zeta"};
  hgnn::Rng rng(seed);
  std::vector<hgnn::TokenizedDoc> docs(2 + rng.below(49));
  for (std::size_t i = 0; i < docs.size(); ++i) {
    docs[i].doc_id = "d" + std::to_string(i);
    const std::size_t len = rng.below(31);
    for (std::size_t k = 0; k < len; ++k) {
      // Squaring skews the draw toward the front of the pool.
      const double u = rng.uniform();
      docs[i].tokens.push_back(pool[static_cast<std::size_t>(u * u * pool.size())]);
    }
  }
  return docs;
}

inline std::vector<std::vector<std::string>> token_lists(const std::vector<hgnn::TokenizedDoc>& docs) {
  std::vector<std::vector<std::string>> out;
  for (const auto& d : docs) out.push_back(d.tokens);
  return out;
}

// 2 users, 4 docs, 4 words: ten nodes with every stored relation present.
inline hgnn::HeteroGraph tiny_graph(std::uint64_t seed) {
  using hgnn::Matrix;
  using hgnn::Relation;
  hgnn::Rng rng(seed);
  auto random = [&](Eigen::Index r, Eigen::Index c) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-1.0, 1.0);
    return m;
  };
  hgnn::HeteroGraph g;
  g.features[0] = random(2, 3);
  g.features[1] = random(4, 3);
  g.features[2] = random(4, 2);
  auto& ud = g.stored(Relation::UserDoc);
  ud.push(0, 0, 1);
  ud.push(0, 1, 1);
  ud.push(1, 2, 1);
  ud.push(1, 3, 1);
  auto& dw = g.stored(Relation::DocWord);
  dw.push(0, 0, 0.7);
  dw.push(0, 1, 1.2);
  dw.push(1, 1, 0.4);
  dw.push(2, 2, 0.9);
  dw.push(3, 2, 0.3);
  dw.push(3, 3, 1.5);
  auto& ww = g.stored(Relation::WordWord);
  for (auto [a, b, w] : {std::tuple{0u, 1u, 0.5}, {1u, 2u, 0.8}, {2u, 3u, 0.2}}) {
    ww.push(a, b, w);
    ww.push(b, a, w);
  }
  auto& dd = g.stored(Relation::DocDoc);
  dd.push(0, 1, 0.9);
  dd.push(1, 0, 0.9);
  dd.push(2, 3, 0.6);
  dd.push(3, 1, -0.2);
  g.labels = {0, 1};
  g.splits = {hgnn::Split::Train, hgnn::Split::Train};
  g.user_ids = {"u0", "u1"};
  g.doc_ids = {"u0/0", "u0/1", "u1/0", "u1/1"};
  g.words = {"w0", "w1", "w2", "w3"};
  g.config.knn = 1;
  g.validate();
  return g;
}

struct SyntheticGraph {
  hgnn::SyntheticData data;
  hgnn::SplitAssignment splits;
  hgnn::HeteroGraph graph;
};

inline SyntheticGraph synthetic_graph(std::uint64_t seed = 7, std::size_t users = 20) {
  SyntheticGraph s;
  hgnn::SyntheticSpec spec;
  spec.seed = seed;
  spec.users = users;
  s.data = hgnn::make_synthetic(spec);
  s.splits = hgnn::split_corpus(s.data.corpus, {}, seed);
  hgnn::GraphConfig cfg;
  cfg.seed = seed;
  s.graph = hgnn::build_graph_from_corpus(s.data.corpus, s.splits, s.data.word_vectors,
                                          s.data.sentence_vectors, cfg);
  return s;
}

// PAN layout: truth.txt plus one XML file per author. Texts mix words,
// mentions, links, hashtags and an XML entity so the parser sees real shapes.
inline void write_pan(const fs::path& dir, std::size_t authors, std::size_t docs_per_author,
                      std::uint64_t seed) {
  fs::create_directories(dir);
  hgnn::Rng rng(seed);
  static const std::vector<std::string> neutral{"today", "really", "people", "news", "think",
                                                "time", "good", "world", "about", "going"};
  static const std::vector<std::string> marked[2] = {
      {"lovely", "peace", "friends", "sunshine", "thanks"},
      {"angry", "hate", "stupid", "disgusting", "worst"}};
  std::string truth;
  for (std::size_t a = 0; a < authors; ++a) {
    const std::string id = "a" + std::to_string(1000 + a);
    const int label = static_cast<int>(a % 2);
    truth += id + ":::" + std::to_string(label) + "\n";
    std::string xml = "<author lang=\"en\">\n\t<documents>\n";
    for (std::size_t d = 0; d < docs_per_author; ++d) {
      std::string text;
      const std::size_t len = 6 + rng.below(10);
      for (std::size_t k = 0; k < len; ++k) {
        const auto& pool = rng.uniform() < 0.4 ? marked[label] : neutral;
        text += pool[rng.below(pool.size())] + " ";
      }
      if (d % 3 == 0) text += "#USER# ";
      if (d % 4 == 0) text += "#URL# ";
      if (d % 5 == 0) text += "&amp; #HASHTAG#";
      xml += "\t\t<document><![CDATA[" + text + "]]></document>\n";
    }
    xml += "\t</documents>\n</author>\n";
    write_text(dir / (id + ".xml"), xml);
  }
  write_text(dir / "truth.txt", truth);
}

// Deterministic sentence embeddings for every document of a corpus.
inline hgnn::SentenceEmbeddingTable sentence_table(const hgnn::Corpus& c, std::size_t dim,
                                                   std::uint64_t seed) {
  hgnn::SentenceEmbeddingTable t;
  t.dim = dim;
  for (const auto& a : c.authors) {
    for (const auto& d : a.documents) {
      hgnn::Rng rng(seed ^ hgnn::fnv1a(d.doc_id));
      std::vector<double> v(dim);
      for (auto& x : v) x = rng.normal() + (a.label == 1 ? 0.5 : -0.5);
      t.vectors[d.doc_id] = std::move(v);
    }
  }
  return t;
}

}  // namespace fixture

#include "hgnn/hetgraph.hpp"

#include "hgnn/binary_io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace hgnn {

namespace {

constexpr std::string_view kGraphMagic = "HGNNGRPH";
constexpr std::size_t kRowBlock = 256;
// Screening margin for GEMM similarities; GEMM and the exact dot differ by
// ~1e-15 on unit vectors, so every true top-K member lies within it.
constexpr double kScreenMargin = 1e-9;

std::size_t idx(NodeType t) { return static_cast<std::size_t>(t); }
std::size_t idx(Relation r) { return static_cast<std::size_t>(r); }

bool matrix_equal(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::equal(a.data(), a.data() + a.size(), b.data());
}

EdgeList reversed(const EdgeList& e) { return EdgeList{e.dst, e.src, e.weight}; }

void sort_edges(EdgeList& e) {
  std::vector<std::size_t> order(e.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return e.src[a] != e.src[b] ? e.src[a] < e.src[b] : e.dst[a] < e.dst[b];
  });
  EdgeList out;
  for (std::size_t i : order) out.push(e.src[i], e.dst[i], e.weight[i]);
  e = std::move(out);
}

}  // namespace

std::string_view to_string(NodeType t) {
  switch (t) {
    case NodeType::User: return "user";
    case NodeType::Doc: return "doc";
    case NodeType::Word: return "word";
  }
  return "?";
}

std::string_view to_string(Relation r) {
  switch (r) {
    case Relation::UserDoc: return "user-doc";
    case Relation::DocWord: return "doc-word";
    case Relation::WordWord: return "word-word";
    case Relation::DocDoc: return "doc-doc";
    case Relation::DocUser: return "doc-user";
    case Relation::WordDoc: return "word-doc";
  }
  return "?";
}

std::optional<Relation> parse_relation(std::string_view name) {
  for (int i = 0; i < 6; ++i) {
    const auto r = static_cast<Relation>(i);
    if (to_string(r) == name) return r;
  }
  return std::nullopt;
}

std::string_view to_string(GraphVariant v) {
  switch (v) {
    case GraphVariant::All: return "all";
    case GraphVariant::NoWordWord: return "no-word-word";
    case GraphVariant::NoWord: return "no-word";
    case GraphVariant::NoDocDoc: return "no-doc-doc";
  }
  return "?";
}

GraphVariant parse_variant(std::string_view name) {
  for (auto v : all_variants()) {
    if (to_string(v) == name) return v;
  }
  throw GraphError("unknown graph variant '" + std::string(name) +
                   "' (expected all, no-word-word, no-word or no-doc-doc)");
}

const std::array<GraphVariant, 4>& all_variants() {
  static constexpr std::array<GraphVariant, 4> kVariants = {
      GraphVariant::All, GraphVariant::NoWordWord, GraphVariant::NoWord, GraphVariant::NoDocDoc};
  return kVariants;
}

NodeType source_type(Relation r) {
  switch (r) {
    case Relation::UserDoc: return NodeType::User;
    case Relation::DocWord:
    case Relation::DocDoc:
    case Relation::DocUser: return NodeType::Doc;
    case Relation::WordWord:
    case Relation::WordDoc: return NodeType::Word;
  }
  return NodeType::User;
}

NodeType target_type(Relation r) {
  switch (r) {
    case Relation::UserDoc:
    case Relation::DocDoc:
    case Relation::WordDoc: return NodeType::Doc;
    case Relation::DocWord:
    case Relation::WordWord: return NodeType::Word;
    case Relation::DocUser: return NodeType::User;
  }
  return NodeType::User;
}

const EdgeList& HeteroGraph::stored(Relation r) const {
  if (idx(r) >= kStoredRelationCount) throw GraphError("relation is not stored: " + std::string(to_string(r)));
  return edges[idx(r)];
}

EdgeList& HeteroGraph::stored(Relation r) {
  if (idx(r) >= kStoredRelationCount) throw GraphError("relation is not stored: " + std::string(to_string(r)));
  return edges[idx(r)];
}

std::vector<bool> HeteroGraph::mask(Split s) const {
  std::vector<bool> m(splits.size());
  for (std::size_t i = 0; i < splits.size(); ++i) m[i] = splits[i] == s;
  return m;
}

std::size_t HeteroGraph::total_nodes() const {
  return node_count(NodeType::User) + node_count(NodeType::Doc) + node_count(NodeType::Word);
}

std::size_t HeteroGraph::total_edges() const {
  std::size_t n = 0;
  for (const auto& e : edges) n += e.size();
  return n;
}

void HeteroGraph::validate() const {
  for (const auto& f : features) {
    if (!f.allFinite()) throw GraphError("non-finite node feature");
  }
  for (std::size_t r = 0; r < kStoredRelationCount; ++r) {
    const auto rel = static_cast<Relation>(r);
    const auto& e = edges[r];
    if (e.dst.size() != e.size() || e.weight.size() != e.size()) {
      throw GraphError(std::string(to_string(rel)) + ": ragged edge arrays");
    }
    const std::size_t ns = node_count(source_type(rel));
    const std::size_t nd = node_count(target_type(rel));
    for (std::size_t i = 0; i < e.size(); ++i) {
      if (e.src[i] >= ns || e.dst[i] >= nd) {
        throw GraphError(std::string(to_string(rel)) + ": edge endpoint out of range");
      }
      if (!std::isfinite(e.weight[i])) {
        throw GraphError(std::string(to_string(rel)) + ": non-finite edge weight");
      }
    }
  }
  const std::size_t n_users = node_count(NodeType::User);
  if (labels.size() != n_users || splits.size() != n_users) {
    throw GraphError("labels/splits do not match the user count");
  }
  std::vector<std::size_t> owners(node_count(NodeType::Doc), 0);
  for (Index d : stored(Relation::UserDoc).dst) ++owners[d];
  if (std::any_of(owners.begin(), owners.end(), [](std::size_t c) { return c != 1; })) {
    throw GraphError("every doc needs exactly one owning user edge");
  }
}

bool HeteroGraph::operator==(const HeteroGraph& o) const {
  for (std::size_t t = 0; t < kNodeTypeCount; ++t) {
    if (!matrix_equal(features[t], o.features[t])) return false;
  }
  return edges == o.edges && labels == o.labels && splits == o.splits &&
         config.knn == o.config.knn && config.min_count == o.config.min_count &&
         config.window == o.config.window && config.seed == o.config.seed &&
         ablation == o.ablation && class_names == o.class_names && user_ids == o.user_ids &&
         doc_ids == o.doc_ids && words == o.words;
}

EdgeList knn_doc_edges(const Matrix& embeddings, std::size_t k) {
  const std::size_t n = static_cast<std::size_t>(embeddings.rows());
  const std::size_t d = static_cast<std::size_t>(embeddings.cols());
  if (k < 1) throw GraphError("knn: K must be at least 1");
  if (k >= n) {
    throw GraphError("knn: K=" + std::to_string(k) + " needs more than " + std::to_string(k) +
                     " docs, got " + std::to_string(n));
  }
  Matrix unit(embeddings.rows(), embeddings.cols());
  for (std::size_t i = 0; i < n; ++i) {
    const std::span<const double> row(embeddings.row(i).data(), d);
    const double norm = std::sqrt(dot(row, row));
    if (!(norm > 0.0)) throw GraphError("knn: doc " + std::to_string(i) + " has a zero-norm embedding");
    for (std::size_t c = 0; c < d; ++c) unit(i, c) = row[c] / norm;
  }
  auto exact = [&](std::size_t i, std::size_t j) {
    return dot({unit.row(i).data(), d}, {unit.row(j).data(), d});
  };

  EdgeList out;
  out.src.reserve(n * k);
  out.dst.reserve(n * k);
  out.weight.reserve(n * k);
  std::vector<double> scratch(n);
  std::vector<std::pair<double, Index>> candidates;
  for (std::size_t start = 0; start < n; start += kRowBlock) {
    const std::size_t rows = std::min(kRowBlock, n - start);
    // GEMM screens candidates; the ranking itself uses exact dots so that
    // equal inputs always compare equal.
    const Matrix block = unit.middleRows(start, rows) * unit.transpose();
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t i = start + r;
      for (std::size_t j = 0; j < n; ++j) scratch[j] = block(r, j);
      scratch[i] = -std::numeric_limits<double>::infinity();
      std::vector<double> sorted = scratch;
      std::nth_element(sorted.begin(), sorted.begin() + (k - 1), sorted.end(), std::greater<>());
      const double threshold = sorted[k - 1] - kScreenMargin;
      candidates.clear();
      for (std::size_t j = 0; j < n; ++j) {
        if (j != i && scratch[j] >= threshold) candidates.emplace_back(exact(i, j), static_cast<Index>(j));
      }
      std::partial_sort(candidates.begin(), candidates.begin() + k, candidates.end(),
                        [](const auto& a, const auto& b) {
                          return a.first != b.first ? a.first > b.first : a.second < b.second;
                        });
      for (std::size_t m = 0; m < k; ++m) {
        out.push(static_cast<Index>(i), candidates[m].second, candidates[m].first);
      }
    }
  }
  return out;
}

EdgeList symmetrize(const EdgeList& edges) {
  EdgeList both = edges;
  for (std::size_t i = 0; i < edges.size(); ++i) both.push(edges.dst[i], edges.src[i], edges.weight[i]);
  sort_edges(both);
  EdgeList out;
  for (std::size_t i = 0; i < both.size(); ++i) {
    if (!out.src.empty() && out.src.back() == both.src[i] && out.dst.back() == both.dst[i]) continue;
    out.push(both.src[i], both.dst[i], both.weight[i]);
  }
  return out;
}

HeteroGraph build_graph(const GraphInputs& in, const GraphConfig& config,
                        const std::function<void(const std::string&)>& warn) {
  const Corpus& corpus = in.corpus;
  const std::size_t n_users = corpus.authors.size();
  const std::size_t n_docs = corpus.document_count();
  if (in.docs.size() != n_docs) {
    throw GraphError("tokenised docs (" + std::to_string(in.docs.size()) +
                     ") do not match corpus documents (" + std::to_string(n_docs) + ")");
  }
  if (in.vocab.n_docs != n_docs) {
    throw GraphError("vocabulary was built from a different document set");
  }
  const std::size_t sent_dim = in.sentence_vectors.dim;
  const std::size_t word_dim = in.word_dim != 0 ? in.word_dim : in.word_vectors.dim;
  if (word_dim == 0) throw GraphError("word feature dimension is unknown (empty word table)");

  HeteroGraph g;
  g.config = config;
  g.class_names = corpus.class_names;

  Matrix& doc_x = g.features[idx(NodeType::Doc)];
  doc_x.resize(static_cast<Eigen::Index>(n_docs), static_cast<Eigen::Index>(sent_dim));
  Matrix& user_x = g.features[idx(NodeType::User)];
  user_x.resize(static_cast<Eigen::Index>(n_users), static_cast<Eigen::Index>(sent_dim));

  EdgeList& user_doc = g.edges[idx(Relation::UserDoc)];
  std::size_t d = 0;
  for (std::size_t u = 0; u < n_users; ++u) {
    const Author& a = corpus.authors[u];
    g.user_ids.push_back(a.author_id);
    g.labels.push_back(static_cast<std::uint8_t>(a.label));
    g.splits.push_back(in.splits.at(a.author_id));
    std::vector<const std::vector<double>*> pooled;
    for (const Document& doc : a.documents) {
      const auto* v = in.sentence_vectors.find(doc.doc_id);
      if (v == nullptr) throw GraphError("missing sentence embedding for doc " + doc.doc_id);
      if (in.docs[d].doc_id != doc.doc_id) {
        throw GraphError("tokenised doc order differs from corpus at " + doc.doc_id);
      }
      for (std::size_t c = 0; c < sent_dim; ++c) doc_x(d, c) = (*v)[c];
      pooled.push_back(v);
      g.doc_ids.push_back(doc.doc_id);
      user_doc.push(static_cast<Index>(u), static_cast<Index>(d), 1.0);
      ++d;
    }
    const auto mean = pool_user_embedding(std::span<const std::vector<double>* const>(pooled));
    for (std::size_t c = 0; c < sent_dim; ++c) user_x(u, c) = mean[c];
  }

  Matrix& word_x = g.features[idx(NodeType::Word)];
  word_x.resize(static_cast<Eigen::Index>(in.vocab.size()), static_cast<Eigen::Index>(word_dim));
  for (std::size_t w = 0; w < in.vocab.size(); ++w) {
    const auto v = word_feature(in.vocab.words[w], in.word_vectors, config.seed, word_dim);
    for (std::size_t c = 0; c < word_dim; ++c) word_x(w, c) = v[c];
    g.words.push_back(in.vocab.words[w]);
  }

  EdgeList& doc_word = g.edges[idx(Relation::DocWord)];
  for (std::size_t i = 0; i < n_docs; ++i) {
    const auto weights = compute_tfidf(in.docs[i], in.vocab, n_docs);
    if (weights.empty() && warn) {
      bool any_in_vocab = false;
      WordId unused;
      for (const auto& t : in.docs[i].tokens) any_in_vocab = any_in_vocab || in.vocab.find(t, unused);
      if (!any_in_vocab) warn("doc " + in.docs[i].doc_id + " has no in-vocabulary tokens");
    }
    for (const auto& [w, weight] : weights) doc_word.push(static_cast<Index>(i), w, weight);
  }

  EdgeList& word_word = g.edges[idx(Relation::WordWord)];
  for (const PmiEdge& e : pmi_edges(in.stats)) {
    word_word.push(e.a, e.b, e.pmi);
    word_word.push(e.b, e.a, e.pmi);
  }
  sort_edges(word_word);

  g.edges[idx(Relation::DocDoc)] = knn_doc_edges(doc_x, config.knn);
  g.validate();
  return g;
}

HeteroGraph build_graph_from_corpus(const Corpus& corpus, const SplitAssignment& splits,
                                    const WordEmbeddingTable& word_vectors,
                                    const SentenceEmbeddingTable& sentence_vectors,
                                    const GraphConfig& config,
                                    const std::function<void(const std::string&)>& warn) {
  std::vector<TokenizedDoc> docs;
  docs.reserve(corpus.document_count());
  for (const auto& a : corpus.authors) {
    for (const auto& d : a.documents) docs.push_back({d.doc_id, tokenize(d.text)});
  }
  const Vocabulary vocab = build_vocabulary(docs, config.min_count);
  const CooccurrenceStats stats = count_cooccurrence(docs, vocab, config.window);
  return build_graph({corpus, splits, docs, vocab, stats, word_vectors, sentence_vectors, 0},
                     config, warn);
}

HeteroGraph apply_variant(const HeteroGraph& g, GraphVariant v) {
  HeteroGraph out = g;
  switch (v) {
    case GraphVariant::All:
      break;
    case GraphVariant::NoWordWord:
      out.edges[idx(Relation::WordWord)] = {};
      out.ablation.word_word = true;
      break;
    case GraphVariant::NoWord: {
      const auto dim = out.features[idx(NodeType::Word)].cols();
      out.features[idx(NodeType::Word)].resize(0, dim);
      out.words.clear();
      out.edges[idx(Relation::DocWord)] = {};
      out.edges[idx(Relation::WordWord)] = {};
      out.ablation.words = true;
      out.ablation.word_word = true;
      break;
    }
    case GraphVariant::NoDocDoc:
      out.edges[idx(Relation::DocDoc)] = {};
      out.ablation.doc_doc = true;
      break;
  }
  return out;
}

std::vector<Relation> active_relations(const HeteroGraph& g) {
  std::vector<Relation> rels = {Relation::UserDoc, Relation::DocUser};
  if (!g.ablation.words) {
    rels.push_back(Relation::DocWord);
    rels.push_back(Relation::WordDoc);
    if (!g.ablation.word_word) rels.push_back(Relation::WordWord);
  }
  if (!g.ablation.doc_doc) rels.push_back(Relation::DocDoc);
  return rels;
}

EdgeList message_edges(const HeteroGraph& g, Relation r) {
  switch (r) {
    case Relation::UserDoc:
    case Relation::DocWord:
    case Relation::WordWord: return g.stored(r);
    case Relation::DocDoc: return symmetrize(g.stored(r));
    case Relation::DocUser: return reversed(g.stored(Relation::UserDoc));
    case Relation::WordDoc: return reversed(g.stored(Relation::DocWord));
  }
  return {};
}

void serialize_graph(const HeteroGraph& g, const std::filesystem::path& path) {
  nlohmann::json header;
  header["format"] = "hgnn-graph";
  for (std::size_t t = 0; t < kNodeTypeCount; ++t) {
    const auto name = std::string(to_string(static_cast<NodeType>(t)));
    header["nodes"][name] = {{"count", g.features[t].rows()}, {"dim", g.features[t].cols()}};
  }
  for (std::size_t r = 0; r < kStoredRelationCount; ++r) {
    header["edges"][std::string(to_string(static_cast<Relation>(r)))] = g.edges[r].size();
  }
  header["config"] = {{"knn", g.config.knn},
                      {"min_count", g.config.min_count},
                      {"window", g.config.window},
                      {"seed", g.config.seed}};
  header["ablation"] = {{"word_word", g.ablation.word_word},
                        {"words", g.ablation.words},
                        {"doc_doc", g.ablation.doc_doc}};
  header["class_names"] = g.class_names;
  header["user_ids"] = g.user_ids;
  header["doc_ids"] = g.doc_ids;
  header["words"] = g.words;

  ByteWriter w;
  for (const auto& f : g.features) w.put_array(std::span<const double>(f.data(), f.size()));
  for (const auto& e : g.edges) {
    w.put_array(std::span<const Index>(e.src));
    w.put_array(std::span<const Index>(e.dst));
    w.put_array(std::span<const double>(e.weight));
  }
  w.put_array(std::span<const std::uint8_t>(g.labels));
  for (Split s : g.splits) w.put<std::uint8_t>(static_cast<std::uint8_t>(s));
  write_framed(path, kGraphMagic, kGraphFormatVersion, header.dump(), w.bytes());
}

HeteroGraph deserialize_graph(const std::filesystem::path& path) {
  const Framed f = read_framed(path, kGraphMagic, kGraphFormatVersion);
  HeteroGraph g;
  try {
    const auto header = nlohmann::json::parse(f.header_json);
    if (header.at("format") != "hgnn-graph") throw FormatError("not a graph file");
    ByteReader r(f.payload);
    for (std::size_t t = 0; t < kNodeTypeCount; ++t) {
      const auto& node = header.at("nodes").at(std::string(to_string(static_cast<NodeType>(t))));
      auto& m = g.features[t];
      m.resize(node.at("count").get<Eigen::Index>(), node.at("dim").get<Eigen::Index>());
      r.get_array(std::span<double>(m.data(), static_cast<std::size_t>(m.size())));
    }
    for (std::size_t rel = 0; rel < kStoredRelationCount; ++rel) {
      const auto n = header.at("edges").at(std::string(to_string(static_cast<Relation>(rel)))).get<std::size_t>();
      auto& e = g.edges[rel];
      e.src.resize(n);
      e.dst.resize(n);
      e.weight.resize(n);
      r.get_array(std::span<Index>(e.src));
      r.get_array(std::span<Index>(e.dst));
      r.get_array(std::span<double>(e.weight));
    }
    const std::size_t n_users = g.node_count(NodeType::User);
    g.labels.resize(n_users);
    r.get_array(std::span<std::uint8_t>(g.labels));
    for (std::size_t u = 0; u < n_users; ++u) {
      const auto s = r.get<std::uint8_t>();
      if (s > 2) throw FormatError("invalid split code");
      g.splits.push_back(static_cast<Split>(s));
    }
    if (r.remaining() != 0) throw FormatError("trailing bytes after payload");
    const auto& c = header.at("config");
    g.config = {c.at("knn").get<std::size_t>(), c.at("min_count").get<std::size_t>(),
                c.at("window").get<std::size_t>(), c.at("seed").get<std::uint64_t>()};
    const auto& a = header.at("ablation");
    g.ablation = {a.at("word_word").get<bool>(), a.at("words").get<bool>(),
                  a.at("doc_doc").get<bool>()};
    g.class_names = header.at("class_names").get<std::array<std::string, 2>>();
    g.user_ids = header.at("user_ids").get<std::vector<std::string>>();
    g.doc_ids = header.at("doc_ids").get<std::vector<std::string>>();
    g.words = header.at("words").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": bad header (" + e.what() + ")");
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  g.validate();
  return g;
}

}  // namespace hgnn

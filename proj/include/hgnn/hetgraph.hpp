#pragma once

#include "hgnn/corpus.hpp"
#include "hgnn/embeddings.hpp"
#include "hgnn/tensor.hpp"
#include "hgnn/textstats.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hgnn {

class GraphError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class NodeType : std::uint8_t { User = 0, Doc = 1, Word = 2 };
inline constexpr std::size_t kNodeTypeCount = 3;

// The first four are stored; DocUser and WordDoc are generated reverses.
enum class Relation : std::uint8_t {
  UserDoc = 0,
  DocWord = 1,
  WordWord = 2,
  DocDoc = 3,
  DocUser = 4,
  WordDoc = 5,
};
inline constexpr std::size_t kStoredRelationCount = 4;

enum class GraphVariant : std::uint8_t { All = 0, NoWordWord = 1, NoWord = 2, NoDocDoc = 3 };

std::string_view to_string(NodeType t);
std::string_view to_string(Relation r);
std::string_view to_string(GraphVariant v);
GraphVariant parse_variant(std::string_view name);  // "all", "no-word-word", ...
std::optional<Relation> parse_relation(std::string_view name);
const std::array<GraphVariant, 4>& all_variants();

NodeType source_type(Relation r);
NodeType target_type(Relation r);

struct EdgeList {
  std::vector<Index> src;
  std::vector<Index> dst;
  std::vector<double> weight;

  std::size_t size() const { return src.size(); }
  void push(Index s, Index d, double w) {
    src.push_back(s);
    dst.push_back(d);
    weight.push_back(w);
  }
  bool operator==(const EdgeList&) const = default;
};

struct GraphConfig {
  std::size_t knn = 3;
  std::size_t min_count = 15;
  std::size_t window = 20;
  std::uint64_t seed = 0;
};

// Which components an ablation removed. Accumulates across apply_variant calls.
struct Ablation {
  bool word_word = false;
  bool words = false;
  bool doc_doc = false;

  bool operator==(const Ablation&) const = default;
};

struct HeteroGraph {
  std::array<Matrix, kNodeTypeCount> features;  // per NodeType
  std::array<EdgeList, kStoredRelationCount> edges;  // UserDoc, DocWord, WordWord, DocDoc
  std::vector<std::uint8_t> labels;                  // per user, 0/1
  std::vector<Split> splits;                         // per user
  GraphConfig config;
  Ablation ablation;
  std::array<std::string, 2> class_names{"0", "1"};
  std::vector<std::string> user_ids;
  std::vector<std::string> doc_ids;
  std::vector<std::string> words;

  std::size_t node_count(NodeType t) const {
    return static_cast<std::size_t>(features[static_cast<std::size_t>(t)].rows());
  }
  std::size_t feature_dim(NodeType t) const {
    return static_cast<std::size_t>(features[static_cast<std::size_t>(t)].cols());
  }
  const Matrix& x(NodeType t) const { return features[static_cast<std::size_t>(t)]; }
  const EdgeList& stored(Relation r) const;
  EdgeList& stored(Relation r);

  std::vector<bool> mask(Split s) const;
  std::size_t total_nodes() const;
  std::size_t total_edges() const;

  // Throws GraphError when an endpoint is out of range, a weight is not
  // finite, or a structural identity (one owning user per doc) fails.
  void validate() const;

  bool operator==(const HeteroGraph&) const;
};

// For each doc i, the K docs j != i with the highest cosine similarity (ties
// to the lower index), as directed edges i -> j weighted by the cosine.
// Exactly K * n edges, in doc order then rank order.
EdgeList knn_doc_edges(const Matrix& embeddings, std::size_t k);

// Union of the edges with their reverses; j -> i is added with the same
// weight when absent. Sorted by (src, dst).
EdgeList symmetrize(const EdgeList& edges);

struct GraphInputs {
  const Corpus& corpus;
  const SplitAssignment& splits;
  const std::vector<TokenizedDoc>& docs;  // corpus order
  const Vocabulary& vocab;
  const CooccurrenceStats& stats;
  const WordEmbeddingTable& word_vectors;
  const SentenceEmbeddingTable& sentence_vectors;
  std::size_t word_dim = 0;  // 0: take the word table's dimension
};

// Warnings (e.g. docs with no in-vocabulary tokens) go to `warn` when set.
HeteroGraph build_graph(const GraphInputs& in, const GraphConfig& config,
                        const std::function<void(const std::string&)>& warn = {});

// End-to-end convenience: tokenise, vocabulary, co-occurrence, then build.
HeteroGraph build_graph_from_corpus(const Corpus& corpus, const SplitAssignment& splits,
                                    const WordEmbeddingTable& word_vectors,
                                    const SentenceEmbeddingTable& sentence_vectors,
                                    const GraphConfig& config,
                                    const std::function<void(const std::string&)>& warn = {});

HeteroGraph apply_variant(const HeteroGraph& g, GraphVariant v);

// Relations that take part in message passing for this graph's ablation
// state, in fixed order: UserDoc, DocUser, DocWord, WordDoc, WordWord, DocDoc.
std::vector<Relation> active_relations(const HeteroGraph& g);

// Edges used for message passing on relation r: reverses are generated and
// DocDoc is symmetrised.
EdgeList message_edges(const HeteroGraph& g, Relation r);

// Little-endian framed file (see binary_io.hpp): JSON header with metadata,
// counts and names; payload of f64 feature matrices, per stored relation
// u32 src, u32 dst, f64 weight arrays, then u8 labels and u8 splits.
void serialize_graph(const HeteroGraph& g, const std::filesystem::path& path);
HeteroGraph deserialize_graph(const std::filesystem::path& path);

inline constexpr std::uint32_t kGraphFormatVersion = 1;

}  // namespace hgnn

#pragma once

#include "hgnn/hetgraph.hpp"
#include "hgnn/tensor.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hgnn {

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ConvKind : std::uint8_t { Sage = 0, Gat = 1, GraphTransformer = 2 };

std::string_view to_string(ConvKind k);
ConvKind parse_conv_kind(std::string_view name);  // sage | gat | transformer

// Tensor layout of one relation's parameters, per kind:
//   Sage:             W_self (d_dst x h), W_neigh (d_src x h), bias (1 x h)
//   Gat:              W_src (d_src x h), W_dst (d_dst x h), a_src (h x 1), a_dst (h x 1), bias (1 x h)
//   GraphTransformer: W_Q (d_dst x h), W_K (d_src x h), W_V (d_src x h), W_skip (d_dst x h), bias (1 x h)
struct RelationConvParams {
  ConvKind kind = ConvKind::Sage;
  std::vector<Matrix> tensors;
};

const std::vector<std::string>& param_names(ConvKind kind);

struct NodeClassifier {
  ConvKind kind = ConvKind::Sage;
  GraphVariant variant = GraphVariant::All;  // graph variant the model was trained on
  std::size_t hidden = 64;
  std::array<std::size_t, kNodeTypeCount> input_dims{};
  std::uint64_t seed = 0;
  double leaky_slope = 0.2;
  std::vector<Relation> relations;
  // layers[l][i] belongs to relations[i].
  std::array<std::vector<RelationConvParams>, 2> layers;
  Matrix head_weight;  // h x 1
  Matrix head_bias;    // 1 x 1

  // Fixed order: layer 0 relations, layer 1 relations, head weight, head bias.
  std::vector<Matrix*> parameters();
  std::vector<const Matrix*> parameters() const;
  std::vector<std::string> parameter_names() const;
  std::size_t parameter_count() const;
};

// Glorot-uniform weights, zero biases; deterministic per seed.
NodeClassifier init_params(ConvKind kind, const std::array<std::size_t, kNodeTypeCount>& input_dims,
                           const std::vector<Relation>& relations, std::size_t hidden,
                           std::uint64_t seed);
NodeClassifier init_params(ConvKind kind, const HeteroGraph& g, std::size_t hidden,
                           std::uint64_t seed);

// One relation's edges as consumed by the operators.
struct RelationEdges {
  std::span<const Index> src;
  std::span<const Index> dst;
  std::size_t n_dst = 0;
  Var coef;  // E x 1: normalised weights (Sage); unused by Gat/GraphTransformer
};

// Per-destination weighted-mean coefficients w_e / sum of w into dst[e]. A
// destination whose weights do not sum to a positive value falls back to the
// plain mean.
Matrix mean_coefficients(std::span<const Index> dst, std::span<const double> weight,
                         std::size_t n_dst);

// out_v = x_v W_self + (weighted mean of x_u) W_neigh + bias
Var sage_conv(Tape& t, Var x_src, Var x_dst, const RelationEdges& e, std::span<const Var> params);
// alpha = softmax_v(leaky_relu(a_src . W_src x_u + a_dst . W_dst x_v));
// out_v = sum alpha_uv W_src x_u + bias
Var gat_conv(Tape& t, Var x_src, Var x_dst, const RelationEdges& e, std::span<const Var> params,
             double slope = 0.2);
// alpha = softmax_v((W_Q x_v) . (W_K x_u) / sqrt(h));
// out_v = sum alpha_uv W_V x_u + W_skip x_v + bias
Var transformer_conv(Tape& t, Var x_src, Var x_dst, const RelationEdges& e,
                     std::span<const Var> params);

Var relation_conv(Tape& t, ConvKind kind, Var x_src, Var x_dst, const RelationEdges& e,
                  std::span<const Var> params, double slope = 0.2);

// Message-passing view of a graph: edges of every active relation plus the
// Sage mean coefficients. Built once per training run.
struct MessageGraph {
  std::vector<Relation> relations;
  std::vector<EdgeList> edges;
  std::vector<Matrix> coefficients;
  std::array<std::size_t, kNodeTypeCount> counts{};

  static MessageGraph from(const HeteroGraph& g);
};

using NodeVars = std::array<std::optional<Var>, kNodeTypeCount>;

// Per relation conv (src type -> dst type), summed per destination type in
// relation order. Node types that receive no relation get zeros of width
// `out_dim`. `params[i]` holds relation i's tensors.
NodeVars hetero_conv(Tape& t, ConvKind kind, const MessageGraph& mg, const NodeVars& inputs,
                     const std::vector<std::vector<Var>>& params, std::size_t out_dim,
                     double slope = 0.2);

// Parameters registered on a tape, in NodeClassifier::parameters() order.
struct BoundParams {
  std::vector<Var> all;
  std::array<std::vector<std::vector<Var>>, 2> layers;
  Var head_weight;
  Var head_bias;
};

BoundParams bind(Tape& t, const NodeClassifier& model, bool requires_grad = true);

// h1 = relu(conv(x)); h2 = relu(conv(h1)); logits = h2[User] W + b (n_users x 1).
Var forward(Tape& t, const NodeClassifier& model, const BoundParams& params,
            const MessageGraph& mg, const HeteroGraph& g);
Matrix forward(const NodeClassifier& model, const HeteroGraph& g);

// Framed binary checkpoint (binary_io.hpp): JSON header with kind, dims,
// seed, relations and tensor shapes; payload of f64 tensors in parameters()
// order.
void save_checkpoint(const NodeClassifier& model, const std::filesystem::path& path);
NodeClassifier load_checkpoint(const std::filesystem::path& path);

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

}  // namespace hgnn

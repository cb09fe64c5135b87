#include "hgnn/gnn.hpp"

#include "hgnn/binary_io.hpp"
#include "hgnn/random.hpp"

#include <nlohmann/json.hpp>

#include <cmath>

namespace hgnn {

namespace {

constexpr std::string_view kCheckpointMagic = "HGNNCKPT";

std::size_t type_index(NodeType t) { return static_cast<std::size_t>(t); }

bool is_bias(ConvKind kind, std::size_t tensor) {
  return tensor + 1 == param_names(kind).size();
}

// Shapes of one relation's tensors for the given endpoint dims.
std::vector<std::pair<std::size_t, std::size_t>> tensor_shapes(ConvKind kind, std::size_t d_src,
                                                               std::size_t d_dst, std::size_t h) {
  switch (kind) {
    case ConvKind::Sage: return {{d_dst, h}, {d_src, h}, {1, h}};
    case ConvKind::Gat: return {{d_src, h}, {d_dst, h}, {h, 1}, {h, 1}, {1, h}};
    case ConvKind::GraphTransformer: return {{d_dst, h}, {d_src, h}, {d_src, h}, {d_dst, h}, {1, h}};
  }
  return {};
}

Matrix glorot(Rng& rng, std::size_t rows, std::size_t cols) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-limit, limit);
  return m;
}

void require_params(std::span<const Var> params, std::size_t n, const char* op) {
  if (params.size() != n) {
    throw ModelError(std::string(op) + ": expected " + std::to_string(n) + " parameter tensors, got " +
                     std::to_string(params.size()));
  }
}

void require_rows(const Tape& t, Var x, std::size_t rows, const char* op) {
  if (static_cast<std::size_t>(t.value(x).rows()) != rows) {
    throw ShapeError(std::string(op) + ": destination features have " +
                     std::to_string(t.value(x).rows()) + " rows, edges address " +
                     std::to_string(rows));
  }
}

}  // namespace

std::string_view to_string(ConvKind k) {
  switch (k) {
    case ConvKind::Sage: return "sage";
    case ConvKind::Gat: return "gat";
    case ConvKind::GraphTransformer: return "transformer";
  }
  return "?";
}

ConvKind parse_conv_kind(std::string_view name) {
  if (name == "sage" || name == "graphsage") return ConvKind::Sage;
  if (name == "gat") return ConvKind::Gat;
  if (name == "transformer" || name == "graph-transformer") return ConvKind::GraphTransformer;
  throw ModelError("unknown model '" + std::string(name) + "' (expected sage, gat or transformer)");
}

const std::vector<std::string>& param_names(ConvKind kind) {
  static const std::vector<std::string> sage = {"W_self", "W_neigh", "bias"};
  static const std::vector<std::string> gat = {"W_src", "W_dst", "a_src", "a_dst", "bias"};
  static const std::vector<std::string> transformer = {"W_Q", "W_K", "W_V", "W_skip", "bias"};
  switch (kind) {
    case ConvKind::Sage: return sage;
    case ConvKind::Gat: return gat;
    case ConvKind::GraphTransformer: return transformer;
  }
  return sage;
}

std::vector<Matrix*> NodeClassifier::parameters() {
  std::vector<Matrix*> out;
  for (auto& layer : layers) {
    for (auto& rel : layer) {
      for (auto& t : rel.tensors) out.push_back(&t);
    }
  }
  out.push_back(&head_weight);
  out.push_back(&head_bias);
  return out;
}

std::vector<const Matrix*> NodeClassifier::parameters() const {
  auto mut = const_cast<NodeClassifier*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

std::vector<std::string> NodeClassifier::parameter_names() const {
  std::vector<std::string> names;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    for (std::size_t i = 0; i < relations.size(); ++i) {
      for (const auto& n : param_names(kind)) {
        names.push_back("layer" + std::to_string(l + 1) + "." + std::string(to_string(relations[i])) +
                        "." + n);
      }
    }
  }
  names.push_back("head.weight");
  names.push_back("head.bias");
  return names;
}

std::size_t NodeClassifier::parameter_count() const {
  std::size_t n = 0;
  for (const Matrix* m : parameters()) n += static_cast<std::size_t>(m->size());
  return n;
}

NodeClassifier init_params(ConvKind kind, const std::array<std::size_t, kNodeTypeCount>& input_dims,
                           const std::vector<Relation>& relations, std::size_t hidden,
                           std::uint64_t seed) {
  if (hidden == 0) throw ModelError("hidden dimension must be positive");
  NodeClassifier model;
  model.kind = kind;
  model.hidden = hidden;
  model.input_dims = input_dims;
  model.seed = seed;
  model.relations = relations;
  Rng rng(seed);
  for (std::size_t l = 0; l < 2; ++l) {
    for (Relation r : relations) {
      const std::size_t d_src = l == 0 ? input_dims[type_index(source_type(r))] : hidden;
      const std::size_t d_dst = l == 0 ? input_dims[type_index(target_type(r))] : hidden;
      RelationConvParams p{kind, {}};
      const auto shapes = tensor_shapes(kind, d_src, d_dst, hidden);
      for (std::size_t i = 0; i < shapes.size(); ++i) {
        const auto [rows, cols] = shapes[i];
        p.tensors.push_back(is_bias(kind, i) ? Matrix::Zero(static_cast<Eigen::Index>(rows),
                                                            static_cast<Eigen::Index>(cols))
                                             : glorot(rng, rows, cols));
      }
      model.layers[l].push_back(std::move(p));
    }
  }
  model.head_weight = glorot(rng, hidden, 1);
  model.head_bias = Matrix::Zero(1, 1);
  return model;
}

NodeClassifier init_params(ConvKind kind, const HeteroGraph& g, std::size_t hidden,
                           std::uint64_t seed) {
  return init_params(kind,
                     {g.feature_dim(NodeType::User), g.feature_dim(NodeType::Doc),
                      g.feature_dim(NodeType::Word)},
                     active_relations(g), hidden, seed);
}

Matrix mean_coefficients(std::span<const Index> dst, std::span<const double> weight,
                         std::size_t n_dst) {
  if (dst.size() != weight.size()) throw ShapeError("mean_coefficients: length mismatch");
  std::vector<double> total(n_dst, 0.0);
  std::vector<double> degree(n_dst, 0.0);
  for (std::size_t e = 0; e < dst.size(); ++e) {
    if (dst[e] >= n_dst) throw ShapeError("mean_coefficients: destination out of range");
    total[dst[e]] += weight[e];
    degree[dst[e]] += 1.0;
  }
  Matrix coef(static_cast<Eigen::Index>(dst.size()), 1);
  for (std::size_t e = 0; e < dst.size(); ++e) {
    const Index v = dst[e];
    coef(e, 0) = total[v] > 0.0 ? weight[e] / total[v] : 1.0 / degree[v];
  }
  return coef;
}

Var sage_conv(Tape& t, Var x_src, Var x_dst, const RelationEdges& e, std::span<const Var> p) {
  require_params(p, 3, "sage_conv");
  require_rows(t, x_dst, e.n_dst, "sage_conv");
  const Var agg = ops::propagate(t, x_src, e.coef, e.src, e.dst, e.n_dst);
  const Var self = ops::matmul(t, x_dst, p[0]);
  const Var neigh = ops::matmul(t, agg, p[1]);
  return ops::add_bias(t, ops::add(t, self, neigh), p[2]);
}

Var gat_conv(Tape& t, Var x_src, Var x_dst, const RelationEdges& e, std::span<const Var> p,
             double slope) {
  require_params(p, 5, "gat_conv");
  require_rows(t, x_dst, e.n_dst, "gat_conv");
  const Var h_src = ops::matmul(t, x_src, p[0]);
  const Var h_dst = ops::matmul(t, x_dst, p[1]);
  const Var s_src = ops::matmul(t, h_src, p[2]);
  const Var s_dst = ops::matmul(t, h_dst, p[3]);
  const Var score = ops::leaky_relu(
      t, ops::add(t, ops::gather_rows(t, s_src, e.src), ops::gather_rows(t, s_dst, e.dst)), slope);
  const Var alpha = ops::segment_softmax(t, score, e.dst, e.n_dst);
  return ops::add_bias(t, ops::propagate(t, h_src, alpha, e.src, e.dst, e.n_dst), p[4]);
}

Var transformer_conv(Tape& t, Var x_src, Var x_dst, const RelationEdges& e,
                     std::span<const Var> p) {
  require_params(p, 5, "transformer_conv");
  require_rows(t, x_dst, e.n_dst, "transformer_conv");
  const Var q = ops::matmul(t, x_dst, p[0]);
  const Var k = ops::matmul(t, x_src, p[1]);
  const Var v = ops::matmul(t, x_src, p[2]);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(t.value(q).cols()));
  const Var score = ops::scale(t, ops::edge_dot(t, q, e.dst, k, e.src), inv_sqrt);
  const Var alpha = ops::segment_softmax(t, score, e.dst, e.n_dst);
  const Var agg = ops::propagate(t, v, alpha, e.src, e.dst, e.n_dst);
  const Var skip = ops::matmul(t, x_dst, p[3]);
  return ops::add_bias(t, ops::add(t, agg, skip), p[4]);
}

Var relation_conv(Tape& t, ConvKind kind, Var x_src, Var x_dst, const RelationEdges& e,
                  std::span<const Var> params, double slope) {
  switch (kind) {
    case ConvKind::Sage: return sage_conv(t, x_src, x_dst, e, params);
    case ConvKind::Gat: return gat_conv(t, x_src, x_dst, e, params, slope);
    case ConvKind::GraphTransformer: return transformer_conv(t, x_src, x_dst, e, params);
  }
  throw ModelError("unknown conv kind");
}

MessageGraph MessageGraph::from(const HeteroGraph& g) {
  MessageGraph mg;
  mg.relations = active_relations(g);
  for (std::size_t t = 0; t < kNodeTypeCount; ++t) mg.counts[t] = g.node_count(static_cast<NodeType>(t));
  for (Relation r : mg.relations) {
    EdgeList e = message_edges(g, r);
    mg.coefficients.push_back(mean_coefficients(e.dst, e.weight, mg.counts[type_index(target_type(r))]));
    mg.edges.push_back(std::move(e));
  }
  return mg;
}

NodeVars hetero_conv(Tape& t, ConvKind kind, const MessageGraph& mg, const NodeVars& inputs,
                     const std::vector<std::vector<Var>>& params, std::size_t out_dim,
                     double slope) {
  if (params.size() != mg.relations.size()) {
    throw ModelError("hetero_conv: parameters cover " + std::to_string(params.size()) +
                     " relations, graph has " + std::to_string(mg.relations.size()));
  }
  NodeVars out;
  for (std::size_t i = 0; i < mg.relations.size(); ++i) {
    const Relation r = mg.relations[i];
    const auto& src_in = inputs[type_index(source_type(r))];
    const auto& dst_in = inputs[type_index(target_type(r))];
    if (!src_in || !dst_in) {
      throw ModelError("hetero_conv: missing node features for relation " + std::string(to_string(r)));
    }
    const EdgeList& e = mg.edges[i];
    const RelationEdges rel{e.src, e.dst, mg.counts[type_index(target_type(r))],
                            t.constant(mg.coefficients[i])};
    const Var y = relation_conv(t, kind, *src_in, *dst_in, rel, params[i], slope);
    auto& slot = out[type_index(target_type(r))];
    slot = slot ? ops::add(t, *slot, y) : y;
  }
  for (std::size_t ty = 0; ty < kNodeTypeCount; ++ty) {
    if (!out[ty]) {
      out[ty] = t.constant(Matrix::Zero(static_cast<Eigen::Index>(mg.counts[ty]),
                                        static_cast<Eigen::Index>(out_dim)));
    }
  }
  return out;
}

BoundParams bind(Tape& t, const NodeClassifier& model, bool requires_grad) {
  BoundParams b;
  for (std::size_t l = 0; l < 2; ++l) {
    for (const auto& rel : model.layers[l]) {
      std::vector<Var> vars;
      for (const auto& m : rel.tensors) {
        vars.push_back(t.leaf(m, requires_grad));
        b.all.push_back(vars.back());
      }
      b.layers[l].push_back(std::move(vars));
    }
  }
  b.head_weight = t.leaf(model.head_weight, requires_grad);
  b.head_bias = t.leaf(model.head_bias, requires_grad);
  b.all.push_back(b.head_weight);
  b.all.push_back(b.head_bias);
  return b;
}

Var forward(Tape& t, const NodeClassifier& model, const BoundParams& params,
            const MessageGraph& mg, const HeteroGraph& g) {
  if (model.relations != mg.relations) {
    throw ModelError("model relations do not match the graph variant");
  }
  for (std::size_t ty = 0; ty < kNodeTypeCount; ++ty) {
    const auto type = static_cast<NodeType>(ty);
    if (g.node_count(type) > 0 && g.feature_dim(type) != model.input_dims[ty]) {
      throw ModelError("model expects " + std::to_string(model.input_dims[ty]) + "-d " +
                       std::string(to_string(type)) + " features, graph has " +
                       std::to_string(g.feature_dim(type)));
    }
  }
  NodeVars x;
  for (std::size_t ty = 0; ty < kNodeTypeCount; ++ty) x[ty] = t.constant(g.features[ty]);

  NodeVars h = hetero_conv(t, model.kind, mg, x, params.layers[0], model.hidden, model.leaky_slope);
  for (auto& v : h) v = ops::relu(t, *v);
  h = hetero_conv(t, model.kind, mg, h, params.layers[1], model.hidden, model.leaky_slope);
  for (auto& v : h) v = ops::relu(t, *v);

  const Var users = *h[type_index(NodeType::User)];
  return ops::add_bias(t, ops::matmul(t, users, params.head_weight), params.head_bias);
}

Matrix forward(const NodeClassifier& model, const HeteroGraph& g) {
  Tape t;
  const MessageGraph mg = MessageGraph::from(g);
  const BoundParams p = bind(t, model, false);
  return t.value(forward(t, model, p, mg, g));
}

void save_checkpoint(const NodeClassifier& model, const std::filesystem::path& path) {
  nlohmann::json header;
  header["format"] = "hgnn-checkpoint";
  header["kind"] = to_string(model.kind);
  header["variant"] = to_string(model.variant);
  header["hidden"] = model.hidden;
  header["input_dims"] = model.input_dims;
  header["seed"] = model.seed;
  header["leaky_slope"] = model.leaky_slope;
  for (Relation r : model.relations) header["relations"].push_back(to_string(r));
  const auto names = model.parameter_names();
  const auto params = model.parameters();
  ByteWriter w;
  for (std::size_t i = 0; i < params.size(); ++i) {
    header["tensors"].push_back({{"name", names[i]}, {"rows", params[i]->rows()}, {"cols", params[i]->cols()}});
    w.put_array(std::span<const double>(params[i]->data(), static_cast<std::size_t>(params[i]->size())));
  }
  write_framed(path, kCheckpointMagic, kCheckpointFormatVersion, header.dump(), w.bytes());
}

NodeClassifier load_checkpoint(const std::filesystem::path& path) {
  const Framed f = read_framed(path, kCheckpointMagic, kCheckpointFormatVersion);
  try {
    const auto header = nlohmann::json::parse(f.header_json);
    std::vector<Relation> relations;
    for (const auto& name : header.at("relations")) {
      const auto r = parse_relation(name.get<std::string>());
      if (!r) throw FormatError("unknown relation " + name.get<std::string>());
      relations.push_back(*r);
    }
    NodeClassifier model =
        init_params(parse_conv_kind(header.at("kind").get<std::string>()),
                    header.at("input_dims").get<std::array<std::size_t, kNodeTypeCount>>(), relations,
                    header.at("hidden").get<std::size_t>(), header.at("seed").get<std::uint64_t>());
    model.leaky_slope = header.at("leaky_slope").get<double>();
    model.variant = parse_variant(header.at("variant").get<std::string>());
    const auto& tensors = header.at("tensors");
    auto params = model.parameters();
    if (tensors.size() != params.size()) throw FormatError("tensor count mismatch");
    ByteReader r(f.payload);
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (tensors[i].at("rows").get<Eigen::Index>() != params[i]->rows() ||
          tensors[i].at("cols").get<Eigen::Index>() != params[i]->cols()) {
        throw FormatError("tensor " + tensors[i].at("name").get<std::string>() + " has unexpected shape");
      }
      r.get_array(std::span<double>(params[i]->data(), static_cast<std::size_t>(params[i]->size())));
    }
    if (r.remaining() != 0) throw FormatError("trailing bytes after tensors");
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": bad header (" + e.what() + ")");
  }
}

}  // namespace hgnn

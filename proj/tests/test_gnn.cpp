#include "fixtures.hpp"
#include "hgnn/binary_io.hpp"
#include "hgnn/gnn.hpp"
#include "hgnn/train.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <fstream>

using namespace hgnn;
using fixture::TempDir;

namespace {

Matrix random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-1.0, 1.0);
  return m;
}

// 6 sources -> 5 destinations; destination 4 has no incoming edge and
// destination 3's weights cancel out.
struct Fixture {
  std::vector<Index> src{0, 1, 2, 3, 4, 5, 0, 2, 5};
  std::vector<Index> dst{0, 0, 1, 1, 1, 2, 2, 3, 3};
  std::vector<double> w{0.5, 1.5, 1.0, 2.0, 0.25, 1.0, 3.0, 1.0, -1.0};
  std::vector<oracle::Edge> edges() const {
    std::vector<oracle::Edge> out;
    for (std::size_t e = 0; e < src.size(); ++e) out.push_back({src[e], dst[e], w[e]});
    return out;
  }
};

const ConvKind kKinds[] = {ConvKind::Sage, ConvKind::Gat, ConvKind::GraphTransformer};

double max_abs(const Matrix& a) { return a.cwiseAbs().maxCoeff(); }

// Relabels documents by `perm` (new index of old doc i is perm[i]).
HeteroGraph permute_docs(const HeteroGraph& g, const std::vector<Index>& perm) {
  HeteroGraph out = g;
  Matrix& x = out.features[static_cast<std::size_t>(NodeType::Doc)];
  for (std::size_t i = 0; i < perm.size(); ++i) x.row(perm[i]) = g.x(NodeType::Doc).row(i);
  for (std::size_t i = 0; i < perm.size(); ++i) out.doc_ids[perm[i]] = g.doc_ids[i];
  for (auto& d : out.stored(Relation::UserDoc).dst) d = perm[d];
  for (auto& s : out.stored(Relation::DocWord).src) s = perm[s];
  auto& dd = out.stored(Relation::DocDoc);
  for (std::size_t e = 0; e < dd.size(); ++e) {
    dd.src[e] = perm[dd.src[e]];
    dd.dst[e] = perm[dd.dst[e]];
  }
  return out;
}

}  // namespace

TEST(MeanCoefficients, WeightedWithPlainMeanFallback) {
  Fixture f;
  const Matrix c = mean_coefficients(f.dst, f.w, 5);
  EXPECT_DOUBLE_EQ(c(0, 0), 0.25);
  EXPECT_DOUBLE_EQ(c(1, 0), 0.75);
  EXPECT_DOUBLE_EQ(c(7, 0), 0.5);  // weights sum to 0 at destination 3
  EXPECT_DOUBLE_EQ(c(8, 0), 0.5);
}

TEST(Conv, SageMatchesDenseOracle) {
  Fixture f;
  Rng rng(1);
  const Matrix xs = random_matrix(rng, 6, 3), xd = random_matrix(rng, 5, 4);
  const Matrix ws = random_matrix(rng, 4, 2), wn = random_matrix(rng, 3, 2), b = random_matrix(rng, 1, 2);
  Tape t;
  const Var p[] = {t.constant(ws), t.constant(wn), t.constant(b)};
  const RelationEdges e{f.src, f.dst, 5, t.constant(mean_coefficients(f.dst, f.w, 5))};
  const Matrix got = t.value(sage_conv(t, t.constant(xs), t.constant(xd), e, p));
  EXPECT_LE(max_abs(got - oracle::dense_sage(xs, xd, f.edges(), ws, wn, b)), 1e-12);
}

TEST(Conv, GatMatchesDenseOracle) {
  Fixture f;
  Rng rng(2);
  const Matrix xs = random_matrix(rng, 6, 3), xd = random_matrix(rng, 5, 4);
  const Matrix w1 = random_matrix(rng, 3, 2), w2 = random_matrix(rng, 4, 2);
  const Matrix a1 = random_matrix(rng, 2, 1), a2 = random_matrix(rng, 2, 1), b = random_matrix(rng, 1, 2);
  Tape t;
  const Var p[] = {t.constant(w1), t.constant(w2), t.constant(a1), t.constant(a2), t.constant(b)};
  const RelationEdges e{f.src, f.dst, 5, t.constant(Matrix::Zero(9, 1))};
  const Matrix got = t.value(gat_conv(t, t.constant(xs), t.constant(xd), e, p, 0.2));
  EXPECT_LE(max_abs(got - oracle::dense_gat(xs, xd, f.edges(), w1, w2, a1, a2, b, 0.2)), 1e-12);
  // A destination without edges only receives the bias.
  EXPECT_LE(max_abs(got.row(4) - b), 0.0);
}

TEST(Conv, TransformerMatchesDenseOracle) {
  Fixture f;
  Rng rng(3);
  const Matrix xs = random_matrix(rng, 6, 3), xd = random_matrix(rng, 5, 4);
  const Matrix wq = random_matrix(rng, 4, 2), wk = random_matrix(rng, 3, 2), wv = random_matrix(rng, 3, 2);
  const Matrix wskip = random_matrix(rng, 4, 2), b = random_matrix(rng, 1, 2);
  Tape t;
  const Var p[] = {t.constant(wq), t.constant(wk), t.constant(wv), t.constant(wskip), t.constant(b)};
  const RelationEdges e{f.src, f.dst, 5, t.constant(Matrix::Zero(9, 1))};
  const Matrix got = t.value(transformer_conv(t, t.constant(xs), t.constant(xd), e, p));
  EXPECT_LE(max_abs(got - oracle::dense_transformer(xs, xd, f.edges(), wq, wk, wv, wskip, b)), 1e-12);
}

TEST(Conv, TransformerAttentionSumsToOne) {
  // With a constant value projection the aggregate equals (sum of attention)
  // times that constant, so the conv itself reveals the normalisation.
  Fixture f;
  Rng rng(4);
  Matrix xs = random_matrix(rng, 6, 3);
  xs.col(2).setOnes();
  const Matrix xd = random_matrix(rng, 5, 4);
  Matrix wv = Matrix::Zero(3, 2);
  wv(2, 0) = 1.0;
  Tape t;
  const Var p[] = {t.constant(random_matrix(rng, 4, 2)), t.constant(random_matrix(rng, 3, 2)),
                   t.constant(wv), t.constant(Matrix::Zero(4, 2)), t.constant(Matrix::Zero(1, 2))};
  const RelationEdges e{f.src, f.dst, 5, t.constant(Matrix::Zero(9, 1))};
  const Matrix out = t.value(transformer_conv(t, t.constant(xs), t.constant(xd), e, p));
  for (int v = 0; v < 4; ++v) EXPECT_NEAR(out(v, 0), 1.0, 1e-12);
  EXPECT_EQ(out(4, 0), 0.0);
}

TEST(Model, InitIsDeterministicAndCoversEveryRelation) {
  const HeteroGraph g = fixture::tiny_graph(1);
  for (ConvKind k : kKinds) {
    const auto a = init_params(k, g, 5, 42);
    const auto b = init_params(k, g, 5, 42);
    const auto c = init_params(k, g, 5, 43);
    ASSERT_EQ(a.relations.size(), 6u);
    ASSERT_EQ(a.layers[0].size(), 6u);
    bool differs = false;
    const auto pa = a.parameters();
    const auto pb = b.parameters();
    const auto pc = c.parameters();
    for (std::size_t i = 0; i < pa.size(); ++i) {
      EXPECT_EQ(*pa[i], *pb[i]);
      differs |= !(pa[i]->isApprox(*pc[i]));
    }
    EXPECT_TRUE(differs);
    EXPECT_EQ(a.parameter_names().size(), pa.size());
  }
}

TEST(Model, SageParameterCountByHand) {
  const HeteroGraph g = fixture::tiny_graph(1);
  const auto m = init_params(ConvKind::Sage, g, 4, 0);
  // dims: user 3, doc 3, word 2; h = 4. Layer 0 per relation:
  // (d_dst + d_src) * h + h. Layer 1: (h + h) * h + h. Head: h + 1.
  const std::size_t dims[] = {3, 3, 2};
  std::size_t expected = 0;
  for (Relation r : m.relations) {
    expected += (dims[static_cast<int>(target_type(r))] + dims[static_cast<int>(source_type(r))]) * 4 + 4;
    expected += 8 * 4 + 4;
  }
  expected += 5;
  EXPECT_EQ(m.parameter_count(), expected);
}

TEST(Model, FullGradientMatchesFiniteDifferences) {
  const HeteroGraph g = fixture::tiny_graph(3);
  const auto mask = g.mask(Split::Train);
  for (ConvKind k : kKinds) {
    NodeClassifier model = init_params(k, g, 4, 11);
    Tape t;
    const MessageGraph mg = MessageGraph::from(g);
    const BoundParams bp = bind(t, model);
    const Var loss = bce_with_logits(t, forward(t, model, bp, mg, g), g.labels, mask);
    t.backward(loss);
    double worst = 0.0;
    auto params = model.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
      const Matrix analytic = t.grad(bp.all[i]);
      const Matrix numeric = oracle::numeric_grad(
          *params[i], [&] { return bce_with_logits(forward(model, g), g.labels, mask); });
      for (Eigen::Index j = 0; j < numeric.size(); ++j) {
        worst = std::max(worst, oracle::rel_error(analytic.data()[j], numeric.data()[j]));
      }
    }
    EXPECT_LE(worst, 1e-4) << to_string(k);
  }
}

TEST(Model, PermutingDocumentsLeavesUserLogitsUnchanged) {
  const auto s = fixture::synthetic_graph(5, 8);
  const HeteroGraph& g = s.graph;
  std::vector<Index> perm(g.node_count(NodeType::Doc));
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(9);
  rng.shuffle(std::span<Index>(perm));
  const HeteroGraph p = permute_docs(g, perm);
  p.validate();
  for (ConvKind k : kKinds) {
    const auto model = init_params(k, g, 8, 2);
    EXPECT_LE(max_abs(forward(model, g) - forward(model, p)), 1e-10) << to_string(k);
  }
}

TEST(Model, VariantMismatchIsRejected) {
  const HeteroGraph g = fixture::tiny_graph(1);
  auto model = init_params(ConvKind::Gat, g, 4, 0);
  EXPECT_THROW(forward(model, apply_variant(g, GraphVariant::NoWord)), ModelError);
  const auto reduced = apply_variant(g, GraphVariant::NoWord);
  const auto m2 = init_params(ConvKind::Gat, reduced, 4, 0);
  EXPECT_EQ(forward(m2, reduced).rows(), 2);
}

TEST(Model, RelationWithoutEdgesStillHasParameters) {
  HeteroGraph g = fixture::tiny_graph(1);
  g.stored(Relation::WordWord) = {};
  const auto model = init_params(ConvKind::Sage, g, 4, 0);
  EXPECT_EQ(model.relations.size(), 6u);
  EXPECT_TRUE(forward(model, g).allFinite());
}

TEST(Checkpoint, RoundTripReproducesLogitsExactly) {
  TempDir dir("ckpt");
  const HeteroGraph g = fixture::tiny_graph(4);
  for (ConvKind k : kKinds) {
    auto model = init_params(k, apply_variant(g, GraphVariant::NoDocDoc), 3, 5);
    model.variant = GraphVariant::NoDocDoc;
    const auto path = dir / (std::string(to_string(k)) + ".ckpt");
    save_checkpoint(model, path);
    const auto back = load_checkpoint(path);
    EXPECT_EQ(back.kind, k);
    EXPECT_EQ(back.variant, GraphVariant::NoDocDoc);
    EXPECT_EQ(back.relations, model.relations);
    const auto reduced = apply_variant(g, GraphVariant::NoDocDoc);
    EXPECT_EQ(forward(back, reduced), forward(model, reduced));
    save_checkpoint(back, dir / "again.ckpt");
    EXPECT_EQ(read_file_bytes(path), read_file_bytes(dir / "again.ckpt"));
  }
}

TEST(Checkpoint, CorruptionIsDetected) {
  TempDir dir("ckpt_bad");
  const auto model = init_params(ConvKind::Sage, fixture::tiny_graph(1), 3, 5);
  save_checkpoint(model, dir / "m.ckpt");
  auto bytes = read_file_bytes(dir / "m.ckpt");
  bytes[bytes.size() - 12] ^= 1;
  std::ofstream(dir / "bad.ckpt", std::ios::binary)
      .write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  EXPECT_THROW(load_checkpoint(dir / "bad.ckpt"), std::runtime_error);
  EXPECT_THROW(load_checkpoint(dir / "missing.ckpt"), std::runtime_error);
}

TEST(Model, ConvKindNames) {
  for (ConvKind k : kKinds) EXPECT_EQ(parse_conv_kind(to_string(k)), k);
  EXPECT_THROW(parse_conv_kind("gcn"), ModelError);
}

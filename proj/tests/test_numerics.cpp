#include "hgnn/random.hpp"
#include "hgnn/tensor.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <functional>

using namespace hgnn;

namespace {

Matrix random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-1.0, 1.0);
  return m;
}

using Build = std::function<Var(Tape&, const std::vector<Var>&)>;

// Scalarises the op output with a fixed random projection and compares the
// tape gradient of every input with central differences.
double max_grad_error(const Build& build, std::vector<Matrix> inputs, std::uint64_t seed = 1) {
  Matrix proj;
  auto loss = [&](bool keep, std::vector<Matrix>* grads) {
    Tape t;
    std::vector<Var> vars;
    for (const auto& m : inputs) vars.push_back(t.leaf(m, true));
    const Var out = build(t, vars);
    if (!keep) {
      Rng rng(seed);
      proj = random_matrix(rng, t.value(out).rows(), t.value(out).cols());
    }
    const Var l = ops::sum(t, ops::mul(t, out, t.constant(proj)));
    if (grads) {
      t.backward(l);
      for (Var v : vars) grads->push_back(t.grad(v));
    }
    return t.value(l)(0, 0);
  };
  std::vector<Matrix> analytic;
  loss(false, &analytic);
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Matrix numeric = oracle::numeric_grad(inputs[k], [&] { return loss(true, nullptr); });
    for (Eigen::Index i = 0; i < numeric.size(); ++i) {
      worst = std::max(worst, oracle::rel_error(analytic[k].data()[i], numeric.data()[i]));
    }
  }
  return worst;
}

constexpr double kPrimitiveTol = 1e-6;

const std::vector<Index> kSrc{0, 1, 2, 2, 3, 4, 0};
const std::vector<Index> kDst{0, 0, 1, 2, 2, 2, 3};  // destination 4 has no edges

}  // namespace

TEST(TapeGrad, Matmul) {
  Rng rng(1);
  auto err = max_grad_error([](Tape& t, const auto& v) { return ops::matmul(t, v[0], v[1]); },
                            {random_matrix(rng, 3, 4), random_matrix(rng, 4, 2)});
  EXPECT_LE(err, kPrimitiveTol);
}

TEST(TapeGrad, AddMulScaleBias) {
  Rng rng(2);
  auto err = max_grad_error(
      [](Tape& t, const auto& v) {
        return ops::add_bias(t, ops::scale(t, ops::mul(t, ops::add(t, v[0], v[1]), v[1]), -1.5), v[2]);
      },
      {random_matrix(rng, 3, 4), random_matrix(rng, 3, 4), random_matrix(rng, 1, 4)});
  EXPECT_LE(err, kPrimitiveTol);
}

TEST(TapeGrad, ReluAndLeakyRelu) {
  Rng rng(3);
  // Keep entries away from the kink so central differences are valid.
  Matrix x = random_matrix(rng, 4, 5);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (std::abs(x.data()[i]) < 0.05) x.data()[i] = 0.3;
  }
  EXPECT_LE(max_grad_error([](Tape& t, const auto& v) { return ops::relu(t, v[0]); }, {x}), kPrimitiveTol);
  EXPECT_LE(max_grad_error([](Tape& t, const auto& v) { return ops::leaky_relu(t, v[0], 0.2); }, {x}),
            kPrimitiveTol);
}

TEST(TapeGrad, GatherAndSegmentReductions) {
  Rng rng(4);
  const Matrix x = random_matrix(rng, 5, 3);
  const Matrix msgs = random_matrix(rng, 7, 3);
  EXPECT_LE(max_grad_error([](Tape& t, const auto& v) { return ops::gather_rows(t, v[0], kSrc); }, {x}),
            kPrimitiveTol);
  EXPECT_LE(max_grad_error([](Tape& t, const auto& v) { return ops::segment_sum(t, v[0], kDst, 5); },
                           {msgs}),
            kPrimitiveTol);
  EXPECT_LE(max_grad_error([](Tape& t, const auto& v) { return ops::segment_mean(t, v[0], kDst, 5); },
                           {msgs}),
            kPrimitiveTol);
}

TEST(TapeGrad, SegmentSoftmaxEdgeDotPropagate) {
  Rng rng(5);
  EXPECT_LE(max_grad_error([](Tape& t, const auto& v) { return ops::segment_softmax(t, v[0], kDst, 5); },
                           {random_matrix(rng, 7, 1)}),
            kPrimitiveTol);
  EXPECT_LE(max_grad_error(
                [](Tape& t, const auto& v) { return ops::edge_dot(t, v[0], kDst, v[1], kSrc); },
                {random_matrix(rng, 5, 3), random_matrix(rng, 5, 3)}),
            kPrimitiveTol);
  EXPECT_LE(max_grad_error(
                [](Tape& t, const auto& v) { return ops::propagate(t, v[0], v[1], kSrc, kDst, 5); },
                {random_matrix(rng, 5, 3), random_matrix(rng, 7, 1)}),
            kPrimitiveTol);
}

TEST(TapeGrad, ReusedNodeAccumulates) {
  Tape t;
  Matrix a(1, 1);
  a << 3.0;
  const Var x = t.leaf(a, true);
  const Var y = ops::sum(t, ops::mul(t, x, x));  // x^2
  const Var z = ops::add(t, y, ops::scale(t, y, 2.0));
  t.backward(z);
  EXPECT_DOUBLE_EQ(t.grad(x)(0, 0), 18.0);
}

TEST(SegmentOps, ForwardValuesMatchLoops) {
  Rng rng(6);
  const Matrix msgs = random_matrix(rng, 7, 2);
  Tape t;
  const Var m = t.constant(msgs);
  const Matrix sum = t.value(ops::segment_sum(t, m, kDst, 5));
  const Matrix mean = t.value(ops::segment_mean(t, m, kDst, 5));
  for (Index v = 0; v < 5; ++v) {
    Matrix s = Matrix::Zero(1, 2);
    int deg = 0;
    for (std::size_t e = 0; e < kDst.size(); ++e) {
      if (kDst[e] == v) {
        s += msgs.row(e);
        ++deg;
      }
    }
    EXPECT_TRUE(sum.row(v).isApprox(s, 1e-14) || s.isZero());
    const Matrix expected_mean = deg ? Matrix(s / deg) : Matrix(Matrix::Zero(1, 2));
    EXPECT_LE((mean.row(v) - expected_mean).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(SegmentOps, SoftmaxSumsToOnePerDestination) {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix scores = random_matrix(rng, 7, 1) * 50.0;  // large spread exercises the max shift
    Tape t;
    const Matrix a = t.value(ops::segment_softmax(t, t.constant(scores), kDst, 5));
    std::vector<double> total(5, 0.0);
    for (std::size_t e = 0; e < kDst.size(); ++e) {
      EXPECT_GE(a(e, 0), 0.0);
      total[kDst[e]] += a(e, 0);
    }
    for (Index v : {0u, 1u, 2u, 3u}) EXPECT_NEAR(total[v], 1.0, 1e-12);
    EXPECT_EQ(total[4], 0.0);
  }
}

TEST(SegmentOps, RejectsOutOfRangeDestination) {
  Tape t;
  const Var m = t.constant(Matrix::Ones(2, 1));
  const std::vector<Index> dst{0, 3};
  EXPECT_THROW(ops::segment_sum(t, m, dst, 2), ShapeError);
}

TEST(Tape, ShapeMismatchThrows) {
  Tape t;
  const Var a = t.constant(Matrix::Ones(2, 3));
  const Var b = t.constant(Matrix::Ones(2, 3));
  EXPECT_THROW(ops::matmul(t, a, b), ShapeError);
  EXPECT_THROW(ops::add(t, a, t.constant(Matrix::Ones(3, 2))), ShapeError);
}

TEST(Tape, GradOfConstantThrows) {
  Tape t;
  const Var a = t.constant(Matrix::Ones(1, 1));
  const Var w = t.leaf(Matrix::Ones(1, 1), true);
  const Var l = ops::sum(t, ops::mul(t, a, w));
  t.backward(l);
  EXPECT_THROW(t.grad(a), std::logic_error);
  EXPECT_DOUBLE_EQ(t.grad(w)(0, 0), 1.0);
}

TEST(Dot, FixedOrderIsDeterministicAndAccurate) {
  Rng rng(8);
  std::vector<double> a(37), b(37);
  for (auto& x : a) x = rng.normal();
  for (auto& x : b) x = rng.normal();
  double naive = 0;
  for (std::size_t i = 0; i < a.size(); ++i) naive += a[i] * b[i];
  EXPECT_NEAR(dot(a, b), naive, 1e-12);
  EXPECT_EQ(dot(a, b), dot(a, b));
  EXPECT_EQ(dot(a, b), dot(b, a));
}

TEST(Rng, SameSeedSameStreamAndRanges) {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next();
    EXPECT_EQ(x, b.next());
    differs |= x != c.next();
  }
  EXPECT_TRUE(differs);
  for (int i = 0; i < 1000; ++i) {
    const double u = a.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_LT(a.below(7), 7u);
  }
}

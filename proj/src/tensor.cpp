#include "hgnn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace hgnn {

namespace {

std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
  }
}

void require_index_range(std::span<const Index> idx, Eigen::Index bound, const char* op) {
  for (Index i : idx) {
    if (static_cast<Eigen::Index>(i) >= bound) {
      throw ShapeError(std::string(op) + ": index " + std::to_string(i) + " out of range " +
                       std::to_string(bound));
    }
  }
}

void require_column(const Matrix& m, std::size_t rows, const char* op) {
  if (m.cols() != 1 || static_cast<std::size_t>(m.rows()) != rows) {
    throw ShapeError(std::string(op) + ": expected " + std::to_string(rows) + "x1, got " +
                     shape_str(m));
  }
}

}  // namespace

void check_finite(const Matrix& m, const char* where) {
  if (!m.allFinite()) {
    throw NonFiniteError(std::string("non-finite value produced by ") + where);
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  // Four independent accumulators in a fixed order: bitwise identical for
  // identical inputs regardless of where the rows live in memory.
  const std::size_t n = std::min(a.size(), b.size());
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

Var Tape::leaf(Matrix value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, Backprop backprop) {
#ifdef HGNN_CHECK_FINITE
  check_finite(value, "tape op");
#endif
  bool needs = false;
  for (Var v : inputs) needs = needs || nodes_.at(v.id).requires_grad;
  Node n;
  n.value = std::move(value);
  n.requires_grad = needs;
  if (needs) n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

const Matrix& Tape::grad(Var v) const {
  const Node& n = nodes_.at(v.id);
  if (!n.grad_ready) {
    throw std::logic_error("gradient requested for a value that is not differentiable");
  }
  return n.grad;
}

Matrix& Tape::grad_slot(Var v) { return nodes_.at(v.id).grad; }

void Tape::accumulate(Var v, const Matrix& g) {
  Node& n = nodes_.at(v.id);
  if (!n.requires_grad) return;
  n.grad += g;
}

void Tape::backward(Var target) {
  Node& out = nodes_.at(target.id);
  if (out.value.size() != 1) {
    throw ShapeError("backward: target must be a scalar, got " + shape_str(out.value));
  }
  for (std::size_t i = 0; i <= target.id; ++i) {
    Node& n = nodes_[i];
    n.grad_ready = n.requires_grad;
    if (n.requires_grad) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  }
  if (!out.requires_grad) return;
  out.grad(0, 0) = 1.0;
  for (std::size_t i = target.id + 1; i-- > 0;) {
    if (nodes_[i].requires_grad && nodes_[i].backprop) nodes_[i].backprop(*this, i);
  }
}

namespace ops {

Var matmul(Tape& t, Var a, Var b) {
  const Matrix& A = t.value(a);
  const Matrix& B = t.value(b);
  if (A.cols() != B.rows()) {
    throw ShapeError("matmul: inner dimensions differ " + shape_str(A) + " * " + shape_str(B));
  }
  Matrix C = A * B;
  return t.record(std::move(C), {a, b}, [a, b](Tape& tp, std::size_t self) {
    const Matrix& G = tp.output_grad(self);
    if (tp.requires_grad(a)) tp.grad_slot(a).noalias() += G * tp.value(b).transpose();
    if (tp.requires_grad(b)) tp.grad_slot(b).noalias() += tp.value(a).transpose() * G;
  });
}

Var add(Tape& t, Var a, Var b) {
  require_same_shape(t.value(a), t.value(b), "add");
  Matrix C = t.value(a) + t.value(b);
  return t.record(std::move(C), {a, b}, [a, b](Tape& tp, std::size_t self) {
    const Matrix& G = tp.output_grad(self);
    tp.accumulate(a, G);
    tp.accumulate(b, G);
  });
}

Var add_bias(Tape& t, Var a, Var bias) {
  const Matrix& A = t.value(a);
  const Matrix& b = t.value(bias);
  if (b.rows() != 1 || b.cols() != A.cols()) {
    throw ShapeError("add_bias: bias " + shape_str(b) + " does not fit " + shape_str(A));
  }
  Matrix C = A.rowwise() + b.row(0);
  return t.record(std::move(C), {a, bias}, [a, bias](Tape& tp, std::size_t self) {
    const Matrix& G = tp.output_grad(self);
    tp.accumulate(a, G);
    if (tp.requires_grad(bias)) tp.grad_slot(bias) += G.colwise().sum();
  });
}

Var mul(Tape& t, Var a, Var b) {
  require_same_shape(t.value(a), t.value(b), "mul");
  Matrix C = t.value(a).cwiseProduct(t.value(b));
  return t.record(std::move(C), {a, b}, [a, b](Tape& tp, std::size_t self) {
    const Matrix& G = tp.output_grad(self);
    if (tp.requires_grad(a)) tp.grad_slot(a) += G.cwiseProduct(tp.value(b));
    if (tp.requires_grad(b)) tp.grad_slot(b) += G.cwiseProduct(tp.value(a));
  });
}

Var scale(Tape& t, Var a, double factor) {
  Matrix C = t.value(a) * factor;
  return t.record(std::move(C), {a}, [a, factor](Tape& tp, std::size_t self) {
    if (tp.requires_grad(a)) tp.grad_slot(a) += tp.output_grad(self) * factor;
  });
}

Var relu(Tape& t, Var x) {
  Matrix y = t.value(x).cwiseMax(0.0);
  return t.record(std::move(y), {x}, [x](Tape& tp, std::size_t self) {
    const Matrix& G = tp.output_grad(self);
    const Matrix& X = tp.value(x);
    tp.grad_slot(x) += (X.array() > 0.0).select(G, 0.0);
  });
}

Var leaky_relu(Tape& t, Var x, double slope) {
  const Matrix& X = t.value(x);
  Matrix y = (X.array() > 0.0).select(X, X * slope);
  return t.record(std::move(y), {x}, [x, slope](Tape& tp, std::size_t self) {
    const Matrix& G = tp.output_grad(self);
    const Matrix& X = tp.value(x);
    tp.grad_slot(x) += (X.array() > 0.0).select(G, G * slope);
  });
}

Var sum(Tape& t, Var x) {
  Matrix s(1, 1);
  s(0, 0) = t.value(x).sum();
  return t.record(std::move(s), {x}, [x](Tape& tp, std::size_t self) {
    tp.grad_slot(x).array() += tp.output_grad(self)(0, 0);
  });
}

Var gather_rows(Tape& t, Var x, std::span<const Index> index) {
  const Matrix& X = t.value(x);
  require_index_range(index, X.rows(), "gather_rows");
  Matrix out(static_cast<Eigen::Index>(index.size()), X.cols());
  for (std::size_t e = 0; e < index.size(); ++e) out.row(e) = X.row(index[e]);
  return t.record(std::move(out), {x}, [x, index](Tape& tp, std::size_t self) {
    const Matrix& G = tp.output_grad(self);
    Matrix& dX = tp.grad_slot(x);
    for (std::size_t e = 0; e < index.size(); ++e) dX.row(index[e]) += G.row(e);
  });
}

Var segment_sum(Tape& t, Var messages, std::span<const Index> dst, std::size_t n_dst) {
  const Matrix& M = t.value(messages);
  if (static_cast<std::size_t>(M.rows()) != dst.size()) {
    throw ShapeError("segment_sum: " + std::to_string(dst.size()) + " destinations for " +
                     shape_str(M) + " messages");
  }
  require_index_range(dst, static_cast<Eigen::Index>(n_dst), "segment_sum");
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(n_dst), M.cols());
  for (std::size_t e = 0; e < dst.size(); ++e) out.row(dst[e]) += M.row(e);
  return t.record(std::move(out), {messages}, [messages, dst](Tape& tp, std::size_t self) {
    const Matrix& G = tp.output_grad(self);
    Matrix& dM = tp.grad_slot(messages);
    for (std::size_t e = 0; e < dst.size(); ++e) dM.row(e) += G.row(dst[e]);
  });
}

Var segment_mean(Tape& t, Var messages, std::span<const Index> dst, std::size_t n_dst) {
  const Matrix& M = t.value(messages);
  if (static_cast<std::size_t>(M.rows()) != dst.size()) {
    throw ShapeError("segment_mean: " + std::to_string(dst.size()) + " destinations for " +
                     shape_str(M) + " messages");
  }
  require_index_range(dst, static_cast<Eigen::Index>(n_dst), "segment_mean");
  std::vector<double> degree(n_dst, 0.0);
  for (Index v : dst) degree[v] += 1.0;
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(n_dst), M.cols());
  for (std::size_t e = 0; e < dst.size(); ++e) out.row(dst[e]) += M.row(e);
  for (std::size_t v = 0; v < n_dst; ++v) {
    if (degree[v] > 0) out.row(v) /= degree[v];
  }
  return t.record(std::move(out), {messages},
                  [messages, dst, degree = std::move(degree)](Tape& tp, std::size_t self) {
                    const Matrix& G = tp.output_grad(self);
                    Matrix& dM = tp.grad_slot(messages);
                    for (std::size_t e = 0; e < dst.size(); ++e) {
                      dM.row(e) += G.row(dst[e]) / degree[dst[e]];
                    }
                  });
}

Var segment_softmax(Tape& t, Var scores, std::span<const Index> dst, std::size_t n_dst) {
  const Matrix& S = t.value(scores);
  require_column(S, dst.size(), "segment_softmax");
  require_index_range(dst, static_cast<Eigen::Index>(n_dst), "segment_softmax");
  std::vector<double> max_score(n_dst, -std::numeric_limits<double>::infinity());
  for (std::size_t e = 0; e < dst.size(); ++e) max_score[dst[e]] = std::max(max_score[dst[e]], S(e, 0));
  Matrix alpha(S.rows(), 1);
  std::vector<double> denom(n_dst, 0.0);
  for (std::size_t e = 0; e < dst.size(); ++e) {
    alpha(e, 0) = std::exp(S(e, 0) - max_score[dst[e]]);
    denom[dst[e]] += alpha(e, 0);
  }
  for (std::size_t e = 0; e < dst.size(); ++e) alpha(e, 0) /= denom[dst[e]];

  return t.record(std::move(alpha), {scores}, [scores, dst, n_dst](Tape& tp, std::size_t self) {
    const Matrix& G = tp.output_grad(self);
    const Matrix& A = tp.value(Var{self});
    // d s_e = a_e * (g_e - sum_{e' -> v} a_e' g_e')
    std::vector<double> weighted(n_dst, 0.0);
    for (std::size_t e = 0; e < dst.size(); ++e) weighted[dst[e]] += A(e, 0) * G(e, 0);
    Matrix& dS = tp.grad_slot(scores);
    for (std::size_t e = 0; e < dst.size(); ++e) {
      dS(e, 0) += A(e, 0) * (G(e, 0) - weighted[dst[e]]);
    }
  });
}

Var edge_dot(Tape& t, Var a, std::span<const Index> a_index, Var b,
             std::span<const Index> b_index) {
  const Matrix& A = t.value(a);
  const Matrix& B = t.value(b);
  if (A.cols() != B.cols()) throw ShapeError("edge_dot: " + shape_str(A) + " vs " + shape_str(B));
  if (a_index.size() != b_index.size()) throw ShapeError("edge_dot: index lengths differ");
  require_index_range(a_index, A.rows(), "edge_dot");
  require_index_range(b_index, B.rows(), "edge_dot");
  const std::size_t d = static_cast<std::size_t>(A.cols());
  Matrix out(static_cast<Eigen::Index>(a_index.size()), 1);
  for (std::size_t e = 0; e < a_index.size(); ++e) {
    out(e, 0) = dot({A.row(a_index[e]).data(), d}, {B.row(b_index[e]).data(), d});
  }
  return t.record(std::move(out), {a, b}, [a, b, a_index, b_index](Tape& tp, std::size_t self) {
    const Matrix& G = tp.output_grad(self);
    const Matrix& A = tp.value(a);
    const Matrix& B = tp.value(b);
    const bool ga = tp.requires_grad(a), gb = tp.requires_grad(b);
    for (std::size_t e = 0; e < a_index.size(); ++e) {
      const double g = G(e, 0);
      if (ga) tp.grad_slot(a).row(a_index[e]) += g * B.row(b_index[e]);
      if (gb) tp.grad_slot(b).row(b_index[e]) += g * A.row(a_index[e]);
    }
  });
}

Var propagate(Tape& t, Var x, Var coef, std::span<const Index> src, std::span<const Index> dst,
              std::size_t n_dst) {
  const Matrix& X = t.value(x);
  const Matrix& C = t.value(coef);
  if (src.size() != dst.size()) throw ShapeError("propagate: src/dst lengths differ");
  require_column(C, src.size(), "propagate");
  require_index_range(src, X.rows(), "propagate");
  require_index_range(dst, static_cast<Eigen::Index>(n_dst), "propagate");
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(n_dst), X.cols());
  for (std::size_t e = 0; e < src.size(); ++e) out.row(dst[e]) += C(e, 0) * X.row(src[e]);
  return t.record(std::move(out), {x, coef}, [x, coef, src, dst](Tape& tp, std::size_t self) {
    const Matrix& G = tp.output_grad(self);
    const Matrix& X = tp.value(x);
    const Matrix& C = tp.value(coef);
    const std::size_t d = static_cast<std::size_t>(X.cols());
    if (tp.requires_grad(x)) {
      Matrix& dX = tp.grad_slot(x);
      for (std::size_t e = 0; e < src.size(); ++e) dX.row(src[e]) += C(e, 0) * G.row(dst[e]);
    }
    if (tp.requires_grad(coef)) {
      Matrix& dC = tp.grad_slot(coef);
      for (std::size_t e = 0; e < src.size(); ++e) {
        dC(e, 0) += dot({G.row(dst[e]).data(), d}, {X.row(src[e]).data(), d});
      }
    }
  });
}

}  // namespace ops
}  // namespace hgnn

#pragma once

// Dense matrices, a reverse-mode tape, and the per-destination segment
// reductions used by the message-passing operators.

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hgnn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = std::uint32_t;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Handle to a value recorded on a Tape.
struct Var {
  std::size_t id = 0;
};

// Records primitive ops in execution order so that a single reverse sweep
// yields gradients for every leaf that requires them.
//
// Index spans passed to ops (gather/segment/propagate) are captured by
// reference and must outlive the call to backward().
class Tape {
 public:
  using Backprop = std::function<void(Tape&, std::size_t self)>;

  Var leaf(Matrix value, bool requires_grad = false);
  Var constant(Matrix value) { return leaf(std::move(value), false); }

  // Low-level hook for defining new primitives outside this module. The
  // backprop callback reads grad(self) and accumulates into its inputs.
  Var record(Matrix value, std::initializer_list<Var> inputs, Backprop backprop);

  const Matrix& value(Var v) const { return nodes_.at(v.id).value; }
  // Gradient of the last backward() target with respect to v. Zero when v
  // did not influence the target; throws for values that do not require grad.
  const Matrix& grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

  // Accumulates into v's gradient slot; used by backprop callbacks.
  void accumulate(Var v, const Matrix& g);
  Matrix& grad_slot(Var v);
  const Matrix& output_grad(std::size_t self) const { return nodes_[self].grad; }

  // Seeds d(target)/d(target) = 1 and sweeps the record in reverse.
  void backward(Var scalar_target);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    bool grad_ready = false;
    Backprop backprop;
  };
  std::vector<Node> nodes_;
};

namespace ops {

Var matmul(Tape& t, Var a, Var b);
Var add(Tape& t, Var a, Var b);
// a: n x m, bias: 1 x m, broadcast over rows.
Var add_bias(Tape& t, Var a, Var bias);
Var mul(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, double factor);
Var relu(Tape& t, Var x);
Var leaky_relu(Tape& t, Var x, double slope = 0.2);
// Sum of every entry, as a 1 x 1 value.
Var sum(Tape& t, Var x);

// rows[e] = x[index[e]]
Var gather_rows(Tape& t, Var x, std::span<const Index> index);

// out[v] = sum of messages[e] over e with dst[e] == v.
Var segment_sum(Tape& t, Var messages, std::span<const Index> dst, std::size_t n_dst);
// Mean of incoming rows; destinations without edges get a zero row.
Var segment_mean(Tape& t, Var messages, std::span<const Index> dst, std::size_t n_dst);
// Softmax of an E x 1 score column over edges sharing a destination.
Var segment_softmax(Tape& t, Var scores, std::span<const Index> dst, std::size_t n_dst);

// out[e] = <a[a_index[e]], b[b_index[e]]>, an E x 1 column.
Var edge_dot(Tape& t, Var a, std::span<const Index> a_index, Var b,
             std::span<const Index> b_index);

// Fused gather + weighted segment sum: out[dst[e]] += coef[e] * x[src[e]].
// coef is E x 1. Never materialises the E x d message matrix.
Var propagate(Tape& t, Var x, Var coef, std::span<const Index> src,
              std::span<const Index> dst, std::size_t n_dst);

}  // namespace ops

// Plain (tape-free) helpers shared by several modules.
void check_finite(const Matrix& m, const char* where);
double dot(std::span<const double> a, std::span<const double> b);

}  // namespace hgnn

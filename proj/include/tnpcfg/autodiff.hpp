#pragma once

// Reverse-mode differentiation over dense row-major matrices.
//
// The operator set is closed: it holds exactly what the grammar
// parameterizer and the inside recursion need. Vectors are 1 x c or r x 1
// matrices, scalars are 1 x 1.

#include <array>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "tnpcfg/grammar.hpp"

namespace tnpcfg::ad {

template <typename Real>
class Array {
 public:
  /// Unset placeholder; every primitive rejects it.
  Array() = default;
  Array(std::size_t rows, std::size_t cols, Real fill = Real(0));
  Array(std::size_t rows, std::size_t cols, std::vector<Real> data);

  static Array scalar(Real value) { return Array(1, 1, value); }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  std::array<std::size_t, 2> shape() const { return {rows_, cols_}; }
  bool empty() const { return data_.empty(); }
  bool same_shape(const Array& other) const { return rows_ == other.rows_ && cols_ == other.cols_; }

  Real& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  Real operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  Real& operator[](std::size_t i) { return data_[i]; }
  Real operator[](std::size_t i) const { return data_[i]; }

  std::span<Real> values() { return data_; }
  std::span<const Real> values() const { return data_; }
  Real* data() { return data_.data(); }
  const Real* data() const { return data_.data(); }

  void fill(Real value);

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<Real> data_;
};

struct Var {
  std::uint32_t id = 0;
};

template <typename Real>
class Tape {
 public:
  /// Receives the node itself and its output gradient; adds into operand
  /// gradients via grad_target().
  using BackwardFn = std::function<void(Tape&, Var self, const Array<Real>& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that never receives a gradient.
  Var constant(Array<Real> value);
  /// Owned leaf with a gradient, readable through grad() after backward().
  Var variable(Array<Real> value);
  /// Leaf aliasing external storage. backward() adds its gradient into
  /// `grad`, which must outlive the call and is never zeroed here.
  Var parameter(const Array<Real>& value, Array<Real>& grad);

  const Array<Real>& value(Var v) const;
  /// Gradient of the last backward() output; zeros when unreachable.
  const Array<Real>& grad(Var v) const;
  bool requires_grad(Var v) const { return node(v).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Records a primitive application. Used by the primitive functions.
  Var record(Array<Real> value, std::initializer_list<Var> inputs, BackwardFn backward);
  /// Gradient buffer of `v` for accumulation, or nullptr if it needs none.
  Array<Real>* grad_target(Var v);

  /// Replays the tape in reverse from a 1 x 1 output.
  void backward(Var output);

 private:
  struct Node {
    Array<Real> value;
    const Array<Real>* external = nullptr;
    Array<Real>* external_grad = nullptr;
    Array<Real> grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  const Node& node(Var v) const;
  Node& node(Var v);
  Var push(Node n);

  // A deque keeps value() references valid while further nodes are recorded.
  std::deque<Node> nodes_;
};

enum class Trans { kNo, kYes };

// Primitive set. Each returns a new node; operands must be shape-compatible
// or StructuralError is thrown.

/// op(a) * op(b).
template <typename Real>
Var matmul(Tape<Real>& t, Var a, Var b, Trans ta = Trans::kNo, Trans tb = Trans::kNo);
template <typename Real>
Var hadamard(Tape<Real>& t, Var a, Var b);
/// Elementwise sum; `b` may also be a 1 x cols row broadcast over a's rows.
template <typename Real>
Var add(Tape<Real>& t, Var a, Var b);
template <typename Real>
Var relu(Tape<Real>& t, Var a);
/// axis 1 normalizes each row, axis 0 normalizes each column.
template <typename Real>
Var softmax(Tape<Real>& t, Var a, int axis);
template <typename Real>
Var log(Tape<Real>& t, Var a);
template <typename Real>
Var exp(Tape<Real>& t, Var a);
/// Reduces `axis` (0 -> 1 x cols, 1 -> rows x 1).
template <typename Real>
Var logsumexp(Tape<Real>& t, Var a, int axis);
template <typename Real>
Var gather_rows(Tape<Real>& t, Var a, std::span<const std::size_t> rows);
/// Reduces `axis` (0 -> 1 x cols, 1 -> rows x 1).
template <typename Real>
Var sum(Tape<Real>& t, Var a, int axis);
/// Multiplies by a constant.
template <typename Real>
Var scale(Tape<Real>& t, Var a, Real factor);
/// Multiplies row i of `a` by g[i]; `g` is rows x 1 and may carry a gradient.
template <typename Real>
Var scale_rows(Tape<Real>& t, Var a, Var g);

template <typename Real>
Var sum_all(Tape<Real>& t, Var a) {
  return sum(t, sum(t, a, 1), 0);
}

struct FdResult {
  double max_rel_error = 0.0;
  std::size_t compared = 0;
  /// Coordinates whose stencil window straddles a kink (such as relu at 0).
  std::size_t skipped = 0;
};

using ScalarFn = std::function<Var(Tape<double>&, std::span<const Var>)>;

/// Five-point central differences against backward(). Relative error uses
/// max(|a|, |b|, 1e-8) as denominator. `max_coords_per_array` caps the
/// number of probed coordinates (evenly strided) for large inputs; 0 means all.
FdResult finite_difference_check(const ScalarFn& f, const std::vector<Array<double>>& point, double eps,
                                 std::size_t max_coords_per_array = 0);

}  // namespace tnpcfg::ad

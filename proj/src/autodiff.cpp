#include "tnpcfg/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace tnpcfg::ad {

namespace {

template <typename Real>
using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Real>
Eigen::Map<RowMat<Real>> as_matrix(Array<Real>& a) {
  return {a.data(), static_cast<Eigen::Index>(a.rows()), static_cast<Eigen::Index>(a.cols())};
}

template <typename Real>
Eigen::Map<const RowMat<Real>> as_matrix(const Array<Real>& a) {
  return {a.data(), static_cast<Eigen::Index>(a.rows()), static_cast<Eigen::Index>(a.cols())};
}

std::size_t op_rows(std::array<std::size_t, 2> s, Trans t) { return t == Trans::kNo ? s[0] : s[1]; }
std::size_t op_cols(std::array<std::size_t, 2> s, Trans t) { return t == Trans::kNo ? s[1] : s[0]; }
Trans flip(Trans t) { return t == Trans::kNo ? Trans::kYes : Trans::kNo; }

// out += op(a) * op(b)
template <typename Real>
void gemm_acc(const Array<Real>& a, Trans ta, const Array<Real>& b, Trans tb, Array<Real>& out) {
  auto A = as_matrix(a);
  auto B = as_matrix(b);
  auto C = as_matrix(out);
  if (ta == Trans::kNo && tb == Trans::kNo) {
    C.noalias() += A * B;
  } else if (ta == Trans::kNo) {
    C.noalias() += A * B.transpose();
  } else if (tb == Trans::kNo) {
    C.noalias() += A.transpose() * B;
  } else {
    C.noalias() += A.transpose() * B.transpose();
  }
}

std::string shape_str(std::array<std::size_t, 2> s) {
  return std::to_string(s[0]) + "x" + std::to_string(s[1]);
}

void require(bool cond, const std::string& what) {
  if (!cond) throw StructuralError(what);
}

void require_axis(int axis) { require(axis == 0 || axis == 1, "axis must be 0 or 1"); }

}  // namespace

template <typename Real>
Array<Real>::Array(std::size_t rows, std::size_t cols, Real fill) : rows_(rows), cols_(cols) {
  require(rows > 0 && cols > 0, "array extents must be >= 1, got " + shape_str({rows, cols}));
  data_.assign(rows * cols, fill);
}

template <typename Real>
Array<Real>::Array(std::size_t rows, std::size_t cols, std::vector<Real> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  require(rows > 0 && cols > 0, "array extents must be >= 1, got " + shape_str({rows, cols}));
  require(data_.size() == rows * cols, "buffer length does not match shape " + shape_str({rows, cols}));
}

template <typename Real>
void Array<Real>::fill(Real value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename Real>
const typename Tape<Real>::Node& Tape<Real>::node(Var v) const {
  require(v.id < nodes_.size(), "variable is not on this tape");
  return nodes_[v.id];
}

template <typename Real>
typename Tape<Real>::Node& Tape<Real>::node(Var v) {
  require(v.id < nodes_.size(), "variable is not on this tape");
  return nodes_[v.id];
}

template <typename Real>
Var Tape<Real>::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename Real>
Var Tape<Real>::constant(Array<Real> value) {
  require(!value.empty(), "leaf value is unset");
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

template <typename Real>
Var Tape<Real>::variable(Array<Real> value) {
  require(!value.empty(), "leaf value is unset");
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

template <typename Real>
Var Tape<Real>::parameter(const Array<Real>& value, Array<Real>& grad) {
  require(!value.empty(), "parameter value is unset");
  require(grad.same_shape(value), "parameter gradient buffer has the wrong shape");
  Node n;
  n.external = &value;
  n.external_grad = &grad;
  n.requires_grad = true;
  return push(std::move(n));
}

template <typename Real>
const Array<Real>& Tape<Real>::value(Var v) const {
  const Node& n = node(v);
  return n.external ? *n.external : n.value;
}

template <typename Real>
const Array<Real>& Tape<Real>::grad(Var v) const {
  const Node& n = node(v);
  if (n.grad.empty()) {
    const auto& val = value(v);
    const_cast<Node&>(n).grad = Array<Real>(val.rows(), val.cols());
  }
  return n.grad;
}

template <typename Real>
Var Tape<Real>::record(Array<Real> value, std::initializer_list<Var> inputs, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  for (Var in : inputs) n.requires_grad = n.requires_grad || node(in).requires_grad;
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

template <typename Real>
Array<Real>* Tape<Real>::grad_target(Var v) {
  Node& n = node(v);
  if (!n.requires_grad) return nullptr;
  if (n.grad.empty()) {
    const auto& val = value(v);
    n.grad = Array<Real>(val.rows(), val.cols());
  }
  return &n.grad;
}

template <typename Real>
void Tape<Real>::backward(Var output) {
  const auto& out = value(output);
  require(out.rows() == 1 && out.cols() == 1,
          "backward needs a scalar output, got " + shape_str(out.shape()));
  for (auto& n : nodes_) n.grad = Array<Real>();
  if (!node(output).requires_grad) return;
  node(output).grad = Array<Real>::scalar(Real(1));
  for (std::size_t i = output.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
    n.backward(*this, Var{static_cast<std::uint32_t>(i)}, n.grad);
  }
  for (auto& n : nodes_) {
    if (n.external_grad && !n.grad.empty()) {
      auto dst = n.external_grad->values();
      auto src = n.grad.values();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
  }
}

template <typename Real>
Var matmul(Tape<Real>& t, Var a, Var b, Trans ta, Trans tb) {
  const auto& av = t.value(a);
  const auto& bv = t.value(b);
  const std::size_t inner = op_cols(av.shape(), ta);
  require(inner == op_rows(bv.shape(), tb),
          "matmul shape mismatch: " + shape_str(av.shape()) + " and " + shape_str(bv.shape()));
  Array<Real> out(op_rows(av.shape(), ta), op_cols(bv.shape(), tb));
  gemm_acc(av, ta, bv, tb, out);
  return t.record(std::move(out), {a, b}, [a, b, ta, tb](Tape<Real>& tp, Var self, const Array<Real>& dc) {
    if (auto* da = tp.grad_target(a)) {
      if (ta == Trans::kNo) {
        gemm_acc(dc, Trans::kNo, tp.value(b), flip(tb), *da);
      } else {
        gemm_acc(tp.value(b), tb, dc, Trans::kYes, *da);
      }
    }
    if (auto* db = tp.grad_target(b)) {
      if (tb == Trans::kNo) {
        gemm_acc(tp.value(a), flip(ta), dc, Trans::kNo, *db);
      } else {
        gemm_acc(dc, Trans::kYes, tp.value(a), ta, *db);
      }
    }
  });
}

template <typename Real>
Var hadamard(Tape<Real>& t, Var a, Var b) {
  const auto& av = t.value(a);
  const auto& bv = t.value(b);
  require(av.same_shape(bv), "hadamard shape mismatch: " + shape_str(av.shape()) + " and " + shape_str(bv.shape()));
  Array<Real> out(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return t.record(std::move(out), {a, b}, [a, b](Tape<Real>& tp, Var self, const Array<Real>& dc) {
    if (auto* da = tp.grad_target(a)) {
      const auto& bv = tp.value(b);
      for (std::size_t i = 0; i < dc.size(); ++i) (*da)[i] += dc[i] * bv[i];
    }
    if (auto* db = tp.grad_target(b)) {
      const auto& av = tp.value(a);
      for (std::size_t i = 0; i < dc.size(); ++i) (*db)[i] += dc[i] * av[i];
    }
  });
}

template <typename Real>
Var add(Tape<Real>& t, Var a, Var b) {
  const auto& av = t.value(a);
  const auto& bv = t.value(b);
  const bool broadcast = !av.same_shape(bv) && bv.rows() == 1 && bv.cols() == av.cols();
  require(av.same_shape(bv) || broadcast,
          "add shape mismatch: " + shape_str(av.shape()) + " and " + shape_str(bv.shape()));
  Array<Real> out = av;
  const std::size_t cols = av.cols();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += broadcast ? bv[i % cols] : bv[i];
  return t.record(std::move(out), {a, b}, [a, b, broadcast, cols](Tape<Real>& tp, Var self, const Array<Real>& dc) {
    if (auto* da = tp.grad_target(a)) {
      for (std::size_t i = 0; i < dc.size(); ++i) (*da)[i] += dc[i];
    }
    if (auto* db = tp.grad_target(b)) {
      for (std::size_t i = 0; i < dc.size(); ++i) (*db)[broadcast ? i % cols : i] += dc[i];
    }
  });
}

template <typename Real>
Var relu(Tape<Real>& t, Var a) {
  Array<Real> out = t.value(a);
  for (auto& x : out.values()) x = x > Real(0) ? x : Real(0);
  return t.record(std::move(out), {a}, [a](Tape<Real>& tp, Var self, const Array<Real>& dc) {
    if (auto* da = tp.grad_target(a)) {
      const auto& av = tp.value(a);
      // Subgradient 0 at exactly 0.
      for (std::size_t i = 0; i < dc.size(); ++i) {
        if (av[i] > Real(0)) (*da)[i] += dc[i];
      }
    }
  });
}

namespace {

// Visits each lane along `axis`: lanes are columns for axis 0, rows for axis 1.
template <typename F>
void for_each_lane(std::size_t rows, std::size_t cols, int axis, F&& f) {
  if (axis == 1) {
    for (std::size_t r = 0; r < rows; ++r) f(r, r * cols, std::size_t{1}, cols);
  } else {
    for (std::size_t c = 0; c < cols; ++c) f(c, c, cols, rows);
  }
}

}  // namespace

template <typename Real>
Var softmax(Tape<Real>& t, Var a, int axis) {
  require_axis(axis);
  const auto& av = t.value(a);
  Array<Real> out(av.rows(), av.cols());
  for_each_lane(av.rows(), av.cols(), axis, [&](std::size_t, std::size_t start, std::size_t stride, std::size_t len) {
    Real mx = -std::numeric_limits<Real>::infinity();
    for (std::size_t i = 0; i < len; ++i) mx = std::max(mx, av[start + i * stride]);
    Real total = 0;
    for (std::size_t i = 0; i < len; ++i) {
      Real e = std::exp(av[start + i * stride] - mx);
      out[start + i * stride] = e;
      total += e;
    }
    for (std::size_t i = 0; i < len; ++i) out[start + i * stride] /= total;
  });
  return t.record(std::move(out), {a}, [a, axis](Tape<Real>& tp, Var self, const Array<Real>& dc) {
    auto* da = tp.grad_target(a);
    if (!da) return;
    const auto& y = tp.value(self);
    for_each_lane(y.rows(), y.cols(), axis, [&](std::size_t, std::size_t start, std::size_t stride, std::size_t len) {
      Real dot = 0;
      for (std::size_t i = 0; i < len; ++i) dot += dc[start + i * stride] * y[start + i * stride];
      for (std::size_t i = 0; i < len; ++i) {
        const std::size_t k = start + i * stride;
        (*da)[k] += y[k] * (dc[k] - dot);
      }
    });
  });
}

template <typename Real>
Var log(Tape<Real>& t, Var a) {
  Array<Real> out = t.value(a);
  for (auto& x : out.values()) x = std::log(x);
  return t.record(std::move(out), {a}, [a](Tape<Real>& tp, Var self, const Array<Real>& dc) {
    if (auto* da = tp.grad_target(a)) {
      const auto& av = tp.value(a);
      for (std::size_t i = 0; i < dc.size(); ++i) (*da)[i] += dc[i] / av[i];
    }
  });
}

template <typename Real>
Var exp(Tape<Real>& t, Var a) {
  Array<Real> out = t.value(a);
  for (auto& x : out.values()) x = std::exp(x);
  return t.record(std::move(out), {a}, [a](Tape<Real>& tp, Var self, const Array<Real>& dc) {
    if (auto* da = tp.grad_target(a)) {
      const auto& y = tp.value(self);
      for (std::size_t i = 0; i < dc.size(); ++i) (*da)[i] += dc[i] * y[i];
    }
  });
}

template <typename Real>
Var logsumexp(Tape<Real>& t, Var a, int axis) {
  require_axis(axis);
  const auto& av = t.value(a);
  require(!av.empty() && (axis == 0 ? av.rows() : av.cols()) > 0, "logsumexp over an empty axis");
  Array<Real> out = axis == 0 ? Array<Real>(1, av.cols()) : Array<Real>(av.rows(), 1);
  for_each_lane(av.rows(), av.cols(), axis, [&](std::size_t lane, std::size_t start, std::size_t stride, std::size_t len) {
    Real mx = -std::numeric_limits<Real>::infinity();
    for (std::size_t i = 0; i < len; ++i) mx = std::max(mx, av[start + i * stride]);
    if (!std::isfinite(mx)) {
      out[lane] = mx;
      return;
    }
    Real total = 0;
    for (std::size_t i = 0; i < len; ++i) total += std::exp(av[start + i * stride] - mx);
    out[lane] = mx + std::log(total);
  });
  return t.record(std::move(out), {a}, [a, axis](Tape<Real>& tp, Var self, const Array<Real>& dc) {
    auto* da = tp.grad_target(a);
    if (!da) return;
    const auto& x = tp.value(a);
    const auto& y = tp.value(self);
    for_each_lane(x.rows(), x.cols(), axis, [&](std::size_t lane, std::size_t start, std::size_t stride, std::size_t len) {
      if (!std::isfinite(y[lane])) return;
      for (std::size_t i = 0; i < len; ++i) {
        const std::size_t k = start + i * stride;
        (*da)[k] += dc[lane] * std::exp(x[k] - y[lane]);
      }
    });
  });
}

template <typename Real>
Var gather_rows(Tape<Real>& t, Var a, std::span<const std::size_t> rows) {
  const auto& av = t.value(a);
  require(!rows.empty(), "gather_rows needs at least one index");
  std::vector<std::size_t> index(rows.begin(), rows.end());
  const std::size_t cols = av.cols();
  Array<Real> out(index.size(), cols);
  for (std::size_t r = 0; r < index.size(); ++r) {
    require(index[r] < av.rows(), "gather_rows index out of range");
    std::copy_n(av.data() + index[r] * cols, cols, out.data() + r * cols);
  }
  return t.record(std::move(out), {a}, [a, index = std::move(index), cols](Tape<Real>& tp, Var self, const Array<Real>& dc) {
    auto* da = tp.grad_target(a);
    if (!da) return;
    for (std::size_t r = 0; r < index.size(); ++r) {
      Real* dst = da->data() + index[r] * cols;
      const Real* src = dc.data() + r * cols;
      for (std::size_t c = 0; c < cols; ++c) dst[c] += src[c];
    }
  });
}

template <typename Real>
Var sum(Tape<Real>& t, Var a, int axis) {
  require_axis(axis);
  const auto& av = t.value(a);
  Array<Real> out = axis == 0 ? Array<Real>(1, av.cols()) : Array<Real>(av.rows(), 1);
  for_each_lane(av.rows(), av.cols(), axis, [&](std::size_t lane, std::size_t start, std::size_t stride, std::size_t len) {
    Real total = 0;
    for (std::size_t i = 0; i < len; ++i) total += av[start + i * stride];
    out[lane] = total;
  });
  return t.record(std::move(out), {a}, [a, axis](Tape<Real>& tp, Var self, const Array<Real>& dc) {
    auto* da = tp.grad_target(a);
    if (!da) return;
    for_each_lane(da->rows(), da->cols(), axis, [&](std::size_t lane, std::size_t start, std::size_t stride, std::size_t len) {
      for (std::size_t i = 0; i < len; ++i) (*da)[start + i * stride] += dc[lane];
    });
  });
}

template <typename Real>
Var scale(Tape<Real>& t, Var a, Real factor) {
  Array<Real> out = t.value(a);
  for (auto& x : out.values()) x *= factor;
  return t.record(std::move(out), {a}, [a, factor](Tape<Real>& tp, Var self, const Array<Real>& dc) {
    if (auto* da = tp.grad_target(a)) {
      for (std::size_t i = 0; i < dc.size(); ++i) (*da)[i] += dc[i] * factor;
    }
  });
}

template <typename Real>
Var scale_rows(Tape<Real>& t, Var a, Var g) {
  const auto& av = t.value(a);
  const auto& gv = t.value(g);
  require(gv.cols() == 1 && gv.rows() == av.rows(),
          "scale_rows needs a rows x 1 factor, got " + shape_str(gv.shape()) + " for " + shape_str(av.shape()));
  Array<Real> out = av;
  const std::size_t cols = av.cols();
  for (std::size_t r = 0; r < av.rows(); ++r) {
    for (std::size_t c = 0; c < cols; ++c) out(r, c) *= gv[r];
  }
  return t.record(std::move(out), {a, g}, [a, g, cols](Tape<Real>& tp, Var self, const Array<Real>& dc) {
    if (auto* da = tp.grad_target(a)) {
      const auto& gv = tp.value(g);
      for (std::size_t r = 0; r < dc.rows(); ++r) {
        for (std::size_t c = 0; c < cols; ++c) (*da)(r, c) += dc(r, c) * gv[r];
      }
    }
    if (auto* dg = tp.grad_target(g)) {
      const auto& av = tp.value(a);
      for (std::size_t r = 0; r < dc.rows(); ++r) {
        Real total = 0;
        for (std::size_t c = 0; c < cols; ++c) total += dc(r, c) * av(r, c);
        (*dg)[r] += total;
      }
    }
  });
}

namespace {

double evaluate(const ScalarFn& f, const std::vector<Array<double>>& point) {
  Tape<double> tape;
  std::vector<Var> leaves;
  leaves.reserve(point.size());
  for (const auto& a : point) leaves.push_back(tape.constant(a));
  const auto& out = tape.value(f(tape, leaves));
  require(out.size() == 1, "finite_difference_check needs a scalar function");
  return out[0];
}

}  // namespace

FdResult finite_difference_check(const ScalarFn& f, const std::vector<Array<double>>& point, double eps,
                                 std::size_t max_coords_per_array) {
  std::vector<Array<double>> analytic;
  {
    Tape<double> tape;
    std::vector<Var> leaves;
    for (const auto& a : point) leaves.push_back(tape.variable(a));
    Var out = f(tape, leaves);
    tape.backward(out);
    for (Var v : leaves) analytic.push_back(tape.grad(v));
  }
  const double f0 = evaluate(f, point);
  FdResult result;
  std::vector<Array<double>> probe = point;
  for (std::size_t a = 0; a < point.size(); ++a) {
    const std::size_t total = point[a].size();
    const std::size_t stride =
        (max_coords_per_array == 0 || total <= max_coords_per_array) ? 1 : (total + max_coords_per_array - 1) / max_coords_per_array;
    for (std::size_t i = 0; i < total; i += stride) {
      const double x = point[a][i];
      auto at = [&](double delta) {
        probe[a][i] = x + delta;
        double v = evaluate(f, probe);
        probe[a][i] = x;
        return v;
      };
      // Central differences D(h) = f' + c h^2 + O(h^4) for smooth f, so the
      // Richardson residual below is O(eps^4). A kink anywhere in the stencil
      // window breaks the h^2 pattern and the coordinate is skipped.
      auto central = [&](double h) { return (at(h) - at(-h)) / (2 * h); };
      const double d_half = central(eps / 2);
      const double d_one = central(eps);
      const double d_two = central(2 * eps);
      const double residual = (d_two - d_one) - 4 * (d_one - d_half);
      if (std::abs(residual) > 1e-7 * std::max(1.0, std::abs(f0))) {
        ++result.skipped;
        continue;
      }
      // Fourth-order stencil: truncation error O(eps^4), so larger steps keep
      // rounding noise small relative to tiny gradients.
      const double numeric = (4 * d_one - d_two) / 3;
      const double exact = analytic[a][i];
      const double denom = std::max({std::abs(numeric), std::abs(exact), 1e-8});
      result.max_rel_error = std::max(result.max_rel_error, std::abs(numeric - exact) / denom);
      ++result.compared;
    }
  }
  return result;
}

#define TNPCFG_INSTANTIATE(Real)                                                        \
  template class Array<Real>;                                                           \
  template class Tape<Real>;                                                            \
  template Var matmul<Real>(Tape<Real>&, Var, Var, Trans, Trans);                       \
  template Var hadamard<Real>(Tape<Real>&, Var, Var);                                   \
  template Var add<Real>(Tape<Real>&, Var, Var);                                        \
  template Var relu<Real>(Tape<Real>&, Var);                                            \
  template Var softmax<Real>(Tape<Real>&, Var, int);                                    \
  template Var log<Real>(Tape<Real>&, Var);                                             \
  template Var exp<Real>(Tape<Real>&, Var);                                             \
  template Var logsumexp<Real>(Tape<Real>&, Var, int);                                  \
  template Var gather_rows<Real>(Tape<Real>&, Var, std::span<const std::size_t>);       \
  template Var sum<Real>(Tape<Real>&, Var, int);                                        \
  template Var scale<Real>(Tape<Real>&, Var, Real);                                     \
  template Var scale_rows<Real>(Tape<Real>&, Var, Var);

TNPCFG_INSTANTIATE(float)
TNPCFG_INSTANTIATE(double)

#undef TNPCFG_INSTANTIATE

}  // namespace tnpcfg::ad

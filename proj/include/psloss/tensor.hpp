#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "errors.hpp"

namespace psloss {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

class Tape;

/**
 * Immutable n-d tensor of doubles in row-major order, optionally attached to
 * a gradient tape. Copies are cheap (values are shared, never mutated).
 */
class Tensor {
 public:
  Tensor() : shape_{1}, values_(std::make_shared<std::vector<double>>(1, 0.0)) {}

  Tensor(Shape shape, std::vector<double> values)
      : shape_(std::move(shape)),
        values_(std::make_shared<std::vector<double>>(std::move(values))) {
    if (shape_.empty()) throw ShapeError("tensor rank must be >= 1");
    if (shape_size(shape_) != values_->size())
      throw ShapeError("shape " + shape_str(shape_) + " does not match " +
                       std::to_string(values_->size()) + " values");
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  static Tensor zeros(Shape shape) {
    std::size_t n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0));
  }

  static Tensor ones(Shape shape) { return full(std::move(shape), 1.0); }

  static Tensor full(Shape shape, double v) {
    std::size_t n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<double>(n, v));
  }

  /** Used by op implementations to build a tape-attached result. */
  static Tensor from_op(Shape shape, std::vector<double> values, Tape* tape,
                        int node) {
    Tensor t(std::move(shape), std::move(values));
    t.tape_ = tape;
    t.node_ = node;
    return t;
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_->size(); }
  const std::vector<double>& values() const { return *values_; }
  const std::shared_ptr<const std::vector<double>>& values_ptr() const {
    return values_;
  }
  double operator[](std::size_t i) const { return (*values_)[i]; }

  /** Scalar value; throws ShapeError when the tensor has more than one element. */
  double value() const {
    if (size() != 1) throw ShapeError("value() requires a single-element tensor");
    return (*values_)[0];
  }

  bool attached() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  int node() const { return node_; }

  /** Same values with no tape association. */
  Tensor detached() const {
    Tensor t = *this;
    t.tape_ = nullptr;
    t.node_ = -1;
    return t;
  }

  /** Registers this tensor as a leaf on `tape` and returns the attached view. */
  Tensor attach(Tape& tape) const;

 private:
  Shape shape_;
  std::shared_ptr<const std::vector<double>> values_;
  Tape* tape_ = nullptr;
  int node_ = -1;
};

/**
 * Reverse-mode gradient tape. Nodes are appended in creation order (which is
 * a topological order of the graph); each non-leaf node carries a closure
 * that scatters its output gradient into its inputs' buffers. A tape supports
 * any number of backward passes over the same recorded graph; buffers of the
 * nodes reachable from the loss are zeroed at the start of each pass. Not
 * thread-safe: one tape belongs to one forward/backward sequence at a time.
 */
class Tape {
 public:
  using BackFn = std::function<void(const std::vector<double>& grad_out, Tape&)>;

  /** Appends a node and returns its id. Leaves pass no inputs and no closure. */
  int record(Shape shape, std::vector<int> inputs, BackFn back) {
    for (int id : inputs) check_node(id);
    nodes_.push_back(Node{std::move(shape), std::move(inputs), std::move(back)});
    return static_cast<int>(nodes_.size()) - 1;
  }

  std::size_t node_count() const { return nodes_.size(); }

  const Shape& node_shape(int id) const {
    check_node(id);
    return nodes_[static_cast<std::size_t>(id)].shape;
  }

  /** Gradient buffer of a node; op closures accumulate into these. */
  std::vector<double>& grad_buf(int id) {
    return grads_[static_cast<std::size_t>(id)];
  }

  /**
   * Runs reverse accumulation from a scalar loss and returns the gradient of
   * the loss with respect to each requested node. Nodes not reachable from
   * the loss get zero gradients. Deterministic: repeated calls on the same
   * graph return identical values.
   *
   * @param loss scalar tensor attached to this tape
   * @param wrt  node ids to report gradients for
   */
  std::unordered_map<int, Tensor> backward(const Tensor& loss,
                                           const std::vector<int>& wrt) {
    if (!loss.attached() || loss.tape() != this)
      throw TapeError("backward: loss is not attached to this tape");
    if (loss.size() != 1) throw ShapeError("backward: loss must be scalar");
    for (int id : wrt) check_node(id);

    const int root = loss.node();
    std::vector<char> reachable(nodes_.size(), 0);
    std::vector<int> stack{root};
    reachable[static_cast<std::size_t>(root)] = 1;
    while (!stack.empty()) {
      int id = stack.back();
      stack.pop_back();
      for (int in : nodes_[static_cast<std::size_t>(id)].inputs) {
        if (!reachable[static_cast<std::size_t>(in)]) {
          reachable[static_cast<std::size_t>(in)] = 1;
          stack.push_back(in);
        }
      }
    }

    grads_.resize(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (reachable[i]) grads_[i].assign(shape_size(nodes_[i].shape), 0.0);
    }
    grads_[static_cast<std::size_t>(root)][0] = 1.0;

    for (int id = root; id >= 0; --id) {
      const auto& node = nodes_[static_cast<std::size_t>(id)];
      if (reachable[static_cast<std::size_t>(id)] && node.back)
        node.back(grads_[static_cast<std::size_t>(id)], *this);
    }

    std::unordered_map<int, Tensor> out;
    out.reserve(wrt.size());
    for (int id : wrt) {
      const auto& shape = nodes_[static_cast<std::size_t>(id)].shape;
      if (reachable[static_cast<std::size_t>(id)])
        out.emplace(id, Tensor(shape, grads_[static_cast<std::size_t>(id)]));
      else
        out.emplace(id, Tensor::zeros(shape));
    }
    return out;
  }

 private:
  struct Node {
    Shape shape;
    std::vector<int> inputs;
    BackFn back;
  };

  void check_node(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
      throw TapeError("unknown node id " + std::to_string(id));
  }

  std::vector<Node> nodes_;
  std::vector<std::vector<double>> grads_;
};

inline Tensor Tensor::attach(Tape& tape) const {
  Tensor t = *this;
  t.tape_ = &tape;
  t.node_ = tape.record(shape_, {}, nullptr);
  return t;
}

namespace detail {

/** Broadcast plan: output shape plus per-input strides (0 on expanded dims). */
struct Broadcast {
  Shape out;
  std::vector<std::size_t> stride_a;
  std::vector<std::size_t> stride_b;

  static Broadcast make(const Shape& a, const Shape& b) {
    const std::size_t rank = std::max(a.size(), b.size());
    Shape pa(rank, 1), pb(rank, 1);
    std::copy(a.begin(), a.end(), pa.begin() + (rank - a.size()));
    std::copy(b.begin(), b.end(), pb.begin() + (rank - b.size()));

    Broadcast bc;
    bc.out.resize(rank);
    for (std::size_t d = 0; d < rank; ++d) {
      if (pa[d] != pb[d] && pa[d] != 1 && pb[d] != 1)
        throw ShapeError("cannot broadcast " + shape_str(a) + " with " +
                         shape_str(b));
      bc.out[d] = std::max(pa[d], pb[d]);
    }
    bc.stride_a = strides_for(pa, bc.out);
    bc.stride_b = strides_for(pb, bc.out);
    return bc;
  }

  bool trivial() const { return stride_a == stride_b; }

 private:
  static std::vector<std::size_t> strides_for(const Shape& padded,
                                              const Shape& out) {
    std::vector<std::size_t> strides(out.size(), 0);
    std::size_t acc = 1;
    for (std::size_t d = out.size(); d-- > 0;) {
      strides[d] = (padded[d] == 1 && out[d] != 1) ? 0 : acc;
      acc *= padded[d];
    }
    return strides;
  }
};

/** Calls f(out_index, a_index, b_index) for every output element. */
template <class F>
void broadcast_for_each(const Broadcast& bc, F&& f) {
  const std::size_t n = shape_size(bc.out);
  const std::size_t rank = bc.out.size();
  if (bc.trivial()) {
    for (std::size_t i = 0; i < n; ++i) f(i, i, i);
    return;
  }
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t io = 0; io < n; ++io) {
    f(io, ia, ib);
    for (std::size_t d = rank; d-- > 0;) {
      if (++idx[d] < bc.out[d]) {
        ia += bc.stride_a[d];
        ib += bc.stride_b[d];
        break;
      }
      idx[d] = 0;
      ia -= bc.stride_a[d] * (bc.out[d] - 1);
      ib -= bc.stride_b[d] * (bc.out[d] - 1);
    }
  }
}

/**
 * Elementwise binary op with broadcasting. `f` computes the value, `da`/`db`
 * the partials given (a, b, out). A backward closure is recorded only when an
 * input is attached.
 */
template <class F, class Da, class Db>
Tensor binary_op(const Tensor& a, const Tensor& b, F f, Da da, Db db) {
  if (a.attached() && b.attached() && a.tape() != b.tape())
    throw TapeError("operands recorded on different tapes");
  Tape* tape = a.attached() ? a.tape() : b.tape();

  Broadcast bc = Broadcast::make(a.shape(), b.shape());
  std::vector<double> out(shape_size(bc.out));
  const auto& av = a.values();
  const auto& bv = b.values();
  broadcast_for_each(bc, [&](std::size_t io, std::size_t ia, std::size_t ib) {
    out[io] = f(av[ia], bv[ib]);
  });

  int node = -1;
  if (tape) {
    auto ap = a.values_ptr();
    auto bp = b.values_ptr();
    auto op = std::make_shared<std::vector<double>>(out);
    const int na = a.attached() ? a.node() : -1;
    const int nb = b.attached() ? b.node() : -1;
    std::vector<int> inputs;
    if (na >= 0) inputs.push_back(na);
    if (nb >= 0) inputs.push_back(nb);
    node = tape->record(
        Shape(bc.out), std::move(inputs),
        [bc, ap, bp, op, na, nb, da, db](const std::vector<double>& g, Tape& t) {
          double* ga = na >= 0 ? t.grad_buf(na).data() : nullptr;
          double* gb = nb >= 0 ? t.grad_buf(nb).data() : nullptr;
          const auto& av2 = *ap;
          const auto& bv2 = *bp;
          const auto& ov2 = *op;
          broadcast_for_each(
              bc, [&](std::size_t io, std::size_t ia, std::size_t ib) {
                if (ga) ga[ia] += g[io] * da(av2[ia], bv2[ib], ov2[io]);
                if (gb) gb[ib] += g[io] * db(av2[ia], bv2[ib], ov2[io]);
              });
        });
  }
  return Tensor::from_op(std::move(bc.out), std::move(out), tape, node);
}

/** Elementwise unary op; `dy` gives the partial from (x, out). */
template <class F, class Dy>
Tensor unary_op(const Tensor& a, F f, Dy dy) {
  const auto& av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);

  int node = -1;
  Tape* tape = a.tape();
  if (a.attached()) {
    auto ap = a.values_ptr();
    auto op = std::make_shared<std::vector<double>>(out);
    const int na = a.node();
    node = tape->record(a.shape(), {na},
                        [ap, op, na, dy](const std::vector<double>& g, Tape& t) {
                          double* ga = t.grad_buf(na).data();
                          const auto& av2 = *ap;
                          const auto& ov2 = *op;
                          for (std::size_t i = 0; i < g.size(); ++i)
                            ga[i] += g[i] * dy(av2[i], ov2[i]);
                        });
  }
  return Tensor::from_op(a.shape(), std::move(out), tape, node);
}

/** Splits a shape into (outer, axis, inner) extents around `axis`. */
inline void axis_split(const Shape& shape, std::size_t axis, std::size_t& outer,
                       std::size_t& k, std::size_t& inner) {
  if (axis >= shape.size())
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " +
                     shape_str(shape));
  outer = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= shape[d];
  k = shape[axis];
  inner = 1;
  for (std::size_t d = axis + 1; d < shape.size(); ++d) inner *= shape[d];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      a, b, [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; },
      [](double, double, double) { return 1.0; });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      a, b, [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; },
      [](double, double, double) { return -1.0; });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      a, b, [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; },
      [](double x, double, double) { return x; });
}

/** Elementwise division; any zero divisor raises DomainError. */
inline Tensor div(const Tensor& a, const Tensor& b) {
  for (double y : b.values())
    if (y == 0.0) throw DomainError("division by zero");
  return detail::binary_op(
      a, b, [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double, double y, double out) { return -out / y; });
}

inline Tensor neg(const Tensor& a) {
  return detail::unary_op(
      a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

/** Absolute value with subgradient 0 at x == 0. */
inline Tensor abs(const Tensor& a) {
  return detail::unary_op(
      a, [](double x) { return std::fabs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

/** Natural log; inputs must be strictly positive (guard with an epsilon). */
inline Tensor log(const Tensor& a) {
  for (double x : a.values())
    if (!(x > 0.0)) throw DomainError("log of non-positive value");
  return detail::unary_op(
      a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

inline Tensor exp(const Tensor& a) {
  return detail::unary_op(
      a, [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

/**
 * Square root; negative input raises DomainError. The derivative at exactly
 * 0 is taken as 0 (subgradient convention) so downstream epsilon-guarded
 * expressions stay finite.
 */
inline Tensor sqrt(const Tensor& a) {
  for (double x : a.values())
    if (x < 0.0) throw DomainError("sqrt of negative value");
  return detail::unary_op(
      a, [](double x) { return std::sqrt(x); },
      [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

inline Tensor square(const Tensor& a) {
  return detail::unary_op(
      a, [](double x) { return x * x; },
      [](double x, double) { return 2.0 * x; });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

/** Sum over all elements, producing a scalar. */
inline Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double x : a.values()) acc += x;

  int node = -1;
  Tape* tape = a.tape();
  if (a.attached()) {
    const int na = a.node();
    const std::size_t n = a.size();
    node = tape->record(Shape{1}, {na},
                        [na, n](const std::vector<double>& g, Tape& t) {
                          double* ga = t.grad_buf(na).data();
                          for (std::size_t i = 0; i < n; ++i) ga[i] += g[0];
                        });
  }
  return Tensor::from_op({1}, {acc}, tape, node);
}

/** Sum along one axis. */
inline Tensor sum(const Tensor& a, std::size_t axis, bool keepdim = false) {
  std::size_t outer, k, inner;
  detail::axis_split(a.shape(), axis, outer, k, inner);

  Shape out_shape = a.shape();
  if (keepdim)
    out_shape[axis] = 1;
  else
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  if (out_shape.empty()) out_shape = {1};

  std::vector<double> out(outer * inner, 0.0);
  const auto& av = a.values();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t j = 0; j < k; ++j) {
      const double* src = av.data() + (o * k + j) * inner;
      double* dst = out.data() + o * inner;
      for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
    }

  int node = -1;
  Tape* tape = a.tape();
  if (a.attached()) {
    const int na = a.node();
    node = tape->record(
        out_shape, {na},
        [na, outer, k, inner](const std::vector<double>& g, Tape& t) {
          double* ga = t.grad_buf(na).data();
          for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t j = 0; j < k; ++j) {
              double* dst = ga + (o * k + j) * inner;
              const double* src = g.data() + o * inner;
              for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
            }
        });
  }
  return Tensor::from_op(std::move(out_shape), std::move(out), tape, node);
}

/** Mean over all elements, producing a scalar. */
inline Tensor mean(const Tensor& a) {
  const std::size_t n = a.size();
  double acc = 0.0;
  for (double x : a.values()) acc += x;
  acc /= static_cast<double>(n);

  int node = -1;
  Tape* tape = a.tape();
  if (a.attached()) {
    const int na = a.node();
    node = tape->record(Shape{1}, {na},
                        [na, n](const std::vector<double>& g, Tape& t) {
                          double* ga = t.grad_buf(na).data();
                          const double gi = g[0] / static_cast<double>(n);
                          for (std::size_t i = 0; i < n; ++i) ga[i] += gi;
                        });
  }
  return Tensor::from_op({1}, {acc}, tape, node);
}

/** Mean along one axis. */
inline Tensor mean(const Tensor& a, std::size_t axis, bool keepdim = false) {
  std::size_t outer, k, inner;
  detail::axis_split(a.shape(), axis, outer, k, inner);
  Tensor s = sum(a, axis, keepdim);
  return mul(s, Tensor::scalar(1.0 / static_cast<double>(k)));
}

// ---------------------------------------------------------------------------
// Matrix multiply
// ---------------------------------------------------------------------------

namespace detail {

/** C[m,n] += A[m,k] * B[k,n] */
inline void gemm_nn(const double* A, const double* B, double* C, std::size_t m,
                    std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = C + i * n;
    for (std::size_t l = 0; l < k; ++l) {
      const double ail = A[i * k + l];
      const double* brow = B + l * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += ail * brow[j];
    }
  }
}

/** C[m,k] += G[m,n] * B[k,n]^T */
inline void gemm_nt(const double* G, const double* B, double* C, std::size_t m,
                    std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = G + i * n;
    for (std::size_t l = 0; l < k; ++l) {
      const double* brow = B + l * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
      C[i * k + l] += acc;
    }
  }
}

/** C[k,n] += A[m,k]^T * G[m,n] */
inline void gemm_tn(const double* A, const double* G, double* C, std::size_t m,
                    std::size_t k, std::size_t n) {
  for (std::size_t l = 0; l < m; ++l) {
    const double* arow = A + l * k;
    const double* grow = G + l * n;
    for (std::size_t i = 0; i < k; ++i) {
      const double ali = arow[i];
      double* crow = C + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += ali * grow[j];
    }
  }
}

}  // namespace detail

/** 2-d matrix product (m,k)x(k,n) -> (m,n). */
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw ShapeError("matmul requires rank-2 tensors, got " +
                     shape_str(a.shape()) + " and " + shape_str(b.shape()));
  if (a.shape()[1] != b.shape()[0])
    throw ShapeError("matmul inner dimensions differ: " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  if (a.attached() && b.attached() && a.tape() != b.tape())
    throw TapeError("operands recorded on different tapes");

  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  std::vector<double> out(m * n, 0.0);
  detail::gemm_nn(a.values().data(), b.values().data(), out.data(), m, k, n);

  Tape* tape = a.attached() ? a.tape() : b.tape();
  int node = -1;
  if (tape) {
    auto ap = a.values_ptr();
    auto bp = b.values_ptr();
    const int na = a.attached() ? a.node() : -1;
    const int nb = b.attached() ? b.node() : -1;
    std::vector<int> inputs;
    if (na >= 0) inputs.push_back(na);
    if (nb >= 0) inputs.push_back(nb);
    node = tape->record(Shape{m, n}, std::move(inputs),
                        [ap, bp, na, nb, m, k, n](const std::vector<double>& g,
                                                  Tape& t) {
                          if (na >= 0)
                            detail::gemm_nt(g.data(), bp->data(),
                                            t.grad_buf(na).data(), m, n, k);
                          if (nb >= 0)
                            detail::gemm_tn(ap->data(), g.data(),
                                            t.grad_buf(nb).data(), m, k, n);
                        });
  }
  return Tensor::from_op({m, n}, std::move(out), tape, node);
}

// ---------------------------------------------------------------------------
// Softmax
// ---------------------------------------------------------------------------

/**
 * Numerically stable softmax along `axis` (max-subtraction inside the op).
 * Non-finite input raises DomainError.
 */
inline Tensor softmax(const Tensor& a, std::size_t axis) {
  for (double x : a.values())
    if (!std::isfinite(x)) throw DomainError("softmax of non-finite value");
  std::size_t outer, k, inner;
  detail::axis_split(a.shape(), axis, outer, k, inner);

  const auto& av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * k * inner + i;
      double mx = av[base];
      for (std::size_t j = 1; j < k; ++j)
        mx = std::max(mx, av[base + j * inner]);
      double denom = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        const double e = std::exp(av[base + j * inner] - mx);
        out[base + j * inner] = e;
        denom += e;
      }
      for (std::size_t j = 0; j < k; ++j) out[base + j * inner] /= denom;
    }

  int node = -1;
  Tape* tape = a.tape();
  if (a.attached()) {
    auto op = std::make_shared<std::vector<double>>(out);
    const int na = a.node();
    node = tape->record(
        a.shape(), {na},
        [op, na, outer, k, inner](const std::vector<double>& g, Tape& t) {
          double* ga = t.grad_buf(na).data();
          const auto& y = *op;
          for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t i = 0; i < inner; ++i) {
              const std::size_t base = o * k * inner + i;
              double dot = 0.0;
              for (std::size_t j = 0; j < k; ++j)
                dot += g[base + j * inner] * y[base + j * inner];
              for (std::size_t j = 0; j < k; ++j) {
                const std::size_t idx = base + j * inner;
                ga[idx] += y[idx] * (g[idx] - dot);
              }
            }
        });
  }
  return Tensor::from_op(a.shape(), std::move(out), tape, node);
}

/** Log of softmax along `axis`, computed in log space for stability. */
inline Tensor log_softmax(const Tensor& a, std::size_t axis) {
  for (double x : a.values())
    if (!std::isfinite(x)) throw DomainError("log_softmax of non-finite value");
  std::size_t outer, k, inner;
  detail::axis_split(a.shape(), axis, outer, k, inner);

  const auto& av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * k * inner + i;
      double mx = av[base];
      for (std::size_t j = 1; j < k; ++j)
        mx = std::max(mx, av[base + j * inner]);
      double denom = 0.0;
      for (std::size_t j = 0; j < k; ++j)
        denom += std::exp(av[base + j * inner] - mx);
      const double lse = mx + std::log(denom);
      for (std::size_t j = 0; j < k; ++j)
        out[base + j * inner] = av[base + j * inner] - lse;
    }

  int node = -1;
  Tape* tape = a.tape();
  if (a.attached()) {
    auto op = std::make_shared<std::vector<double>>(out);
    const int na = a.node();
    node = tape->record(
        a.shape(), {na},
        [op, na, outer, k, inner](const std::vector<double>& g, Tape& t) {
          double* ga = t.grad_buf(na).data();
          const auto& y = *op;
          for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t i = 0; i < inner; ++i) {
              const std::size_t base = o * k * inner + i;
              double gsum = 0.0;
              for (std::size_t j = 0; j < k; ++j) gsum += g[base + j * inner];
              for (std::size_t j = 0; j < k; ++j) {
                const std::size_t idx = base + j * inner;
                ga[idx] += g[idx] - std::exp(y[idx]) * gsum;
              }
            }
        });
  }
  return Tensor::from_op(a.shape(), std::move(out), tape, node);
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

/** View with a new shape of the same total size; gradient passes through. */
inline Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size())
    throw ShapeError("cannot reshape " + shape_str(a.shape()) + " to " +
                     shape_str(shape));
  int node = -1;
  Tape* tape = a.tape();
  if (a.attached()) {
    const int na = a.node();
    node = tape->record(shape, {na},
                        [na](const std::vector<double>& g, Tape& t) {
                          double* ga = t.grad_buf(na).data();
                          for (std::size_t i = 0; i < g.size(); ++i)
                            ga[i] += g[i];
                        });
  }
  return Tensor::from_op(std::move(shape), std::vector<double>(a.values()),
                         tape, node);
}

// ---------------------------------------------------------------------------
// Operator sugar
// ---------------------------------------------------------------------------

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

inline Tensor operator+(const Tensor& a, double s) {
  return add(a, Tensor::scalar(s));
}
inline Tensor operator+(double s, const Tensor& a) {
  return add(Tensor::scalar(s), a);
}
inline Tensor operator-(const Tensor& a, double s) {
  return sub(a, Tensor::scalar(s));
}
inline Tensor operator-(double s, const Tensor& a) {
  return sub(Tensor::scalar(s), a);
}
inline Tensor operator*(const Tensor& a, double s) {
  return mul(a, Tensor::scalar(s));
}
inline Tensor operator*(double s, const Tensor& a) {
  return mul(Tensor::scalar(s), a);
}
inline Tensor operator/(const Tensor& a, double s) {
  return div(a, Tensor::scalar(s));
}

}  // namespace psloss

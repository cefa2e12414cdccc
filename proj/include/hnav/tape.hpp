#pragma once

#include <cmath>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "hnav/errors.hpp"
#include "hnav/kernels.hpp"

namespace hnav {

// Reverse-mode tape over row-major 2-D arrays. One tape records one forward
// pass; backward() walks the nodes in reverse creation order, which is a
// reverse topological order by construction (an op only consumes existing
// ids). Templated so the same graph runs in float at training time and in
// double for finite-difference checks.
template <typename T>
class Tape {
 public:
  using Id = int;

  // Leaf holding trainable values; gradient is collected after backward().
  Id leaf(int rows, int cols, std::span<const T> data) {
    return make_leaf(rows, cols, data, true);
  }
  // Leaf that never receives gradient (inputs, targets, masks).
  Id constant(int rows, int cols, std::span<const T> data) {
    return make_leaf(rows, cols, data, false);
  }

  // y = x * W + b, with x [m x k], W [k x n], b [1 x n] broadcast over rows.
  Id linear(Id x, Id w, Id b) {
    check_cols(w, node(x).cols, "linear: W rows");
    check_shape(b, 1, node(w).cols, "linear: bias");
    Id y = make(Op::Linear, node(x).rows, node(w).cols, x, w, b);
    auto& n = node(y);
    kernels::gemm(val(x), val(w), n.val.data(), n.rows, node(x).cols, n.cols,
                  false);
    kernels::add_bias(n.val.data(), val(b), n.val.data(), n.rows, n.cols);
    return finish(y, "linear");
  }

  Id matmul(Id x, Id w) {
    check_cols(w, node(x).cols, "matmul: inner dim");
    Id y = make(Op::Matmul, node(x).rows, node(w).cols, x, w);
    auto& n = node(y);
    kernels::gemm(val(x), val(w), n.val.data(), n.rows, node(x).cols, n.cols,
                  false);
    return finish(y, "matmul");
  }

  // Per-sample weights: x [B x k], w [B x (k*n)] -> y [B x n].
  Id bmm(Id x, Id w, int k, int n) {
    const auto& nx = node(x);
    if (nx.cols != k || node(w).cols != k * n || node(w).rows != nx.rows)
      throw ShapeMismatch("bmm: inconsistent shapes");
    Id y = make(Op::Bmm, nx.rows, n, x, w);
    node(y).aux0 = k;
    node(y).aux1 = n;
    kernels::bmm(val(x), val(w), node(y).val.data(), nx.rows, k, n, false);
    return finish(y, "bmm");
  }

  Id add(Id a, Id b) {
    check_same(a, b, "add");
    Id y = make(Op::Add, node(a).rows, node(a).cols, a, b);
    auto& n = node(y);
    const T* pa = val(a);
    const T* pb = val(b);
    for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] = pa[i] + pb[i];
    return finish(y, "add");
  }

  Id sub(Id a, Id b) {
    check_same(a, b, "sub");
    Id y = make(Op::Sub, node(a).rows, node(a).cols, a, b);
    auto& n = node(y);
    const T* pa = val(a);
    const T* pb = val(b);
    for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] = pa[i] - pb[i];
    return finish(y, "sub");
  }

  Id mul(Id a, Id b) {
    check_same(a, b, "mul");
    Id y = make(Op::Mul, node(a).rows, node(a).cols, a, b);
    auto& n = node(y);
    const T* pa = val(a);
    const T* pb = val(b);
    for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] = pa[i] * pb[i];
    return finish(y, "mul");
  }

  // y = alpha * x + beta
  Id affine(Id x, T alpha, T beta) {
    Id y = make(Op::Affine, node(x).rows, node(x).cols, x);
    node(y).aux_a = alpha;
    node(y).aux_b = beta;
    auto& n = node(y);
    const T* px = val(x);
    for (std::size_t i = 0; i < n.val.size(); ++i)
      n.val[i] = alpha * px[i] + beta;
    return finish(y, "affine");
  }

  Id elu(Id x) {
    Id y = make(Op::Elu, node(x).rows, node(x).cols, x);
    auto& n = node(y);
    const T* px = val(x);
    for (std::size_t i = 0; i < n.val.size(); ++i)
      n.val[i] = px[i] > T(0) ? px[i] : std::expm1(px[i]);
    return finish(y, "elu");
  }

  Id tanh(Id x) {
    Id y = make(Op::Tanh, node(x).rows, node(x).cols, x);
    auto& n = node(y);
    const T* px = val(x);
    for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] = std::tanh(px[i]);
    return finish(y, "tanh");
  }

  Id sigmoid(Id x) {
    Id y = make(Op::Sigmoid, node(x).rows, node(x).cols, x);
    auto& n = node(y);
    const T* px = val(x);
    for (std::size_t i = 0; i < n.val.size(); ++i) {
      T v = px[i];
      n.val[i] = v >= T(0) ? T(1) / (T(1) + std::exp(-v))
                           : std::exp(v) / (T(1) + std::exp(v));
    }
    return finish(y, "sigmoid");
  }

  Id slice_cols(Id x, int c0, int c1) {
    const auto& nx = node(x);
    if (c0 < 0 || c1 > nx.cols || c0 >= c1)
      throw ShapeMismatch("slice_cols: bad range");
    Id y = make(Op::SliceCols, nx.rows, c1 - c0, x);
    node(y).aux0 = c0;
    auto& n = node(y);
    const T* px = val(x);
    for (int i = 0; i < n.rows; ++i)
      std::memcpy(n.val.data() + std::size_t(i) * n.cols,
                  px + std::size_t(i) * nx.cols + c0, sizeof(T) * n.cols);
    return finish(y, "slice_cols");
  }

  Id concat_cols(Id a, Id b) {
    const auto& na = node(a);
    const auto& nb = node(b);
    if (na.rows != nb.rows) throw ShapeMismatch("concat_cols: row mismatch");
    Id y = make(Op::ConcatCols, na.rows, na.cols + nb.cols, a, b);
    auto& n = node(y);
    const T* pa = val(a);
    const T* pb = val(b);
    for (int i = 0; i < n.rows; ++i) {
      std::memcpy(n.val.data() + std::size_t(i) * n.cols,
                  pa + std::size_t(i) * na.cols, sizeof(T) * na.cols);
      std::memcpy(n.val.data() + std::size_t(i) * n.cols + na.cols,
                  pb + std::size_t(i) * nb.cols, sizeof(T) * nb.cols);
    }
    return finish(y, "concat_cols");
  }

  // Row-wise rescale to infinity-norm at most 1: y = x / max(1, max_j |x_j|).
  Id row_unit_maxabs(Id x) {
    Id y = make(Op::RowUnitMaxAbs, node(x).rows, node(x).cols, x);
    auto& n = node(y);
    const T* px = val(x);
    for (int i = 0; i < n.rows; ++i) {
      const T* row = px + std::size_t(i) * n.cols;
      T m = T(0);
      for (int j = 0; j < n.cols; ++j) m = std::max(m, std::abs(row[j]));
      T s = m > T(1) ? m : T(1);
      for (int j = 0; j < n.cols; ++j)
        n.val[std::size_t(i) * n.cols + j] = row[j] / s;
    }
    return finish(y, "row_unit_maxabs");
  }

  Id rowsum(Id x) {
    Id y = make(Op::RowSum, node(x).rows, 1, x);
    auto& n = node(y);
    const T* px = val(x);
    for (int i = 0; i < n.rows; ++i) {
      T acc = T(0);
      for (int j = 0; j < node(x).cols; ++j)
        acc += px[std::size_t(i) * node(x).cols + j];
      n.val[i] = acc;
    }
    return finish(y, "rowsum");
  }

  // (1/m) * sum_i w_i * mean_j (pred_ij - target_ij)^2. Scalar output.
  // target and row_weight must be constants (no gradient flows into them).
  Id weighted_mse(Id pred, Id target, Id row_weight) {
    check_same(pred, target, "weighted_mse");
    check_shape(row_weight, node(pred).rows, 1, "weighted_mse: weights");
    Id y = make(Op::WeightedMse, 1, 1, pred, target, row_weight);
    auto& n = node(y);
    const auto& np = node(pred);
    const T* pp = val(pred);
    const T* pt = val(target);
    const T* pw = val(row_weight);
    T acc = T(0);
    for (int i = 0; i < np.rows; ++i) {
      T rowacc = T(0);
      for (int j = 0; j < np.cols; ++j) {
        T d = pp[std::size_t(i) * np.cols + j] -
              pt[std::size_t(i) * np.cols + j];
        rowacc += d * d;
      }
      acc += pw[i] * rowacc / T(np.cols);
    }
    n.val[0] = acc / T(np.rows);
    return finish(y, "weighted_mse");
  }

  // (1/m) * sum_i w_i * CE(softmax(logits_i), target_i), softmax with
  // max-subtraction. target rows are probability vectors; constants only.
  Id softmax_cross_entropy(Id logits, Id target, Id row_weight) {
    check_same(logits, target, "softmax_cross_entropy");
    check_shape(row_weight, node(logits).rows, 1, "softmax_ce: weights");
    Id y = make(Op::SoftmaxCe, 1, 1, logits, target, row_weight);
    auto& n = node(y);
    const auto& nl = node(logits);
    // Cache softmax rows for backward.
    n.cache.resize(nl.val.size());
    const T* pl = val(logits);
    const T* pt = val(target);
    const T* pw = val(row_weight);
    T acc = T(0);
    for (int i = 0; i < nl.rows; ++i) {
      const T* row = pl + std::size_t(i) * nl.cols;
      T mx = row[0];
      for (int j = 1; j < nl.cols; ++j) mx = std::max(mx, row[j]);
      T z = T(0);
      for (int j = 0; j < nl.cols; ++j) z += std::exp(row[j] - mx);
      T lse = std::log(z) + mx;
      T ce = T(0);
      for (int j = 0; j < nl.cols; ++j) {
        n.cache[std::size_t(i) * nl.cols + j] = std::exp(row[j] - mx) / z;
        ce += pt[std::size_t(i) * nl.cols + j] * (lse - row[j]);
      }
      acc += pw[i] * ce;
    }
    n.val[0] = acc / T(nl.rows);
    return finish(y, "softmax_cross_entropy");
  }

  // Runs reverse-mode accumulation from a scalar loss. Returns ids of
  // gradient-requiring leaves the loss does not reach (their gradient stays
  // zero); a nonempty return is the DisconnectedGraph report.
  std::vector<Id> backward(Id loss) {
    auto& nl = node(loss);
    if (nl.rows != 1 || nl.cols != 1)
      throw ShapeMismatch("backward: loss must be scalar");
    ensure_grad(loss);
    nl.grad[0] = T(1);
    for (Id id = loss; id >= 0; --id) {
      Node& n = node(id);
      if (n.grad.empty()) continue;
      backprop(n);
    }
    std::vector<Id> disconnected;
    for (Id id = 0; id < Id(nodes_.size()); ++id) {
      Node& n = node(id);
      if (n.op == Op::Leaf && n.requires_grad && n.grad.empty())
        disconnected.push_back(id);
    }
    return disconnected;
  }

  std::span<const T> value(Id id) const {
    return {nodes_[std::size_t(id)].val.data(),
            nodes_[std::size_t(id)].val.size()};
  }
  // Gradient of a leaf; zero-filled if the loss never reached it.
  std::span<const T> gradient(Id id) {
    ensure_grad(id);
    return {nodes_[std::size_t(id)].grad.data(),
            nodes_[std::size_t(id)].grad.size()};
  }
  int rows(Id id) const { return nodes_[std::size_t(id)].rows; }
  int cols(Id id) const { return nodes_[std::size_t(id)].cols; }
  std::size_t node_count() const { return nodes_.size(); }

 private:
  enum class Op {
    Leaf,
    Linear,
    Matmul,
    Bmm,
    Add,
    Sub,
    Mul,
    Affine,
    Elu,
    Tanh,
    Sigmoid,
    SliceCols,
    ConcatCols,
    RowUnitMaxAbs,
    RowSum,
    WeightedMse,
    SoftmaxCe,
  };

  struct Node {
    Op op;
    int rows = 0, cols = 0;
    Id in0 = -1, in1 = -1, in2 = -1;
    int aux0 = 0, aux1 = 0;
    T aux_a = T(0), aux_b = T(0);
    bool requires_grad = false;
    std::vector<T> val;
    std::vector<T> grad;   // lazily allocated; nonempty == reached
    std::vector<T> cache;  // op-specific forward byproducts
  };

  std::vector<Node> nodes_;

  Node& node(Id id) { return nodes_[std::size_t(id)]; }
  const Node& node(Id id) const { return nodes_[std::size_t(id)]; }
  const T* val(Id id) const { return nodes_[std::size_t(id)].val.data(); }

  Id make_leaf(int rows, int cols, std::span<const T> data, bool rg) {
    if (std::size_t(rows) * std::size_t(cols) != data.size())
      throw ShapeMismatch("leaf: data size != rows*cols");
    Node n;
    n.op = Op::Leaf;
    n.rows = rows;
    n.cols = cols;
    n.requires_grad = rg;
    n.val.assign(data.begin(), data.end());
    nodes_.push_back(std::move(n));
    return Id(nodes_.size()) - 1;
  }

  Id make(Op op, int rows, int cols, Id a, Id b = -1, Id c = -1) {
    Node n;
    n.op = op;
    n.rows = rows;
    n.cols = cols;
    n.in0 = a;
    n.in1 = b;
    n.in2 = c;
    n.val.resize(std::size_t(rows) * cols);
    nodes_.push_back(std::move(n));
    return Id(nodes_.size()) - 1;
  }

  Id finish(Id id, const char* opname) {
    for (T v : node(id).val)
      if (!std::isfinite(double(v)))
        throw NonFiniteValue(std::string("non-finite output of ") + opname);
    return id;
  }

  void ensure_grad(Id id) {
    Node& n = node(id);
    if (n.grad.empty()) n.grad.assign(n.val.size(), T(0));
  }

  // Returns the grad buffer of input `id` if it should accumulate, else null.
  T* grad_sink(Id id) {
    if (id < 0) return nullptr;
    Node& n = node(id);
    if (n.op == Op::Leaf && !n.requires_grad) return nullptr;
    ensure_grad(id);
    return n.grad.data();
  }

  void backprop(Node& n) {
    const T* g = n.grad.data();
    switch (n.op) {
      case Op::Leaf:
        break;
      case Op::Linear:
      case Op::Matmul: {
        const Node& nx = node(n.in0);
        const Node& nw = node(n.in1);
        if (T* dx = grad_sink(n.in0))
          kernels::gemm_nt(g, nw.val.data(), dx, n.rows, n.cols, nx.cols,
                           true);
        if (T* dw = grad_sink(n.in1))
          kernels::gemm_tn(nx.val.data(), g, dw, n.rows, nx.cols, n.cols,
                           true);
        if (n.op == Op::Linear)
          if (T* db = grad_sink(n.in2))
            kernels::bias_grad(g, db, n.rows, n.cols, true);
        break;
      }
      case Op::Bmm: {
        const Node& nx = node(n.in0);
        const Node& nw = node(n.in1);
        if (T* dx = grad_sink(n.in0))
          kernels::bmm_grad_x(g, nw.val.data(), dx, n.rows, n.aux0, n.aux1,
                              true);
        if (T* dw = grad_sink(n.in1))
          kernels::bmm_grad_w(nx.val.data(), g, dw, n.rows, n.aux0, n.aux1,
                              true);
        break;
      }
      case Op::Add: {
        if (T* da = grad_sink(n.in0))
          for (std::size_t i = 0; i < n.val.size(); ++i) da[i] += g[i];
        if (T* db = grad_sink(n.in1))
          for (std::size_t i = 0; i < n.val.size(); ++i) db[i] += g[i];
        break;
      }
      case Op::Sub: {
        if (T* da = grad_sink(n.in0))
          for (std::size_t i = 0; i < n.val.size(); ++i) da[i] += g[i];
        if (T* db = grad_sink(n.in1))
          for (std::size_t i = 0; i < n.val.size(); ++i) db[i] -= g[i];
        break;
      }
      case Op::Mul: {
        const T* pa = val(n.in0);
        const T* pb = val(n.in1);
        if (T* da = grad_sink(n.in0))
          for (std::size_t i = 0; i < n.val.size(); ++i) da[i] += g[i] * pb[i];
        if (T* db = grad_sink(n.in1))
          for (std::size_t i = 0; i < n.val.size(); ++i) db[i] += g[i] * pa[i];
        break;
      }
      case Op::Affine: {
        if (T* dx = grad_sink(n.in0))
          for (std::size_t i = 0; i < n.val.size(); ++i)
            dx[i] += n.aux_a * g[i];
        break;
      }
      case Op::Elu: {
        const T* px = val(n.in0);
        if (T* dx = grad_sink(n.in0))
          for (std::size_t i = 0; i < n.val.size(); ++i)
            dx[i] += g[i] * (px[i] > T(0) ? T(1) : n.val[i] + T(1));
        break;
      }
      case Op::Tanh: {
        if (T* dx = grad_sink(n.in0))
          for (std::size_t i = 0; i < n.val.size(); ++i)
            dx[i] += g[i] * (T(1) - n.val[i] * n.val[i]);
        break;
      }
      case Op::Sigmoid: {
        if (T* dx = grad_sink(n.in0))
          for (std::size_t i = 0; i < n.val.size(); ++i)
            dx[i] += g[i] * n.val[i] * (T(1) - n.val[i]);
        break;
      }
      case Op::SliceCols: {
        const Node& nx = node(n.in0);
        if (T* dx = grad_sink(n.in0))
          for (int i = 0; i < n.rows; ++i)
            for (int j = 0; j < n.cols; ++j)
              dx[std::size_t(i) * nx.cols + n.aux0 + j] +=
                  g[std::size_t(i) * n.cols + j];
        break;
      }
      case Op::ConcatCols: {
        const Node& na = node(n.in0);
        const Node& nb = node(n.in1);
        if (T* da = grad_sink(n.in0))
          for (int i = 0; i < n.rows; ++i)
            for (int j = 0; j < na.cols; ++j)
              da[std::size_t(i) * na.cols + j] +=
                  g[std::size_t(i) * n.cols + j];
        if (T* db = grad_sink(n.in1))
          for (int i = 0; i < n.rows; ++i)
            for (int j = 0; j < nb.cols; ++j)
              db[std::size_t(i) * nb.cols + j] +=
                  g[std::size_t(i) * n.cols + na.cols + j];
        break;
      }
      case Op::RowUnitMaxAbs: {
        const Node& nx = node(n.in0);
        T* dx = grad_sink(n.in0);
        if (!dx) break;
        const T* px = nx.val.data();
        for (int i = 0; i < n.rows; ++i) {
          const T* row = px + std::size_t(i) * n.cols;
          T m = T(0);
          int jmax = 0;
          for (int j = 0; j < n.cols; ++j) {
            T a = std::abs(row[j]);
            if (a > m) {
              m = a;
              jmax = j;
            }
          }
          const T* gr = g + std::size_t(i) * n.cols;
          T* dr = dx + std::size_t(i) * n.cols;
          if (m <= T(1)) {
            for (int j = 0; j < n.cols; ++j) dr[j] += gr[j];
          } else {
            T dot = T(0);
            for (int j = 0; j < n.cols; ++j) dot += gr[j] * row[j];
            for (int j = 0; j < n.cols; ++j) dr[j] += gr[j] / m;
            T sign = row[jmax] >= T(0) ? T(1) : T(-1);
            dr[jmax] -= sign * dot / (m * m);
          }
        }
        break;
      }
      case Op::RowSum: {
        const Node& nx = node(n.in0);
        if (T* dx = grad_sink(n.in0))
          for (int i = 0; i < nx.rows; ++i)
            for (int j = 0; j < nx.cols; ++j)
              dx[std::size_t(i) * nx.cols + j] += g[i];
        break;
      }
      case Op::WeightedMse: {
        const Node& np = node(n.in0);
        const T* pp = np.val.data();
        const T* pt = val(n.in1);
        const T* pw = val(n.in2);
        if (T* dp = grad_sink(n.in0)) {
          T scale = g[0] * T(2) / (T(np.rows) * T(np.cols));
          for (int i = 0; i < np.rows; ++i)
            for (int j = 0; j < np.cols; ++j) {
              std::size_t at = std::size_t(i) * np.cols + j;
              dp[at] += scale * pw[i] * (pp[at] - pt[at]);
            }
        }
        break;
      }
      case Op::SoftmaxCe: {
        const Node& nl = node(n.in0);
        const T* pt = val(n.in1);
        const T* pw = val(n.in2);
        if (T* dl = grad_sink(n.in0)) {
          T scale = g[0] / T(nl.rows);
          for (int i = 0; i < nl.rows; ++i)
            for (int j = 0; j < nl.cols; ++j) {
              std::size_t at = std::size_t(i) * nl.cols + j;
              dl[at] += scale * pw[i] * (n.cache[at] - pt[at]);
            }
        }
        break;
      }
    }
  }

  void check_same(Id a, Id b, const char* opname) {
    if (node(a).rows != node(b).rows || node(a).cols != node(b).cols)
      throw ShapeMismatch(std::string(opname) + ": shape mismatch");
  }
  void check_shape(Id a, int rows, int cols, const char* what) {
    if (node(a).rows != rows || node(a).cols != cols)
      throw ShapeMismatch(std::string(what) + ": bad shape");
  }
  void check_cols(Id w, int expected_rows, const char* what) {
    if (node(w).rows != expected_rows)
      throw ShapeMismatch(std::string(what) + " mismatch");
  }
};

}  // namespace hnav

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "macsim/error.hpp"
#include "macsim/rng.hpp"

namespace macsim {

/// Dense row-major matrix of doubles.
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int r, int c, double fill = 0.0)
      : rows(r), cols(c), data(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), fill) {}

  std::size_t size() const noexcept { return data.size(); }
  double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(c)]; }
  double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(c)]; }
  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
  bool operator==(const Tensor&) const = default;
};

namespace detail {

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

inline double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

inline void require_shape(bool ok, const char* op) {
  if (!ok) throw ContractError(std::string("shape mismatch in ") + op);
}

}  // namespace detail

/// Minimal reverse-mode tape over matrices.
///
/// Nodes are appended in evaluation order; `backward` walks them in reverse.
/// With recording disabled no closures or gradient buffers are created.
class Graph {
 public:
  using Var = int;

  explicit Graph(bool record = true) : record_(record) {}

  bool recording() const noexcept { return record_; }

  Var constant(Tensor t) { return push(std::move(t)); }

  // Leaf referencing `value` without copying; gradients accumulate into `sink`.
  Var param(const Tensor& value, Tensor* sink) {
    Node n;
    n.ref = &value;
    n.sink = record_ ? sink : nullptr;
    nodes_.push_back(std::move(n));
    return static_cast<Var>(nodes_.size() - 1);
  }

  const Tensor& value(Var v) const {
    const Node& n = nodes_[static_cast<std::size_t>(v)];
    return n.ref ? *n.ref : n.value;
  }

  Var matmul(Var a, Var b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    detail::require_shape(A.cols == B.rows, "matmul");
    Tensor C(A.rows, B.cols);
    mm(A, B, C);
    const Var out = push(std::move(C));
    on_backward(out, [this, a, b, out] {
      const Tensor& G = grad_of(out);
      const Tensor& A = value(a);
      const Tensor& B = value(b);
      if (wants(a)) {
        Tensor& GA = grad_ref(a);
        for (int i = 0; i < A.rows; ++i)
          for (int j = 0; j < B.cols; ++j) {
            const double g = G(i, j);
            if (g == 0.0) continue;
            for (int k = 0; k < A.cols; ++k) GA(i, k) += g * B(k, j);
          }
      }
      if (wants(b)) {
        Tensor& GB = grad_ref(b);
        for (int i = 0; i < A.rows; ++i)
          for (int k = 0; k < A.cols; ++k) {
            const double av = A(i, k);
            for (int j = 0; j < B.cols; ++j) GB(k, j) += av * G(i, j);
          }
      }
    });
    return out;
  }

  // A * B^T
  Var matmul_nt(Var a, Var b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    detail::require_shape(A.cols == B.cols, "matmul_nt");
    Tensor C(A.rows, B.rows);
    for (int i = 0; i < A.rows; ++i)
      for (int j = 0; j < B.rows; ++j) {
        double s = 0.0;
        for (int k = 0; k < A.cols; ++k) s += A(i, k) * B(j, k);
        C(i, j) = s;
      }
    const Var out = push(std::move(C));
    on_backward(out, [this, a, b, out] {
      const Tensor& G = grad_of(out);
      const Tensor& A = value(a);
      const Tensor& B = value(b);
      if (wants(a)) {
        Tensor& GA = grad_ref(a);
        for (int i = 0; i < A.rows; ++i)
          for (int j = 0; j < B.rows; ++j)
            for (int k = 0; k < A.cols; ++k) GA(i, k) += G(i, j) * B(j, k);
      }
      if (wants(b)) {
        Tensor& GB = grad_ref(b);
        for (int i = 0; i < A.rows; ++i)
          for (int j = 0; j < B.rows; ++j)
            for (int k = 0; k < A.cols; ++k) GB(j, k) += G(i, j) * A(i, k);
      }
    });
    return out;
  }

  Var add(Var a, Var b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    detail::require_shape(A.rows == B.rows && A.cols == B.cols, "add");
    Tensor C = A;
    for (std::size_t i = 0; i < C.size(); ++i) C.data[i] += B.data[i];
    const Var out = push(std::move(C));
    on_backward(out, [this, a, b, out] {
      const Tensor& G = grad_of(out);
      for (Var v : {a, b})
        if (wants(v)) {
          Tensor& g = grad_ref(v);
          for (std::size_t i = 0; i < G.size(); ++i) g.data[i] += G.data[i];
        }
    });
    return out;
  }

  // Adds a 1 x cols row vector to every row.
  Var add_row(Var a, Var bias) {
    const Tensor& A = value(a);
    const Tensor& B = value(bias);
    detail::require_shape(B.rows == 1 && B.cols == A.cols, "add_row");
    Tensor C = A;
    for (int i = 0; i < C.rows; ++i)
      for (int j = 0; j < C.cols; ++j) C(i, j) += B(0, j);
    const Var out = push(std::move(C));
    on_backward(out, [this, a, bias, out] {
      const Tensor& G = grad_of(out);
      if (wants(a)) {
        Tensor& g = grad_ref(a);
        for (std::size_t i = 0; i < G.size(); ++i) g.data[i] += G.data[i];
      }
      if (wants(bias)) {
        Tensor& g = grad_ref(bias);
        for (int i = 0; i < G.rows; ++i)
          for (int j = 0; j < G.cols; ++j) g(0, j) += G(i, j);
      }
    });
    return out;
  }

  Var scale(Var a, double s) {
    Tensor C = value(a);
    for (double& v : C.data) v *= s;
    const Var out = push(std::move(C));
    on_backward(out, [this, a, s, out] {
      if (!wants(a)) return;
      const Tensor& G = grad_of(out);
      Tensor& g = grad_ref(a);
      for (std::size_t i = 0; i < G.size(); ++i) g.data[i] += s * G.data[i];
    });
    return out;
  }

  Var tanh(Var a) {
    Tensor C = value(a);
    for (double& v : C.data) v = std::tanh(v);
    const Var out = push(std::move(C));
    on_backward(out, [this, a, out] {
      if (!wants(a)) return;
      const Tensor& G = grad_of(out);
      const Tensor& Y = value(out);
      Tensor& g = grad_ref(a);
      for (std::size_t i = 0; i < G.size(); ++i) g.data[i] += G.data[i] * (1.0 - Y.data[i] * Y.data[i]);
    });
    return out;
  }

  Var gelu(Var a) {
    Tensor C = value(a);
    for (double& v : C.data) v = detail::gelu(v);
    const Var out = push(std::move(C));
    on_backward(out, [this, a, out] {
      if (!wants(a)) return;
      const Tensor& G = grad_of(out);
      const Tensor& X = value(a);
      Tensor& g = grad_ref(a);
      for (std::size_t i = 0; i < G.size(); ++i) g.data[i] += G.data[i] * detail::gelu_grad(X.data[i]);
    });
    return out;
  }

  // Row softmax; columns with key_mask[c] == 0 get probability 0. A row with
  // every column masked yields zeros.
  Var softmax_rows(Var a, const std::vector<std::uint8_t>& key_mask) {
    const Tensor& X = value(a);
    detail::require_shape(static_cast<int>(key_mask.size()) == X.cols, "softmax_rows");
    Tensor P(X.rows, X.cols);
    for (int i = 0; i < X.rows; ++i) {
      double mx = -INFINITY;
      for (int j = 0; j < X.cols; ++j)
        if (key_mask[static_cast<std::size_t>(j)]) mx = std::max(mx, X(i, j));
      if (mx == -INFINITY) continue;
      double s = 0.0;
      for (int j = 0; j < X.cols; ++j)
        if (key_mask[static_cast<std::size_t>(j)]) s += (P(i, j) = std::exp(X(i, j) - mx));
      for (int j = 0; j < X.cols; ++j) P(i, j) /= s;
    }
    const Var out = push(std::move(P));
    on_backward(out, [this, a, out] {
      if (!wants(a)) return;
      const Tensor& G = grad_of(out);
      const Tensor& P = value(out);
      Tensor& g = grad_ref(a);
      for (int i = 0; i < P.rows; ++i) {
        double dot = 0.0;
        for (int j = 0; j < P.cols; ++j) dot += P(i, j) * G(i, j);
        for (int j = 0; j < P.cols; ++j) g(i, j) += P(i, j) * (G(i, j) - dot);
      }
    });
    return out;
  }

  Var layer_norm(Var a, Var gamma, Var beta, double eps = 1e-5) {
    const Tensor& X = value(a);
    const Tensor& Gm = value(gamma);
    const Tensor& Bt = value(beta);
    detail::require_shape(Gm.cols == X.cols && Bt.cols == X.cols, "layer_norm");
    Tensor Y(X.rows, X.cols);
    Tensor xhat(X.rows, X.cols);
    std::vector<double> inv(static_cast<std::size_t>(X.rows));
    for (int i = 0; i < X.rows; ++i) {
      double mu = 0.0;
      for (int j = 0; j < X.cols; ++j) mu += X(i, j);
      mu /= X.cols;
      double var = 0.0;
      for (int j = 0; j < X.cols; ++j) var += (X(i, j) - mu) * (X(i, j) - mu);
      var /= X.cols;
      const double r = 1.0 / std::sqrt(var + eps);
      inv[static_cast<std::size_t>(i)] = r;
      for (int j = 0; j < X.cols; ++j) {
        xhat(i, j) = (X(i, j) - mu) * r;
        Y(i, j) = xhat(i, j) * Gm(0, j) + Bt(0, j);
      }
    }
    const Var out = push(std::move(Y));
    on_backward(out, [this, a, gamma, beta, out, xhat = std::move(xhat), inv = std::move(inv)] {
      const Tensor& G = grad_of(out);
      const Tensor& Gm = value(gamma);
      const int n = G.cols;
      if (wants(gamma) || wants(beta)) {
        for (int i = 0; i < G.rows; ++i)
          for (int j = 0; j < n; ++j) {
            if (wants(gamma)) grad_ref(gamma)(0, j) += G(i, j) * xhat(i, j);
            if (wants(beta)) grad_ref(beta)(0, j) += G(i, j);
          }
      }
      if (!wants(a)) return;
      Tensor& g = grad_ref(a);
      for (int i = 0; i < G.rows; ++i) {
        double m1 = 0.0;
        double m2 = 0.0;
        for (int j = 0; j < n; ++j) {
          const double d = G(i, j) * Gm(0, j);
          m1 += d;
          m2 += d * xhat(i, j);
        }
        m1 /= n;
        m2 /= n;
        for (int j = 0; j < n; ++j)
          g(i, j) += inv[static_cast<std::size_t>(i)] * (G(i, j) * Gm(0, j) - m1 - xhat(i, j) * m2);
      }
    });
    return out;
  }

  Var concat_cols(const std::vector<Var>& parts) {
    int rows = value(parts.front()).rows;
    int cols = 0;
    for (Var p : parts) {
      detail::require_shape(value(p).rows == rows, "concat_cols");
      cols += value(p).cols;
    }
    Tensor C(rows, cols);
    int off = 0;
    for (Var p : parts) {
      const Tensor& P = value(p);
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < P.cols; ++j) C(i, off + j) = P(i, j);
      off += P.cols;
    }
    const Var out = push(std::move(C));
    on_backward(out, [this, parts, out] {
      const Tensor& G = grad_of(out);
      int off = 0;
      for (Var p : parts) {
        const int pc = value(p).cols;
        if (wants(p)) {
          Tensor& g = grad_ref(p);
          for (int i = 0; i < G.rows; ++i)
            for (int j = 0; j < pc; ++j) g(i, j) += G(i, off + j);
        }
        off += pc;
      }
    });
    return out;
  }

  Var concat_rows(Var a, Var b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    detail::require_shape(A.cols == B.cols, "concat_rows");
    Tensor C(A.rows + B.rows, A.cols);
    std::copy(A.data.begin(), A.data.end(), C.data.begin());
    std::copy(B.data.begin(), B.data.end(), C.data.begin() + static_cast<std::ptrdiff_t>(A.size()));
    const std::size_t split = A.size();
    const Var out = push(std::move(C));
    on_backward(out, [this, a, b, split, out] {
      const Tensor& G = grad_of(out);
      if (wants(a)) {
        Tensor& g = grad_ref(a);
        for (std::size_t i = 0; i < split; ++i) g.data[i] += G.data[i];
      }
      if (wants(b)) {
        Tensor& g = grad_ref(b);
        for (std::size_t i = split; i < G.size(); ++i) g.data[i - split] += G.data[i];
      }
    });
    return out;
  }

  Var slice_cols(Var a, int begin, int count) {
    const Tensor& A = value(a);
    detail::require_shape(begin >= 0 && begin + count <= A.cols, "slice_cols");
    Tensor C(A.rows, count);
    for (int i = 0; i < A.rows; ++i)
      for (int j = 0; j < count; ++j) C(i, j) = A(i, begin + j);
    const Var out = push(std::move(C));
    on_backward(out, [this, a, begin, count, out] {
      if (!wants(a)) return;
      const Tensor& G = grad_of(out);
      Tensor& g = grad_ref(a);
      for (int i = 0; i < G.rows; ++i)
        for (int j = 0; j < count; ++j) g(i, begin + j) += G(i, j);
    });
    return out;
  }

  /// Elementwise 2 -> h -> 1 MLP with GELU on the pair (A[i,j], E[i,j]).
  Var mixed_score(Var a, const Tensor& E, Var w1, Var b1, Var w2, Var b2) {
    const Tensor& A = value(a);
    const Tensor& W1 = value(w1);
    const Tensor& B1 = value(b1);
    const Tensor& W2 = value(w2);
    const Tensor& B2 = value(b2);
    detail::require_shape(A.rows == E.rows && A.cols == E.cols && W1.rows == 2 && W2.rows == W1.cols, "mixed_score");
    const int h = W1.cols;
    Tensor C(A.rows, A.cols);
    for (std::size_t e = 0; e < A.size(); ++e) {
      double s = B2.data[0];
      for (int k = 0; k < h; ++k)
        s += W2.data[static_cast<std::size_t>(k)] *
             detail::gelu(A.data[e] * W1(0, k) + E.data[e] * W1(1, k) + B1.data[static_cast<std::size_t>(k)]);
      C.data[e] = s;
    }
    const Var out = push(std::move(C));
    on_backward(out, [this, a, E, w1, b1, w2, b2, out] {
      const Tensor& G = grad_of(out);
      const Tensor& A = value(a);
      const Tensor& W1 = value(w1);
      const Tensor& B1 = value(b1);
      const Tensor& W2 = value(w2);
      const int h = W1.cols;
      Tensor* gA = wants(a) ? &grad_ref(a) : nullptr;
      Tensor* gW1 = wants(w1) ? &grad_ref(w1) : nullptr;
      Tensor* gB1 = wants(b1) ? &grad_ref(b1) : nullptr;
      Tensor* gW2 = wants(w2) ? &grad_ref(w2) : nullptr;
      Tensor* gB2 = wants(b2) ? &grad_ref(b2) : nullptr;
      for (std::size_t e = 0; e < A.size(); ++e) {
        const double g = G.data[e];
        if (g == 0.0) continue;
        if (gB2) gB2->data[0] += g;
        for (int k = 0; k < h; ++k) {
          const double pre = A.data[e] * W1(0, k) + E.data[e] * W1(1, k) + B1.data[static_cast<std::size_t>(k)];
          if (gW2) gW2->data[static_cast<std::size_t>(k)] += g * detail::gelu(pre);
          const double dpre = g * W2.data[static_cast<std::size_t>(k)] * detail::gelu_grad(pre);
          if (gW1) {
            (*gW1)(0, k) += dpre * A.data[e];
            (*gW1)(1, k) += dpre * E.data[e];
          }
          if (gB1) gB1->data[static_cast<std::size_t>(k)] += dpre;
          if (gA) gA->data[e] += dpre * W1(0, k);
        }
      }
    });
    return out;
  }

  // Inverted dropout.
  Var dropout(Var a, double rate, Rng& rng) {
    if (rate <= 0.0) return a;
    Tensor C = value(a);
    std::vector<double> keep(C.size());
    const double s = 1.0 / (1.0 - rate);
    for (std::size_t i = 0; i < C.size(); ++i) {
      keep[i] = rng.unit() < rate ? 0.0 : s;
      C.data[i] *= keep[i];
    }
    const Var out = push(std::move(C));
    on_backward(out, [this, a, out, keep = std::move(keep)] {
      if (!wants(a)) return;
      const Tensor& G = grad_of(out);
      Tensor& g = grad_ref(a);
      for (std::size_t i = 0; i < G.size(); ++i) g.data[i] += G.data[i] * keep[i];
    });
    return out;
  }

  /// Propagates `seed` = dLoss/d(out) back to every parameter sink.
  void backward(Var out, const Tensor& seed) {
    if (!record_) throw ContractError("backward on a graph built without recording");
    detail::require_shape(seed.rows == value(out).rows && seed.cols == value(out).cols, "backward seed");
    grad_ref(out) = seed;
    for (int i = out; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (!n.has_grad) continue;
      if (n.back) n.back();
      if (n.sink) {
        detail::require_shape(n.sink->size() == n.grad.size(), "parameter gradient sink");
        for (std::size_t k = 0; k < n.grad.size(); ++k) n.sink->data[k] += n.grad.data[k];
      }
    }
  }

 private:
  struct Node {
    Tensor value;
    const Tensor* ref = nullptr;
    Tensor grad;
    bool has_grad = false;
    Tensor* sink = nullptr;
    std::function<void()> back;
  };

  static void mm(const Tensor& A, const Tensor& B, Tensor& C) {
    const std::size_t n = static_cast<std::size_t>(B.cols);
    const double* __restrict a = A.data.data();
    const double* __restrict b = B.data.data();
    double* __restrict c = C.data.data();
    for (int i = 0; i < A.rows; ++i) {
      double* __restrict crow = c + static_cast<std::size_t>(i) * n;
      for (int k = 0; k < A.cols; ++k) {
        const double av = a[static_cast<std::size_t>(i) * static_cast<std::size_t>(A.cols) + static_cast<std::size_t>(k)];
        const double* __restrict brow = b + static_cast<std::size_t>(k) * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }

  Var push(Tensor t) {
    Node n;
    n.value = std::move(t);
    nodes_.push_back(std::move(n));
    return static_cast<Var>(nodes_.size() - 1);
  }

  template <class F>
  void on_backward(Var out, F&& f) {
    if (record_) nodes_[static_cast<std::size_t>(out)].back = std::forward<F>(f);
  }

  // Constants never receive gradients.
  bool wants(Var v) const {
    const Node& n = nodes_[static_cast<std::size_t>(v)];
    return n.sink != nullptr || n.back != nullptr;
  }

  const Tensor& grad_of(Var v) { return grad_ref(v); }

  Tensor& grad_ref(Var v) {
    Node& n = nodes_[static_cast<std::size_t>(v)];
    if (!n.has_grad) {
      const Tensor& val = n.ref ? *n.ref : n.value;
      n.grad = Tensor(val.rows, val.cols);
      n.has_grad = true;
    }
    return n.grad;
  }

  bool record_;
  std::vector<Node> nodes_;
};

}  // namespace macsim

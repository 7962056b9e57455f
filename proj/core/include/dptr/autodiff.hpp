#pragma once

#include "dptr/common.hpp"
#include "dptr/rng.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace dptr {

// Named parameter tensors. Models register tensors with dotted prefixes
// ("dec.layer0.q_w") so checkpoints can be loaded by name across stages.
template <typename S>
struct ParamStore {
  std::vector<std::string> names;
  std::vector<Matrix<S>> values;

  int add(std::string name, Matrix<S> value) {
    names.push_back(std::move(name));
    values.push_back(std::move(value));
    return static_cast<int>(values.size()) - 1;
  }

  int size() const { return static_cast<int>(values.size()); }
  Matrix<S>& operator[](int i) { return values[static_cast<size_t>(i)]; }
  const Matrix<S>& operator[](int i) const { return values[static_cast<size_t>(i)]; }

  int find(const std::string& name) const {
    for (int i = 0; i < size(); ++i)
      if (names[static_cast<size_t>(i)] == name) return i;
    return -1;
  }

  long long total_elements() const {
    long long n = 0;
    for (const auto& v : values) n += v.size();
    return n;
  }

  bool finite() const {
    for (const auto& v : values)
      if (!v.allFinite()) return false;
    return true;
  }
};

template <typename S>
struct GradStore {
  std::vector<Matrix<S>> grads;

  GradStore() = default;
  explicit GradStore(const ParamStore<S>& params) { reset(params); }

  void reset(const ParamStore<S>& params) {
    grads.resize(static_cast<size_t>(params.size()));
    for (int i = 0; i < params.size(); ++i)
      grads[static_cast<size_t>(i)] = Matrix<S>::Zero(params[i].rows(), params[i].cols());
  }

  void zero() {
    for (auto& g : grads) g.setZero();
  }

  // Order-sensitive: callers must add chunk buffers in a fixed order.
  void add(const GradStore& other) {
    for (size_t i = 0; i < grads.size(); ++i) grads[i] += other.grads[i];
  }

  void scale(S f) {
    for (auto& g : grads) g *= f;
  }

  Matrix<S>& operator[](int i) { return grads[static_cast<size_t>(i)]; }
  const Matrix<S>& operator[](int i) const { return grads[static_cast<size_t>(i)]; }
};

template <typename S>
Matrix<S> randn(int rows, int cols, S stddev, Rng& rng) {
  Matrix<S> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i)
    m.data()[i] = static_cast<S>(rng.normal()) * stddev;
  return m;
}

template <typename S>
Matrix<S> xavier(int fan_in, int fan_out, Rng& rng) {
  const S stddev = std::sqrt(static_cast<S>(2) / static_cast<S>(fan_in + fan_out));
  return randn<S>(fan_in, fan_out, stddev, rng);
}

// Reverse-mode tape over row-major matrices. One tape per sample per step;
// nodes are append-only so creation order is a valid topological order.
//
// Forward passes avoid cross-row reductions whose grouping depends on the
// number of rows: matmul computes one output row at a time and attention
// accumulates contexts in ascending key order. A row of activations is
// therefore bit-identical whether it is computed inside a long or a short
// sequence, which the decoder's incremental-decoding contract relies on.
template <typename S>
class Tape {
 public:
  using Ref = int;

  Tape(const ParamStore<S>* params, GradStore<S>* grads)
      : params_(params), grads_(grads) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // ---- leaves ----

  Ref input(Matrix<S> m) {
    Node n;
    n.own = std::move(m);
    return push(std::move(n));
  }

  // Caller keeps *m alive for the tape's lifetime.
  Ref input_ref(const Matrix<S>* m) {
    Node n;
    n.borrowed = m;
    return push(std::move(n));
  }

  Ref param(int idx) {
    Node n;
    n.borrowed = &(*params_)[idx];
    n.param_idx = idx;
    return push(std::move(n));
  }

  // Parameter used as a constant: no gradient is recorded for it, but
  // gradients still flow through ops that consume it.
  Ref frozen_param(int idx) {
    Node n;
    n.borrowed = &(*params_)[idx];
    return push(std::move(n));
  }

  const Matrix<S>& val(Ref r) const {
    const Node& n = node(r);
    return n.borrowed ? *n.borrowed : n.own;
  }

  const Matrix<S>& grad_of(Ref r) const { return node(r).grad; }

  // ---- ops ----

  Ref add(Ref a, Ref b) {
    Ref out = from_value(val(a) + val(b));
    set_back(out, [this, a, b, out] {
      const Matrix<S>& g = node(out).grad;
      ensure_grad(a) += g;
      ensure_grad(b) += g;
    });
    return out;
  }

  // a: n x d, bias: 1 x d
  Ref add_bias(Ref a, Ref bias) {
    const Matrix<S>& x = val(a);
    const Matrix<S>& b = val(bias);
    Matrix<S> y(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) y.row(i) = x.row(i) + b.row(0);
    Ref out = from_value(std::move(y));
    set_back(out, [this, a, bias, out] {
      const Matrix<S>& g = node(out).grad;
      ensure_grad(a) += g;
      ensure_grad(bias).row(0) += g.colwise().sum();
    });
    return out;
  }

  Ref matmul(Ref a, Ref b) {
    const Matrix<S>& x = val(a);
    const Matrix<S>& w = val(b);
    Matrix<S> y(x.rows(), w.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) y.row(i).noalias() = x.row(i) * w;
    Ref out = from_value(std::move(y));
    set_back(out, [this, a, b, out] {
      const Matrix<S>& g = node(out).grad;
      ensure_grad(a).noalias() += g * val(b).transpose();
      ensure_grad(b).noalias() += val(a).transpose() * g;
    });
    return out;
  }

  // a * b^T
  Ref matmul_nt(Ref a, Ref b) {
    const Matrix<S>& x = val(a);
    const Matrix<S>& w = val(b);
    Matrix<S> y(x.rows(), w.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) y.row(i).noalias() = x.row(i) * w.transpose();
    Ref out = from_value(std::move(y));
    set_back(out, [this, a, b, out] {
      const Matrix<S>& g = node(out).grad;
      ensure_grad(a).noalias() += g * val(b);
      ensure_grad(b).noalias() += g.transpose() * val(a);
    });
    return out;
  }

  Ref transpose(Ref a) {
    Ref out = from_value(val(a).transpose());
    set_back(out, [this, a, out] { ensure_grad(a) += node(out).grad.transpose(); });
    return out;
  }

  Ref scale(Ref a, S c) {
    Ref out = from_value(val(a) * c);
    set_back(out, [this, a, c, out] { ensure_grad(a) += node(out).grad * c; });
    return out;
  }

  // s is 1x1
  Ref scale_by(Ref a, Ref s) {
    Ref out = from_value(val(a) * val(s)(0, 0));
    set_back(out, [this, a, s, out] {
      const Matrix<S>& g = node(out).grad;
      ensure_grad(a) += g * val(s)(0, 0);
      ensure_grad(s)(0, 0) += (g.array() * val(a).array()).sum();
    });
    return out;
  }

  Ref exp_elem(Ref a) {
    Ref out = from_value(val(a).array().exp().matrix());
    set_back(out, [this, a, out] {
      ensure_grad(a).array() += node(out).grad.array() * val(out).array();
    });
    return out;
  }

  Ref gelu(Ref a) {
    const Matrix<S>& x = val(a);
    Matrix<S> y(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.size(); ++i) y.data()[i] = gelu_fwd(x.data()[i]);
    Ref out = from_value(std::move(y));
    set_back(out, [this, a, out] {
      const Matrix<S>& x2 = val(a);
      const Matrix<S>& g = node(out).grad;
      Matrix<S>& ga = ensure_grad(a);
      for (Eigen::Index i = 0; i < x2.size(); ++i) ga.data()[i] += g.data()[i] * gelu_bwd(x2.data()[i]);
    });
    return out;
  }

  Ref layer_norm(Ref x, Ref gamma, Ref beta) {
    const S eps = static_cast<S>(1e-5);
    const Matrix<S>& in = val(x);
    const Eigen::Index n = in.rows(), d = in.cols();
    auto xhat = std::make_shared<Matrix<S>>(n, d);
    auto inv_std = std::make_shared<std::vector<S>>(static_cast<size_t>(n));
    Matrix<S> y(n, d);
    const Matrix<S>& g = val(gamma);
    const Matrix<S>& b = val(beta);
    for (Eigen::Index i = 0; i < n; ++i) {
      const S mean = in.row(i).mean();
      const S var = (in.row(i).array() - mean).square().sum() / static_cast<S>(d);
      const S inv = static_cast<S>(1) / std::sqrt(var + eps);
      (*inv_std)[static_cast<size_t>(i)] = inv;
      xhat->row(i) = (in.row(i).array() - mean) * inv;
      y.row(i) = (xhat->row(i).array() * g.row(0).array()) + b.row(0).array();
    }
    Ref out = from_value(std::move(y));
    set_back(out, [this, x, gamma, beta, out, xhat, inv_std] {
      const Matrix<S>& gy = node(out).grad;
      const Matrix<S>& gmat = val(gamma);
      const Eigen::Index n2 = gy.rows(), d2 = gy.cols();
      ensure_grad(beta).row(0) += gy.colwise().sum();
      ensure_grad(gamma).row(0) += (gy.array() * xhat->array()).colwise().sum().matrix();
      Matrix<S>& gx = ensure_grad(x);
      for (Eigen::Index i = 0; i < n2; ++i) {
        Eigen::Array<S, 1, Eigen::Dynamic> dxhat = gy.row(i).array() * gmat.row(0).array();
        const S m1 = dxhat.sum() / static_cast<S>(d2);
        const S m2 = (dxhat * xhat->row(i).array()).sum() / static_cast<S>(d2);
        gx.row(i).array() +=
            (*inv_std)[static_cast<size_t>(i)] * (dxhat - m1 - xhat->row(i).array() * m2);
      }
    });
    return out;
  }

  Ref l2_normalize_rows(Ref x) {
    const S eps = static_cast<S>(1e-12);
    const Matrix<S>& in = val(x);
    auto norms = std::make_shared<std::vector<S>>(static_cast<size_t>(in.rows()));
    Matrix<S> y(in.rows(), in.cols());
    for (Eigen::Index i = 0; i < in.rows(); ++i) {
      const S n = std::sqrt(in.row(i).squaredNorm() + eps);
      (*norms)[static_cast<size_t>(i)] = n;
      y.row(i) = in.row(i) / n;
    }
    Ref out = from_value(std::move(y));
    set_back(out, [this, x, out, norms] {
      const Matrix<S>& g = node(out).grad;
      const Matrix<S>& y2 = val(out);
      Matrix<S>& gx = ensure_grad(x);
      for (Eigen::Index i = 0; i < g.rows(); ++i) {
        const S proj = y2.row(i).dot(g.row(i));
        gx.row(i) += (g.row(i) - proj * y2.row(i)) / (*norms)[static_cast<size_t>(i)];
      }
    });
    return out;
  }

  Ref concat_rows(Ref a, Ref b) {
    const Matrix<S>& x = val(a);
    const Matrix<S>& y = val(b);
    require(x.cols() == y.cols(), "concat_rows: column mismatch");
    Matrix<S> z(x.rows() + y.rows(), x.cols());
    z.topRows(x.rows()) = x;
    z.bottomRows(y.rows()) = y;
    Ref out = from_value(std::move(z));
    set_back(out, [this, a, b, out] {
      const Matrix<S>& g = node(out).grad;
      const Eigen::Index na = val(a).rows();
      ensure_grad(a) += g.topRows(na);
      ensure_grad(b) += g.bottomRows(g.rows() - na);
    });
    return out;
  }

  Ref rows(Ref a, int r0, int n) {
    Ref out = from_value(val(a).middleRows(r0, n));
    set_back(out, [this, a, r0, n, out] {
      ensure_grad(a).middleRows(r0, n) += node(out).grad;
    });
    return out;
  }

  // Adaptive average pooling over rows: out row j averages input rows
  // [floor(j*L/n), ceil((j+1)*L/n)).
  Ref pool_rows(Ref a, int n) {
    const Matrix<S>& x = val(a);
    const Eigen::Index l = x.rows();
    require(n >= 1, "pool size must be >= 1");
    Matrix<S> y = Matrix<S>::Zero(n, x.cols());
    for (int j = 0; j < n; ++j) {
      const Eigen::Index start = (static_cast<Eigen::Index>(j) * l) / n;
      const Eigen::Index end = (static_cast<Eigen::Index>(j + 1) * l + n - 1) / n;
      for (Eigen::Index r = start; r < end; ++r) y.row(j) += x.row(r);
      y.row(j) /= static_cast<S>(end - start);
    }
    Ref out = from_value(std::move(y));
    set_back(out, [this, a, n, out] {
      const Matrix<S>& g = node(out).grad;
      Matrix<S>& ga = ensure_grad(a);
      const Eigen::Index l2 = ga.rows();
      for (int j = 0; j < n; ++j) {
        const Eigen::Index start = (static_cast<Eigen::Index>(j) * l2) / n;
        const Eigen::Index end = (static_cast<Eigen::Index>(j + 1) * l2 + n - 1) / n;
        const S w = static_cast<S>(1) / static_cast<S>(end - start);
        for (Eigen::Index r = start; r < end; ++r) ga.row(r) += w * g.row(j);
      }
    });
    return out;
  }

  Ref gather_rows(Ref table, std::vector<int> ids) {
    const Matrix<S>& t = val(table);
    Matrix<S> y(static_cast<Eigen::Index>(ids.size()), t.cols());
    for (size_t i = 0; i < ids.size(); ++i) y.row(static_cast<Eigen::Index>(i)) = t.row(ids[i]);
    Ref out = from_value(std::move(y));
    auto ids_ptr = std::make_shared<std::vector<int>>(std::move(ids));
    set_back(out, [this, table, out, ids_ptr] {
      const Matrix<S>& g = node(out).grad;
      Matrix<S>& gt = ensure_grad(table);
      for (size_t i = 0; i < ids_ptr->size(); ++i)
        gt.row((*ids_ptr)[i]) += g.row(static_cast<Eigen::Index>(i));
    });
    return out;
  }

  // Multi-head attention over already-projected q/k/v (n x d each, d = heads * head_dim).
  // An empty mask means full visibility; otherwise mask(i, j) != 0 lets query
  // row i attend to key row j. Softmax and context accumulation run in
  // ascending key order so results do not depend on the number of rows.
  Ref attention(Ref q, Ref k, Ref v, int heads, BoolMat mask) {
    const Matrix<S>& Q = val(q);
    const Matrix<S>& K = val(k);
    const Matrix<S>& V = val(v);
    const Eigen::Index lq = Q.rows(), lk = K.rows(), d = Q.cols();
    require(d % heads == 0, "feature dim not divisible by heads");
    const Eigen::Index dh = d / heads;
    const S inv_sqrt = static_cast<S>(1) / std::sqrt(static_cast<S>(dh));
    const bool masked = mask.size() != 0;
    if (masked) require(mask.rows() == lq && mask.cols() == lk, "mask shape mismatch");

    auto weights = std::make_shared<Matrix<S>>(Matrix<S>::Zero(heads * lq, lk));
    Matrix<S> out_val = Matrix<S>::Zero(lq, d);
    std::vector<S> scores(static_cast<size_t>(lk));
    for (int h = 0; h < heads; ++h) {
      const Eigen::Index c0 = h * dh;
      for (Eigen::Index i = 0; i < lq; ++i) {
        S maxv = -std::numeric_limits<S>::infinity();
        for (Eigen::Index j = 0; j < lk; ++j) {
          if (masked && !mask(i, j)) continue;
          const S s = Q.row(i).segment(c0, dh).dot(K.row(j).segment(c0, dh)) * inv_sqrt;
          scores[static_cast<size_t>(j)] = s;
          if (s > maxv) maxv = s;
        }
        require(maxv > -std::numeric_limits<S>::infinity(), "attention row sees nothing");
        S denom = 0;
        for (Eigen::Index j = 0; j < lk; ++j) {
          if (masked && !mask(i, j)) continue;
          const S e = std::exp(scores[static_cast<size_t>(j)] - maxv);
          (*weights)(h * lq + i, j) = e;
          denom += e;
        }
        const S inv_denom = static_cast<S>(1) / denom;
        for (Eigen::Index j = 0; j < lk; ++j) {
          if (masked && !mask(i, j)) continue;
          const S a = (*weights)(h * lq + i, j) * inv_denom;
          (*weights)(h * lq + i, j) = a;
          out_val.row(i).segment(c0, dh) += a * V.row(j).segment(c0, dh);
        }
      }
    }
    Ref out = from_value(std::move(out_val));
    node(out).attn = weights;
    node(out).attn_heads = heads;
    set_back(out, [this, q, k, v, heads, out, weights, inv_sqrt] {
      const Matrix<S>& Q2 = val(q);
      const Matrix<S>& K2 = val(k);
      const Matrix<S>& V2 = val(v);
      const Matrix<S>& g = node(out).grad;
      const Eigen::Index lq2 = Q2.rows(), dh2 = Q2.cols() / heads;
      Matrix<S>& gq = ensure_grad(q);
      Matrix<S>& gk = ensure_grad(k);
      Matrix<S>& gv = ensure_grad(v);
      for (int h = 0; h < heads; ++h) {
        const Eigen::Index c0 = h * dh2;
        auto A = weights->middleRows(h * lq2, lq2);  // lq x lk
        auto dO = g.middleCols(c0, dh2);
        gv.middleCols(c0, dh2).noalias() += A.transpose() * dO;
        Matrix<S> dA = dO * V2.middleCols(c0, dh2).transpose();  // lq x lk
        Matrix<S> dS(dA.rows(), dA.cols());
        for (Eigen::Index i = 0; i < dA.rows(); ++i) {
          const S rowsum = (dA.row(i).array() * A.row(i).array()).sum();
          dS.row(i) = (A.row(i).array() * (dA.row(i).array() - rowsum)).matrix();
        }
        gq.middleCols(c0, dh2).noalias() += dS * K2.middleCols(c0, dh2) * inv_sqrt;
        gk.middleCols(c0, dh2).noalias() += dS.transpose() * Q2.middleCols(c0, dh2) * inv_sqrt;
      }
    });
    return out;
  }

  // Head-averaged attention weights of an attention() node.
  Matrix<S> attention_weights(Ref attn_node) const {
    const Node& n = node(attn_node);
    require(n.attn != nullptr, "not an attention node");
    const Eigen::Index lq = n.attn->rows() / n.attn_heads;
    Matrix<S> mean = Matrix<S>::Zero(lq, n.attn->cols());
    for (int h = 0; h < n.attn_heads; ++h) mean += n.attn->middleRows(h * lq, lq);
    return mean / static_cast<S>(n.attn_heads);
  }

  // Mean over used rows of -log softmax(logits)[cls]. Returns a 1x1 node.
  Ref cross_entropy(Ref logits, std::vector<int> classes, std::vector<std::uint8_t> use_row) {
    const Matrix<S>& z = val(logits);
    require(static_cast<Eigen::Index>(classes.size()) == z.rows(), "class count mismatch");
    require(use_row.size() == classes.size(), "row mask mismatch");
    int used = 0;
    S total = 0;
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      if (!use_row[static_cast<size_t>(i)]) continue;
      ++used;
      const S m = z.row(i).maxCoeff();
      const S lse = m + std::log((z.row(i).array() - m).exp().sum());
      total += lse - z(i, classes[static_cast<size_t>(i)]);
    }
    require(used > 0, "empty target");
    Matrix<S> loss(1, 1);
    loss(0, 0) = total / static_cast<S>(used);
    Ref out = from_value(std::move(loss));
    auto cls = std::make_shared<std::vector<int>>(std::move(classes));
    auto use = std::make_shared<std::vector<std::uint8_t>>(std::move(use_row));
    set_back(out, [this, logits, out, cls, use, used] {
      const S seed = node(out).grad(0, 0);
      const Matrix<S>& z2 = val(logits);
      Matrix<S>& gz = ensure_grad(logits);
      const S w = seed / static_cast<S>(used);
      for (Eigen::Index i = 0; i < z2.rows(); ++i) {
        if (!(*use)[static_cast<size_t>(i)]) continue;
        const S m = z2.row(i).maxCoeff();
        Eigen::Array<S, 1, Eigen::Dynamic> p = (z2.row(i).array() - m).exp();
        p /= p.sum();
        gz.row(i).array() += w * p;
        gz(i, (*cls)[static_cast<size_t>(i)]) -= w;
      }
    });
    return out;
  }

  // sum(a .* w) as a 1x1 node; handy scalar functional for gradient checks.
  Ref weighted_sum(Ref a, Matrix<S> w) {
    const Matrix<S>& x = val(a);
    require(x.rows() == w.rows() && x.cols() == w.cols(), "weighted_sum shape mismatch");
    Matrix<S> y(1, 1);
    y(0, 0) = (x.array() * w.array()).sum();
    Ref out = from_value(std::move(y));
    auto wp = std::make_shared<Matrix<S>>(std::move(w));
    set_back(out, [this, a, out, wp] {
      ensure_grad(a) += node(out).grad(0, 0) * (*wp);
    });
    return out;
  }

  Ref linear(Ref x, Ref w, Ref b) { return add_bias(matmul(x, w), b); }

  // ---- backward ----

  void backward(Ref root) {
    Matrix<S> seed(1, 1);
    seed(0, 0) = static_cast<S>(1);
    backward(root, seed);
  }

  void backward(Ref out, const Matrix<S>& seed) {
    ensure_grad(out) += seed;
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
      Node& n = nodes_[static_cast<size_t>(i)];
      if (n.grad.size() == 0) continue;
      if (n.back) n.back();
      if (n.param_idx >= 0 && grads_ != nullptr) (*grads_)[n.param_idx] += n.grad;
    }
  }

 private:
  struct Node {
    Matrix<S> own;
    const Matrix<S>* borrowed = nullptr;
    Matrix<S> grad;
    std::function<void()> back;
    int param_idx = -1;
    std::shared_ptr<Matrix<S>> attn;
    int attn_heads = 0;
  };

  Node& node(Ref r) { return nodes_[static_cast<size_t>(r)]; }
  const Node& node(Ref r) const { return nodes_[static_cast<size_t>(r)]; }

  Ref push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<Ref>(nodes_.size()) - 1;
  }

  Ref from_value(Matrix<S> v) {
    Node n;
    n.own = std::move(v);
    return push(std::move(n));
  }

  template <typename F>
  void set_back(Ref r, F f) {
    node(r).back = std::move(f);
  }

  Matrix<S>& ensure_grad(Ref r) {
    Node& n = node(r);
    if (n.grad.size() == 0) {
      const Matrix<S>& v = n.borrowed ? *n.borrowed : n.own;
      n.grad = Matrix<S>::Zero(v.rows(), v.cols());
    }
    return n.grad;
  }

  static S gelu_fwd(S x) {
    const S c = static_cast<S>(0.7978845608028654);  // sqrt(2/pi)
    const S a = static_cast<S>(0.044715);
    return static_cast<S>(0.5) * x * (static_cast<S>(1) + std::tanh(c * (x + a * x * x * x)));
  }

  static S gelu_bwd(S x) {
    const S c = static_cast<S>(0.7978845608028654);
    const S a = static_cast<S>(0.044715);
    const S t = std::tanh(c * (x + a * x * x * x));
    return static_cast<S>(0.5) * (static_cast<S>(1) + t) +
           static_cast<S>(0.5) * x * (static_cast<S>(1) - t * t) *
               c * (static_cast<S>(1) + static_cast<S>(3) * a * x * x);
  }

  std::vector<Node> nodes_;
  const ParamStore<S>* params_;
  GradStore<S>* grads_;
};

// Adam without weight decay.
template <typename S>
class Adam {
 public:
  Adam(const ParamStore<S>& params, S lr, S beta1 = static_cast<S>(0.9),
       S beta2 = static_cast<S>(0.999), S eps = static_cast<S>(1e-8))
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.reset(params);
    v_.reset(params);
    trainable_.assign(static_cast<size_t>(params.size()), true);
  }

  // Parameters whose name starts with `prefix` are left untouched by step().
  void freeze_prefix(const ParamStore<S>& params, const std::string& prefix) {
    for (int i = 0; i < params.size(); ++i)
      if (params.names[static_cast<size_t>(i)].rfind(prefix, 0) == 0)
        trainable_[static_cast<size_t>(i)] = false;
  }

  void step(ParamStore<S>& params, const GradStore<S>& grads) {
    ++t_;
    const S bc1 = static_cast<S>(1) - std::pow(beta1_, static_cast<S>(t_));
    const S bc2 = static_cast<S>(1) - std::pow(beta2_, static_cast<S>(t_));
    for (int i = 0; i < params.size(); ++i) {
      if (!trainable_[static_cast<size_t>(i)]) continue;
      auto& m = m_[i];
      auto& v = v_[i];
      const auto& g = grads[i];
      m = beta1_ * m + (static_cast<S>(1) - beta1_) * g;
      v = (beta2_ * v.array() + (static_cast<S>(1) - beta2_) * g.array().square()).matrix();
      params[i].array() -=
          lr_ * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps_);
    }
  }

 private:
  S lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  GradStore<S> m_, v_;
  std::vector<bool> trainable_;
};

// Central finite differences against analytic gradients; returns the worst
// relative error over every element of every parameter. The denominator is
// floored so that exactly-null gradient directions (an attention key bias
// shifts every score of a softmax row equally, for instance) compare finite
// difference noise against an absolute scale instead of against itself.
template <typename S, typename LossFn>
double max_rel_grad_error(ParamStore<S>& params, const GradStore<S>& analytic,
                          LossFn loss, S eps) {
  double worst = 0;
  for (int p = 0; p < params.size(); ++p) {
    Matrix<S>& theta = params[p];
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      const S orig = theta.data()[i];
      theta.data()[i] = orig + eps;
      const double fp = static_cast<double>(loss());
      theta.data()[i] = orig - eps;
      const double fm = static_cast<double>(loss());
      theta.data()[i] = orig;
      const double num = (fp - fm) / (2.0 * static_cast<double>(eps));
      const double ana = static_cast<double>(analytic[p].data()[i]);
      const double denom = std::max(std::abs(num) + std::abs(ana), 1e-3);
      const double rel = std::abs(num - ana) / denom;
      if (rel > worst) worst = rel;
    }
  }
  return worst;
}

}  // namespace dptr

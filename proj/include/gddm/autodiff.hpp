#ifndef GDDM_AUTODIFF_HPP
#define GDDM_AUTODIFF_HPP

// Minimal reverse-mode differentiation over dense Eigen matrices. A Tape
// records one forward pass; backward() walks it in reverse and accumulates
// gradients into the Parameters that were read.

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "gddm/error.hpp"
#include "gddm/rng.hpp"

namespace gddm::ad {

using Matrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// A named learnable array and its accumulated gradient.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Matrix v)
      : name(std::move(n)), value(std::move(v)),
        grad(Matrix::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
  Eigen::Index size() const { return value.size(); }
};

struct Var {
  int id = -1;
  bool valid() const noexcept { return id >= 0; }
};

class Tape {
 public:
  /// With `record` false no backward closures are kept (inference).
  explicit Tape(bool record = true) : record_(record) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return record_; }

  Var constant(Matrix v) { return push(std::move(v), false, {}); }

  Var param(Parameter& p) {
    Var v = push(p.value, record_, {});
    if (record_) nodes_[v.id].param = &p;
    return v;
  }

  const Matrix& value(Var v) const { return nodes_.at(v.id).value; }
  double scalar(Var v) const { return value(v)(0, 0); }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

  /// Gradient buffer of an intermediate, allocated on first use.
  Matrix& grad(Var v) {
    auto& n = nodes_.at(v.id);
    if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  /// Records a node. `backward` receives the tape and the node's own grad.
  Var push(Matrix value, bool requires_grad,
           std::function<void(Tape&, const Matrix&)> backward) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad && record_;
    if (n.requires_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  /// Seeds d(output)/d(output) = 1 and propagates to every Parameter.
  void backward(Var output) {
    if (!record_) throw Error("backward() on a non-recording tape");
    const auto& out = nodes_.at(output.id);
    if (out.value.size() != 1) throw Error("backward() needs a scalar output");
    if (!out.requires_grad) return;
    grad(output).setOnes();
    for (int i = output.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.size() == 0) continue;
      if (n.param != nullptr) {
        n.param->grad += n.grad;
      } else if (n.backward) {
        // The closure may touch grads of earlier nodes only.
        Matrix g = std::move(n.grad);
        n.backward(*this, g);
        n.grad = std::move(g);
      }
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Parameter* param = nullptr;
    std::function<void(Tape&, const Matrix&)> backward;
  };

  std::vector<Node> nodes_;
  bool record_;
};

namespace detail {

inline void require(bool ok, const char* op, const std::string& msg) {
  if (!ok) throw InvariantError(std::string(op) + ": " + msg);
}

inline std::string shape(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementary ops

inline Var matmul(Tape& t, Var a, Var b) {
  const Matrix& A = t.value(a);
  const Matrix& B = t.value(b);
  detail::require(A.cols() == B.rows(), "matmul",
                  detail::shape(A) + " * " + detail::shape(B));
  return t.push(A * B, t.requires_grad(a) || t.requires_grad(b),
                [a, b](Tape& tp, const Matrix& g) {
                  if (tp.requires_grad(a)) tp.grad(a).noalias() += g * tp.value(b).transpose();
                  if (tp.requires_grad(b)) tp.grad(b).noalias() += tp.value(a).transpose() * g;
                });
}

inline Var add(Tape& t, Var a, Var b) {
  detail::require(t.value(a).rows() == t.value(b).rows() &&
                      t.value(a).cols() == t.value(b).cols(),
                  "add", detail::shape(t.value(a)) + " + " + detail::shape(t.value(b)));
  return t.push(t.value(a) + t.value(b), t.requires_grad(a) || t.requires_grad(b),
                [a, b](Tape& tp, const Matrix& g) {
                  if (tp.requires_grad(a)) tp.grad(a) += g;
                  if (tp.requires_grad(b)) tp.grad(b) += g;
                });
}

inline Var sub(Tape& t, Var a, Var b) {
  detail::require(t.value(a).rows() == t.value(b).rows() &&
                      t.value(a).cols() == t.value(b).cols(),
                  "sub", detail::shape(t.value(a)) + " - " + detail::shape(t.value(b)));
  return t.push(t.value(a) - t.value(b), t.requires_grad(a) || t.requires_grad(b),
                [a, b](Tape& tp, const Matrix& g) {
                  if (tp.requires_grad(a)) tp.grad(a) += g;
                  if (tp.requires_grad(b)) tp.grad(b) -= g;
                });
}

/// Element-wise product.
inline Var mul(Tape& t, Var a, Var b) {
  detail::require(t.value(a).rows() == t.value(b).rows() &&
                      t.value(a).cols() == t.value(b).cols(),
                  "mul", detail::shape(t.value(a)) + " .* " + detail::shape(t.value(b)));
  return t.push(t.value(a).cwiseProduct(t.value(b)),
                t.requires_grad(a) || t.requires_grad(b),
                [a, b](Tape& tp, const Matrix& g) {
                  if (tp.requires_grad(a)) tp.grad(a) += g.cwiseProduct(tp.value(b));
                  if (tp.requires_grad(b)) tp.grad(b) += g.cwiseProduct(tp.value(a));
                });
}

inline Var scale(Tape& t, Var a, double s) {
  return t.push(t.value(a) * s, t.requires_grad(a),
                [a, s](Tape& tp, const Matrix& g) { tp.grad(a) += g * s; });
}

/// 1 - a.
inline Var one_minus(Tape& t, Var a) {
  return t.push((1.0 - t.value(a).array()).matrix(), t.requires_grad(a),
                [a](Tape& tp, const Matrix& g) { tp.grad(a) -= g; });
}

/// M + 1 r where r is a single row.
inline Var add_row(Tape& t, Var m, Var r) {
  const Matrix& M = t.value(m);
  const Matrix& R = t.value(r);
  detail::require(R.rows() == 1 && R.cols() == M.cols(), "add_row",
                  detail::shape(M) + " + row " + detail::shape(R));
  Matrix out = M.rowwise() + R.row(0);
  return t.push(std::move(out), t.requires_grad(m) || t.requires_grad(r),
                [m, r](Tape& tp, const Matrix& g) {
                  if (tp.requires_grad(m)) tp.grad(m) += g;
                  if (tp.requires_grad(r)) tp.grad(r) += g.colwise().sum();
                });
}

/// [a | b] along columns.
inline Var concat_cols(Tape& t, Var a, Var b) {
  const Matrix& A = t.value(a);
  const Matrix& B = t.value(b);
  detail::require(A.rows() == B.rows(), "concat_cols",
                  detail::shape(A) + " | " + detail::shape(B));
  Matrix out(A.rows(), A.cols() + B.cols());
  out << A, B;
  const auto ca = A.cols();
  const auto cb = B.cols();
  return t.push(std::move(out), t.requires_grad(a) || t.requires_grad(b),
                [a, b, ca, cb](Tape& tp, const Matrix& g) {
                  if (tp.requires_grad(a)) tp.grad(a) += g.leftCols(ca);
                  if (tp.requires_grad(b)) tp.grad(b) += g.rightCols(cb);
                });
}

/// Repeats a single row n times.
inline Var tile_rows(Tape& t, Var r, Eigen::Index n) {
  const Matrix& R = t.value(r);
  detail::require(R.rows() == 1, "tile_rows", "expects a row, got " + detail::shape(R));
  Matrix out = R.replicate(n, 1);
  return t.push(std::move(out), t.requires_grad(r),
                [r](Tape& tp, const Matrix& g) { tp.grad(r) += g.colwise().sum(); });
}

/// Column means as a single row. An empty input yields zeros.
inline Var mean_rows(Tape& t, Var m) {
  const Matrix& M = t.value(m);
  const auto n = M.rows();
  Matrix out = n > 0 ? Matrix(M.colwise().mean()) : Matrix::Zero(1, M.cols());
  return t.push(std::move(out), t.requires_grad(m),
                [m, n](Tape& tp, const Matrix& g) {
                  if (n > 0) tp.grad(m).rowwise() += g.row(0) / static_cast<double>(n);
                });
}

/// out.row(k) = M.row(idx[k]).
inline Var gather_rows(Tape& t, Var m, std::vector<Eigen::Index> idx) {
  const Matrix& M = t.value(m);
  Matrix out(static_cast<Eigen::Index>(idx.size()), M.cols());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    detail::require(idx[k] >= 0 && idx[k] < M.rows(), "gather_rows", "index out of range");
    out.row(static_cast<Eigen::Index>(k)) = M.row(idx[k]);
  }
  return t.push(std::move(out), t.requires_grad(m),
                [m, idx = std::move(idx)](Tape& tp, const Matrix& g) {
                  Matrix& gm = tp.grad(m);
                  for (std::size_t k = 0; k < idx.size(); ++k) {
                    gm.row(idx[k]) += g.row(static_cast<Eigen::Index>(k));
                  }
                });
}

inline Var sigmoid(Tape& t, Var a) {
  Matrix out = (1.0 / (1.0 + (-t.value(a).array()).exp())).matrix();
  Var y = t.push(out, t.requires_grad(a), [a, out](Tape& tp, const Matrix& g) {
    tp.grad(a).array() += g.array() * out.array() * (1.0 - out.array());
  });
  return y;
}

inline Var tanh(Tape& t, Var a) {
  Matrix out = t.value(a).array().tanh().matrix();
  return t.push(out, t.requires_grad(a), [a, out](Tape& tp, const Matrix& g) {
    tp.grad(a).array() += g.array() * (1.0 - out.array().square());
  });
}

inline Var relu(Tape& t, Var a) {
  const Matrix& A = t.value(a);
  Matrix out = A.cwiseMax(0.0);
  return t.push(std::move(out), t.requires_grad(a), [a](Tape& tp, const Matrix& g) {
    tp.grad(a).array() += (tp.value(a).array() > 0.0).select(g.array(), 0.0);
  });
}

/// x * sigmoid(x).
inline Var silu(Tape& t, Var a) {
  const Matrix& A = t.value(a);
  Eigen::ArrayXXd sig = 1.0 / (1.0 + (-A.array()).exp());
  Matrix out = (A.array() * sig).matrix();
  return t.push(std::move(out), t.requires_grad(a),
                [a, sig](Tape& tp, const Matrix& g) {
                  const auto x = tp.value(a).array();
                  tp.grad(a).array() += g.array() * (sig * (1.0 + x * (1.0 - sig)));
                });
}

/// Inverted dropout with keep probability 1 - rate.
inline Var dropout(Tape& t, Var a, double rate, Rng& rng) {
  if (rate <= 0.0) return a;
  const Matrix& A = t.value(a);
  Matrix mask(A.rows(), A.cols());
  const double keep = 1.0 - rate;
  for (Eigen::Index j = 0; j < A.cols(); ++j) {
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
      mask(i, j) = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
    }
  }
  Matrix out = A.cwiseProduct(mask);
  return t.push(std::move(out), t.requires_grad(a),
                [a, mask = std::move(mask)](Tape& tp, const Matrix& g) {
                  tp.grad(a) += g.cwiseProduct(mask);
                });
}

/// x W + 1 b.
inline Var linear(Tape& t, Var x, Var w, Var b) {
  return add_row(t, matmul(t, x, w), b);
}

/// S x for a fixed sparse S.
inline Var spmm(Tape& t, std::shared_ptr<const SparseMatrix> s, Var x) {
  const Matrix& X = t.value(x);
  detail::require(s->cols() == X.rows(), "spmm",
                  std::to_string(s->rows()) + "x" + std::to_string(s->cols()) +
                      " * " + detail::shape(X));
  Matrix out = (*s) * X;
  return t.push(std::move(out), t.requires_grad(x),
                [s, x](Tape& tp, const Matrix& g) {
                  tp.grad(x).noalias() += s->transpose() * g;
                });
}

/// Sum of squares of every entry of the given parameters' values, scaled.
inline Var sum_squares(Tape& t, Var a, double s) {
  const Matrix& A = t.value(a);
  Matrix out(1, 1);
  out(0, 0) = s * A.squaredNorm();
  return t.push(std::move(out), t.requires_grad(a),
                [a, s](Tape& tp, const Matrix& g) {
                  tp.grad(a) += (2.0 * s * g(0, 0)) * tp.value(a);
                });
}

/// Mean softmax cross-entropy over the rows listed in `rows` (all rows if
/// empty). Returns a 1x1 node; an empty selection with rows given yields 0.
inline Var softmax_cross_entropy(Tape& t, Var logits, std::vector<int> labels,
                                 std::vector<Eigen::Index> rows = {}) {
  const Matrix& L = t.value(logits);
  if (rows.empty()) {
    detail::require(static_cast<Eigen::Index>(labels.size()) == L.rows(),
                    "softmax_cross_entropy", "label count mismatch");
    rows.resize(labels.size());
    for (std::size_t k = 0; k < rows.size(); ++k) rows[k] = static_cast<Eigen::Index>(k);
  }
  const auto m = static_cast<double>(rows.size());
  Matrix probs(static_cast<Eigen::Index>(rows.size()), L.cols());
  double loss = 0.0;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto r = rows[k];
    const int y = labels.at(static_cast<std::size_t>(r));
    detail::require(y >= 0 && y < L.cols(), "softmax_cross_entropy", "label out of range");
    const double mx = L.row(r).maxCoeff();
    Eigen::RowVectorXd e = (L.row(r).array() - mx).exp();
    const double z = e.sum();
    probs.row(static_cast<Eigen::Index>(k)) = e / z;
    loss += -(L(r, y) - mx - std::log(z));
  }
  Matrix out(1, 1);
  out(0, 0) = rows.empty() ? 0.0 : loss / m;
  return t.push(std::move(out), t.requires_grad(logits),
                [logits, labels = std::move(labels), rows = std::move(rows),
                 probs = std::move(probs), m](Tape& tp, const Matrix& g) {
                  if (rows.empty()) return;
                  Matrix& gl = tp.grad(logits);
                  const double s = g(0, 0) / m;
                  for (std::size_t k = 0; k < rows.size(); ++k) {
                    const auto r = rows[k];
                    gl.row(r) += s * probs.row(static_cast<Eigen::Index>(k));
                    gl(r, labels[static_cast<std::size_t>(r)]) -= s;
                  }
                });
}

// ---------------------------------------------------------------------------
// Neighborhood attention

/// Compressed neighbor lists; row i's neighbors are cols[offsets[i] ..
/// offsets[i+1]).
struct NeighborIndex {
  std::vector<Eigen::Index> offsets;
  std::vector<Eigen::Index> cols;

  Eigen::Index nodes() const {
    return offsets.empty() ? 0 : static_cast<Eigen::Index>(offsets.size()) - 1;
  }
};

/// Multi-head dot-product attention restricted to graph neighbors:
///   out_i^h = sum_{j in N(i)} softmax_j(<q_i^h, k_j^h> / sqrt(dh)) v_j^h.
/// Nodes without neighbors receive a zero message.
inline Var neighbor_attention(Tape& t, Var q, Var k, Var v,
                              std::shared_ptr<const NeighborIndex> nb, int heads) {
  const Matrix& Q = t.value(q);
  const Matrix& K = t.value(k);
  const Matrix& V = t.value(v);
  const auto n = Q.rows();
  const auto width = Q.cols();
  detail::require(heads >= 1 && width % heads == 0, "neighbor_attention",
                  "width not divisible by heads");
  detail::require(K.rows() == n && V.rows() == n && K.cols() == width &&
                      V.cols() == width && nb->nodes() == n,
                  "neighbor_attention", "shape mismatch");
  const auto dh = width / heads;
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  const auto m = static_cast<Eigen::Index>(nb->cols.size());
  // alpha(e, h) for directed edge e = (i -> cols[e]).
  Matrix alpha(m, heads);
  Matrix out = Matrix::Zero(n, width);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto b = nb->offsets[i];
    const auto e = nb->offsets[i + 1];
    if (b == e) continue;
    for (int h = 0; h < heads; ++h) {
      const auto c0 = h * dh;
      double mx = -std::numeric_limits<double>::infinity();
      for (auto p = b; p < e; ++p) {
        const double s =
            Q.row(i).segment(c0, dh).dot(K.row(nb->cols[p]).segment(c0, dh)) * inv;
        alpha(p, h) = s;
        mx = std::max(mx, s);
      }
      double z = 0.0;
      for (auto p = b; p < e; ++p) {
        alpha(p, h) = std::exp(alpha(p, h) - mx);
        z += alpha(p, h);
      }
      for (auto p = b; p < e; ++p) {
        alpha(p, h) /= z;
        out.row(i).segment(c0, dh) += alpha(p, h) * V.row(nb->cols[p]).segment(c0, dh);
      }
    }
  }
  const bool rg = t.requires_grad(q) || t.requires_grad(k) || t.requires_grad(v);
  return t.push(
      std::move(out), rg,
      [q, k, v, nb, heads, dh, inv, alpha = std::move(alpha)](Tape& tp, const Matrix& g) {
        const Matrix& Q = tp.value(q);
        const Matrix& K = tp.value(k);
        const Matrix& V = tp.value(v);
        const auto n = Q.rows();
        Matrix gq = Matrix::Zero(Q.rows(), Q.cols());
        Matrix gk = Matrix::Zero(K.rows(), K.cols());
        Matrix gv = Matrix::Zero(V.rows(), V.cols());
        std::vector<double> dalpha;
        for (Eigen::Index i = 0; i < n; ++i) {
          const auto b = nb->offsets[i];
          const auto e = nb->offsets[i + 1];
          if (b == e) continue;
          dalpha.resize(static_cast<std::size_t>(e - b));
          for (int h = 0; h < heads; ++h) {
            const auto c0 = h * dh;
            const auto gi = g.row(i).segment(c0, dh);
            double weighted = 0.0;
            for (auto p = b; p < e; ++p) {
              const auto j = nb->cols[p];
              gv.row(j).segment(c0, dh) += alpha(p, h) * gi;
              const double da = gi.dot(V.row(j).segment(c0, dh));
              dalpha[static_cast<std::size_t>(p - b)] = da;
              weighted += alpha(p, h) * da;
            }
            for (auto p = b; p < e; ++p) {
              const auto j = nb->cols[p];
              const double de =
                  alpha(p, h) * (dalpha[static_cast<std::size_t>(p - b)] - weighted) * inv;
              gq.row(i).segment(c0, dh) += de * K.row(j).segment(c0, dh);
              gk.row(j).segment(c0, dh) += de * Q.row(i).segment(c0, dh);
            }
          }
        }
        if (tp.requires_grad(q)) tp.grad(q) += gq;
        if (tp.requires_grad(k)) tp.grad(k) += gk;
        if (tp.requires_grad(v)) tp.grad(v) += gv;
      });
}

// ---------------------------------------------------------------------------
// Optimizer

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // L2 added to the gradient
  double grad_clip = 0.0;     // global norm clip; 0 disables
};

/// Adam over a fixed, ordered set of parameters.
class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig cfg)
      : params_(std::move(params)), cfg_(cfg) {
    for (auto* p : params_) {
      m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

  void step() {
    ++step_;
    double scale = 1.0;
    if (cfg_.grad_clip > 0.0) {
      double sq = 0.0;
      for (auto* p : params_) sq += p->grad.squaredNorm();
      const double norm = std::sqrt(sq);
      if (norm > cfg_.grad_clip) scale = cfg_.grad_clip / norm;
    }
    const double bc1 = 1.0 - std::pow(cfg_.beta1, step_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, step_);
    for (std::size_t k = 0; k < params_.size(); ++k) {
      Parameter& p = *params_[k];
      Matrix g = p.grad * scale;
      if (cfg_.weight_decay > 0.0) g += cfg_.weight_decay * p.value;
      m_[k] = cfg_.beta1 * m_[k] + (1.0 - cfg_.beta1) * g;
      v_[k] = cfg_.beta2 * v_[k] + (1.0 - cfg_.beta2) * g.cwiseAbs2();
      p.value.array() -= cfg_.lr * (m_[k].array() / bc1) /
                         ((v_[k].array() / bc2).sqrt() + cfg_.eps);
    }
  }

  long steps() const noexcept { return step_; }

 private:
  std::vector<Parameter*> params_;
  AdamConfig cfg_;
  std::vector<Matrix> m_, v_;
  long step_ = 0;
};

}  // namespace gddm::ad

#endif  // GDDM_AUTODIFF_HPP

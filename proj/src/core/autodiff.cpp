#include "deepinv/core/autodiff.hpp"

#include <Eigen/Core>
#include <cmath>

#include "deepinv/core/errors.hpp"

namespace deepinv {

namespace {

using RowMatrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

ConstMatMap as_matrix(const Tensor& t) {
  return ConstMatMap(t.data().data(), static_cast<Eigen::Index>(t.rows()),
                     static_cast<Eigen::Index>(t.cols()));
}

MatMap as_matrix(Tensor& t) {
  return MatMap(t.data().data(), static_cast<Eigen::Index>(t.rows()),
                static_cast<Eigen::Index>(t.cols()));
}

Tape* common_tape(Var a, Var b) {
  if (a.tape() == nullptr || a.tape() != b.tape()) {
    throw ContractError("operands recorded on different tapes");
  }
  return a.tape();
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

void require_matrix(const char* op, const Tensor& t) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_string(t.shape()));
  }
}

Real sigmoid(Real x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

// ---------------------------------------------------------------------------
// Var / Gradients

const Tensor& Var::value() const { return tape_->value(id_); }

bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Tensor Gradients::of(const Parameter& p) const {
  if (const Tensor* g = find(p)) return *g;
  return Tensor::zeros(p.value.shape());
}

const Tensor* Gradients::find(const Parameter& p) const {
  auto it = grads_.find(&p);
  return it == grads_.end() ? nullptr : &it->second;
}

// ---------------------------------------------------------------------------
// Tape

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, false, nullptr, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::input(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, true, nullptr, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
  nodes_.push_back(Node{p.value, {}, true, &p, {}});
  param_nodes_.emplace(&p, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  bool needs = false;
  for (Var in : inputs) {
    if (in.tape() != this) throw ContractError("operand recorded on a different tape");
    needs = needs || nodes_[in.id()].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs, nullptr, needs ? std::move(backward) : BackwardFn{}});
  return Var(this, nodes_.size() - 1);
}

Tensor* Tape::grad_sink(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return nullptr;
  if (n.grad.shape() != n.value.shape() || n.grad.numel() != n.value.numel()) {
    n.grad = Tensor::zeros(n.value.shape());
  }
  return &n.grad;
}

Gradients Tape::backward(Var loss) {
  if (loss.tape() != this) throw ContractError("backward: loss recorded on a different tape");
  if (loss.value().numel() != 1) {
    throw ContractError("backward: loss must be scalar, got shape " + shape_string(loss.shape()));
  }
  for (auto& n : nodes_) n.grad = Tensor();
  if (Tensor* seed = grad_sink(loss.id())) (*seed)[0] = 1.0;

  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.empty()) continue;
    // Copy out: the rule may grow other nodes' buffers but never this one.
    const Tensor g = n.grad;
    n.backward(*this, g);
  }

  Gradients out;
  for (const auto& [param, id] : param_nodes_) {
    const Node& n = nodes_[id];
    out.set(*param, n.grad.empty() ? Tensor::zeros(n.value.shape()) : n.grad);
  }
  return out;
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  return n.grad.empty() ? Tensor::zeros(n.value.shape()) : n.grad;
}

// ---------------------------------------------------------------------------
// Elementwise

Var add(Var a, Var b) {
  Tape* tape = common_tape(a, b);
  require_same_shape("add", a.value(), b.value());
  Tensor out = a.value();
  const auto bd = b.value().data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] += bd[i];
  const auto ia = a.id(), ib = b.id();
  return tape->record(std::move(out), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    for (auto id : {ia, ib}) {
      if (Tensor* s = t.grad_sink(id)) {
        for (std::size_t i = 0; i < g.numel(); ++i) (*s)[i] += g[i];
      }
    }
  });
}

Var sub(Var a, Var b) {
  Tape* tape = common_tape(a, b);
  require_same_shape("sub", a.value(), b.value());
  Tensor out = a.value();
  const auto bd = b.value().data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] -= bd[i];
  const auto ia = a.id(), ib = b.id();
  return tape->record(std::move(out), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    if (Tensor* s = t.grad_sink(ia)) {
      for (std::size_t i = 0; i < g.numel(); ++i) (*s)[i] += g[i];
    }
    if (Tensor* s = t.grad_sink(ib)) {
      for (std::size_t i = 0; i < g.numel(); ++i) (*s)[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  Tape* tape = common_tape(a, b);
  require_same_shape("mul", a.value(), b.value());
  Tensor out = a.value();
  const auto bd = b.value().data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] *= bd[i];
  const auto ia = a.id(), ib = b.id();
  return tape->record(std::move(out), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    const Tensor& av = t.value(ia);
    const Tensor& bv = t.value(ib);
    if (Tensor* s = t.grad_sink(ia)) {
      for (std::size_t i = 0; i < g.numel(); ++i) (*s)[i] += g[i] * bv[i];
    }
    if (Tensor* s = t.grad_sink(ib)) {
      for (std::size_t i = 0; i < g.numel(); ++i) (*s)[i] += g[i] * av[i];
    }
  });
}

Var div(Var a, Var b) {
  Tape* tape = common_tape(a, b);
  require_same_shape("div", a.value(), b.value());
  for (Real v : b.value().data()) {
    if (std::abs(v) < kMinDivisor) throw DomainError("div: divisor magnitude below 1e-12");
  }
  Tensor out = a.value();
  const auto bd = b.value().data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] /= bd[i];
  const auto ia = a.id(), ib = b.id();
  return tape->record(std::move(out), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    const Tensor& av = t.value(ia);
    const Tensor& bv = t.value(ib);
    if (Tensor* s = t.grad_sink(ia)) {
      for (std::size_t i = 0; i < g.numel(); ++i) (*s)[i] += g[i] / bv[i];
    }
    if (Tensor* s = t.grad_sink(ib)) {
      for (std::size_t i = 0; i < g.numel(); ++i) (*s)[i] -= g[i] * av[i] / (bv[i] * bv[i]);
    }
  });
}

Var add(Var a, Real b) {
  Tensor out = a.value();
  for (auto& v : out.data()) v += b;
  const auto ia = a.id();
  return a.tape()->record(std::move(out), {a}, [ia](Tape& t, const Tensor& g) {
    if (Tensor* s = t.grad_sink(ia)) {
      for (std::size_t i = 0; i < g.numel(); ++i) (*s)[i] += g[i];
    }
  });
}

Var mul(Var a, Real b) {
  Tensor out = a.value();
  for (auto& v : out.data()) v *= b;
  const auto ia = a.id();
  return a.tape()->record(std::move(out), {a}, [ia, b](Tape& t, const Tensor& g) {
    if (Tensor* s = t.grad_sink(ia)) {
      for (std::size_t i = 0; i < g.numel(); ++i) (*s)[i] += g[i] * b;
    }
  });
}

Var div(Var a, Real b) {
  if (std::abs(b) < kMinDivisor) throw DomainError("div: divisor magnitude below 1e-12");
  return mul(a, 1.0 / b);
}

Var silu(Var x) {
  Tensor out = x.value();
  for (auto& v : out.data()) v = v * sigmoid(v);
  const auto ix = x.id();
  return x.tape()->record(std::move(out), {x}, [ix](Tape& t, const Tensor& g) {
    if (Tensor* s = t.grad_sink(ix)) {
      const Tensor& xv = t.value(ix);
      for (std::size_t i = 0; i < g.numel(); ++i) {
        const Real sg = sigmoid(xv[i]);
        (*s)[i] += g[i] * sg * (1.0 + xv[i] * (1.0 - sg));
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Matrix ops

Var matmul(Var a, Var b) {
  Tape* tape = common_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix("matmul", av);
  require_matrix("matmul", bv);
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul: inner extents differ, " + shape_string(av.shape()) + " . " +
                         shape_string(bv.shape()));
  }
  Tensor out({av.rows(), bv.cols()});
  as_matrix(out).noalias() = as_matrix(av) * as_matrix(bv);
  const auto ia = a.id(), ib = b.id();
  return tape->record(std::move(out), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    const auto gm = as_matrix(g);
    if (Tensor* s = t.grad_sink(ia)) as_matrix(*s).noalias() += gm * as_matrix(t.value(ib)).transpose();
    if (Tensor* s = t.grad_sink(ib)) as_matrix(*s).noalias() += as_matrix(t.value(ia)).transpose() * gm;
  });
}

Var add_row(Var x, Var bias) {
  Tape* tape = common_tape(x, bias);
  const Tensor& xv = x.value();
  require_matrix("add_row", xv);
  if (bias.value().numel() != xv.cols()) {
    throw DimensionError("add_row: bias " + shape_string(bias.shape()) + " vs matrix " +
                         shape_string(xv.shape()));
  }
  Tensor out = xv;
  const std::size_t m = xv.rows(), n = xv.cols();
  const auto bd = bias.value().data();
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < n; ++c) out.at(r, c) += bd[c];
  }
  const auto ix = x.id(), ib = bias.id();
  return tape->record(std::move(out), {x, bias}, [ix, ib, m, n](Tape& t, const Tensor& g) {
    if (Tensor* s = t.grad_sink(ix)) {
      for (std::size_t i = 0; i < g.numel(); ++i) (*s)[i] += g[i];
    }
    if (Tensor* s = t.grad_sink(ib)) {
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < n; ++c) (*s)[c] += g.at(r, c);
      }
    }
  });
}

Var linear(Var x, Var w, Var b) { return add_row(matmul(x, w), b); }

Var layer_norm(Var x, Var gain, Var bias) {
  Tape* tape = common_tape(x, gain);
  common_tape(x, bias);
  const Tensor& xv = x.value();
  if (xv.rank() == 0) throw DimensionError("layer_norm: scalar input");
  const std::size_t d = xv.shape().back();
  if (gain.value().numel() != d || bias.value().numel() != d) {
    throw DimensionError("layer_norm: last extent " + std::to_string(d) + " vs gain " +
                         shape_string(gain.shape()) + " / bias " + shape_string(bias.shape()));
  }
  const std::size_t rows = xv.numel() / d;
  Tensor out(xv.shape());
  Tensor normed(xv.shape());
  std::vector<Real> inv_std(rows);
  const auto gd = gain.value().data();
  const auto bd = bias.value().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* row = xv.data().data() + r * d;
    Real mean = 0;
    for (std::size_t c = 0; c < d; ++c) mean += row[c];
    mean /= static_cast<Real>(d);
    Real var = 0;
    for (std::size_t c = 0; c < d; ++c) var += (row[c] - mean) * (row[c] - mean);
    var /= static_cast<Real>(d);
    inv_std[r] = 1.0 / std::sqrt(var + kLayerNormEps);
    for (std::size_t c = 0; c < d; ++c) {
      const Real xn = (row[c] - mean) * inv_std[r];
      normed[r * d + c] = xn;
      out[r * d + c] = xn * gd[c] + bd[c];
    }
  }
  const auto ix = x.id(), ig = gain.id(), ib = bias.id();
  return tape->record(
      std::move(out), {x, gain, bias},
      [ix, ig, ib, d, rows, normed = std::move(normed), inv_std = std::move(inv_std)](Tape& t, const Tensor& g) {
        const Tensor& gv = t.value(ig);
        if (Tensor* s = t.grad_sink(ig)) {
          for (std::size_t i = 0; i < g.numel(); ++i) (*s)[i % d] += g[i] * normed[i];
        }
        if (Tensor* s = t.grad_sink(ib)) {
          for (std::size_t i = 0; i < g.numel(); ++i) (*s)[i % d] += g[i];
        }
        if (Tensor* s = t.grad_sink(ix)) {
          const Real inv_d = 1.0 / static_cast<Real>(d);
          for (std::size_t r = 0; r < rows; ++r) {
            Real mean_dy = 0, mean_dy_xn = 0;
            for (std::size_t c = 0; c < d; ++c) {
              const Real dy = g[r * d + c] * gv[c];
              mean_dy += dy;
              mean_dy_xn += dy * normed[r * d + c];
            }
            mean_dy *= inv_d;
            mean_dy_xn *= inv_d;
            for (std::size_t c = 0; c < d; ++c) {
              const Real dy = g[r * d + c] * gv[c];
              (*s)[r * d + c] += inv_std[r] * (dy - mean_dy - normed[r * d + c] * mean_dy_xn);
            }
          }
        }
      });
}

Var mean_squared(Var x) {
  const Tensor& xv = x.value();
  if (xv.empty()) throw DomainError("mean_squared: empty tensor");
  Real acc = 0;
  for (Real v : xv.data()) acc += v * v;
  const Real n = static_cast<Real>(xv.numel());
  const auto ix = x.id();
  return x.tape()->record(Tensor::scalar(acc / n), {x}, [ix, n](Tape& t, const Tensor& g) {
    if (Tensor* s = t.grad_sink(ix)) {
      const Tensor& xv = t.value(ix);
      const Real k = 2.0 * g[0] / n;
      for (std::size_t i = 0; i < xv.numel(); ++i) (*s)[i] += k * xv[i];
    }
  });
}

Var sum(Var x) {
  Real acc = 0;
  for (Real v : x.value().data()) acc += v;
  const auto ix = x.id();
  return x.tape()->record(Tensor::scalar(acc), {x}, [ix](Tape& t, const Tensor& g) {
    if (Tensor* s = t.grad_sink(ix)) {
      for (auto& v : s->data()) v += g[0];
    }
  });
}

Var concat_cols(Var a, Var b) {
  Tape* tape = common_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix("concat_cols", av);
  require_matrix("concat_cols", bv);
  if (av.rows() != bv.rows()) {
    throw DimensionError("concat_cols: row counts differ, " + shape_string(av.shape()) + " vs " +
                         shape_string(bv.shape()));
  }
  const std::size_t m = av.rows(), p = av.cols(), q = bv.cols();
  Tensor out({m, p + q});
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < p; ++c) out.at(r, c) = av.at(r, c);
    for (std::size_t c = 0; c < q; ++c) out.at(r, p + c) = bv.at(r, c);
  }
  const auto ia = a.id(), ib = b.id();
  return tape->record(std::move(out), {a, b}, [ia, ib, m, p, q](Tape& t, const Tensor& g) {
    if (Tensor* s = t.grad_sink(ia)) {
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < p; ++c) s->at(r, c) += g.at(r, c);
    }
    if (Tensor* s = t.grad_sink(ib)) {
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < q; ++c) s->at(r, c) += g.at(r, p + c);
    }
  });
}

Var slice_cols(Var x, std::size_t begin, std::size_t end) {
  const Tensor& xv = x.value();
  require_matrix("slice_cols", xv);
  if (begin > end || end > xv.cols()) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") outside " + shape_string(xv.shape()));
  }
  const std::size_t m = xv.rows(), w = end - begin;
  Tensor out({m, w});
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < w; ++c) out.at(r, c) = xv.at(r, begin + c);
  const auto ix = x.id();
  return x.tape()->record(std::move(out), {x}, [ix, m, w, begin](Tape& t, const Tensor& g) {
    if (Tensor* s = t.grad_sink(ix)) {
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < w; ++c) s->at(r, begin + c) += g.at(r, c);
    }
  });
}

Var gather_rows(Var table, std::vector<std::size_t> indices) {
  const Tensor& tv = table.value();
  require_matrix("gather_rows", tv);
  const std::size_t n = tv.cols();
  Tensor out({indices.size(), n});
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= tv.rows()) throw DimensionError("gather_rows: index out of range");
    for (std::size_t c = 0; c < n; ++c) out.at(r, c) = tv.at(indices[r], c);
  }
  const auto it = table.id();
  return table.tape()->record(std::move(out), {table},
                              [it, n, indices = std::move(indices)](Tape& t, const Tensor& g) {
                                if (Tensor* s = t.grad_sink(it)) {
                                  for (std::size_t r = 0; r < indices.size(); ++r)
                                    for (std::size_t c = 0; c < n; ++c) s->at(indices[r], c) += g.at(r, c);
                                }
                              });
}

}  // namespace deepinv

// SPDX-License-Identifier: Apache-2.0
#include "nsnet/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <utility>

#include "nsnet/error.hpp"
#include "nsnet/numerics.hpp"

namespace nsnet {

ParamTensor::ParamTensor(std::string name_, Array value_)
    : name(std::move(name_)), value(std::move(value_)), grad(value.shape()) {}

void ParamTensor::zero_grad() {
  if (grad.shape() != value.shape()) grad = Array(value.shape());
  std::fill(grad.data().begin(), grad.data().end(), 0.0);
}

const Array& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Array value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(ParamTensor& p) {
  nodes_.push_back(Node{p.value, {}, {}, &p, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Array value, std::span<const Var> inputs, BackwardFn fn) {
  bool needs = false;
  for (const auto& v : inputs) {
    if (&v.tape() != this) throw ContractError("operation mixes variables from different tapes");
    needs = needs || nodes_[v.id()].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(fn) : BackwardFn{}, nullptr, needs});
  return Var(this, nodes_.size() - 1);
}

Array& Tape::grad(std::size_t id) {
  auto& n = nodes_[id];
  if (n.grad.shape() != n.value.shape()) n.grad = Array(n.value.shape());
  return n.grad;
}

void Tape::backward(Var loss) {
  if (&loss.tape() != this) throw ContractError("backward called with a variable from another tape");
  if (loss.value().size() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
  }
  grad(loss.id())[0] = 1.0;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    auto& n = nodes_[id];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.param != nullptr) {
      auto& pg = n.param->grad;
      if (pg.shape() != n.param->value.shape()) pg = Array(n.param->value.shape());
      for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += n.grad[i];
    } else if (n.backward) {
      n.backward(*this, n.grad, n.value);
    }
  }
  clear();
}

namespace ag {

namespace {

Array as_matrix(const Array& a, bool column_if_vector) {
  if (a.rank() == 2) return a;
  if (a.rank() == 1) {
    return column_if_vector ? Array({a.rows(), 1}, a.data()) : Array({1, a.rows()}, a.data());
  }
  throw ShapeError("expected a vector or matrix, got " + shape_str(a.shape()));
}

/// dst += s * g, only when v participates in differentiation.
void accumulate(Tape& t, Var v, const Array& g, double s = 1.0) {
  if (!t.requires_grad(v)) return;
  auto& dst = t.grad(v);
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += s * g[i];
}

void require_same_shape(Var a, Var b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + " shape mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void require_matrix(Var a, const char* op) {
  if (a.value().rank() != 2) throw ShapeError(std::string(op) + " expects a matrix, got " + shape_str(a.shape()));
}

}  // namespace

Var matmul(Var a, Var b) {
  Array out = nsnet::matmul(a.value(), b.value());
  Var inputs[] = {a, b};
  return a.tape().record(std::move(out), inputs, [a, b](Tape& t, const Array& g, const Array&) {
    if (t.requires_grad(a)) accumulate(t, a, nsnet::matmul(g, nsnet::transpose(as_matrix(b.value(), true))));
    if (t.requires_grad(b)) accumulate(t, b, nsnet::matmul(nsnet::transpose(as_matrix(a.value(), false)), g));
  });
}

Var transpose(Var a) {
  Array out = nsnet::transpose(a.value());
  Var inputs[] = {a};
  return a.tape().record(std::move(out), inputs,
                         [a](Tape& t, const Array& g, const Array&) { accumulate(t, a, nsnet::transpose(g)); });
}

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  Array out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  Var inputs[] = {a, b};
  return a.tape().record(std::move(out), inputs, [a, b](Tape& t, const Array& g, const Array&) {
    accumulate(t, a, g);
    accumulate(t, b, g);
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  Array out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  Var inputs[] = {a, b};
  return a.tape().record(std::move(out), inputs, [a, b](Tape& t, const Array& g, const Array&) {
    accumulate(t, a, g);
    accumulate(t, b, g, -1.0);
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a, b, "mul");
  Array out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  Var inputs[] = {a, b};
  return a.tape().record(std::move(out), inputs, [a, b](Tape& t, const Array& g, const Array&) {
    if (t.requires_grad(a)) {
      auto& dst = t.grad(a);
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i] * b.value()[i];
    }
    if (t.requires_grad(b)) {
      auto& dst = t.grad(b);
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i] * a.value()[i];
    }
  });
}

Var scale(Var a, double s) { return affine(a, s, 0.0); }

Var affine(Var a, double s, double c) {
  Array out = a.value();
  for (auto& v : out.data()) v = s * v + c;
  Var inputs[] = {a};
  return a.tape().record(std::move(out), inputs,
                         [a, s](Tape& t, const Array& g, const Array&) { accumulate(t, a, g, s); });
}

Var add_row_bias(Var x, Var b) {
  const Array& xv = x.value();
  const std::size_t n = xv.rank() == 2 ? xv.cols() : xv.size();
  if (b.value().size() != n) {
    throw ShapeError("bias " + shape_str(b.shape()) + " does not match rows of " + shape_str(x.shape()));
  }
  Array out = xv;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i % n];
  Var inputs[] = {x, b};
  return x.tape().record(std::move(out), inputs, [x, b, n](Tape& t, const Array& g, const Array&) {
    accumulate(t, x, g);
    if (t.requires_grad(b)) {
      auto& dst = t.grad(b);
      for (std::size_t i = 0; i < g.size(); ++i) dst[i % n] += g[i];
    }
  });
}

Var sigmoid(Var a) {
  Array out = a.value();
  for (auto& v : out.data()) {
    const double e = std::exp(-std::abs(v));
    v = v >= 0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
  }
  Var inputs[] = {a};
  return a.tape().record(std::move(out), inputs, [a](Tape& t, const Array& g, const Array& y) {
    auto& dst = t.grad(a);
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Var gelu(Var a) {
  Array out = a.value();
  for (auto& v : out.data()) v = 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
  Var inputs[] = {a};
  return a.tape().record(std::move(out), inputs, [a](Tape& t, const Array& g, const Array&) {
    auto& dst = t.grad(a);
    const auto& x = a.value();
    for (std::size_t i = 0; i < dst.size(); ++i) {
      const double cdf = 0.5 * (1.0 + std::erf(x[i] * std::numbers::sqrt2 / 2.0));
      const double pdf = std::exp(-0.5 * x[i] * x[i]) * std::numbers::inv_sqrtpi / std::numbers::sqrt2;
      dst[i] += g[i] * (cdf + x[i] * pdf);
    }
  });
}

Var softmax_rows(Var a) {
  require_matrix(a, "softmax_rows");
  Array out = nsnet::softmax(a.value(), 1);
  Var inputs[] = {a};
  return a.tape().record(std::move(out), inputs, [a](Tape& t, const Array& g, const Array& y) {
    auto& dst = t.grad(a);
    const std::size_t n = y.cols();
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g[r * n + j] * y[r * n + j];
      for (std::size_t j = 0; j < n; ++j) dst[r * n + j] += y[r * n + j] * (g[r * n + j] - dot);
    }
  });
}

Var layer_norm(Var x, Var gain, Var bias) {
  Array out = nsnet::layer_norm(x.value(), gain.value(), bias.value());
  Var inputs[] = {x, gain, bias};
  return x.tape().record(std::move(out), inputs, [x, gain, bias](Tape& t, const Array& g, const Array&) {
    const Array& xv = x.value();
    const std::size_t d = xv.cols();
    const double dd = static_cast<double>(d);
    std::vector<double> xhat(d), dxhat(d);
    for (std::size_t r = 0; r < xv.rows(); ++r) {
      auto in = xv.row(r);
      double mean = 0.0;
      for (double v : in) mean += v;
      mean /= dd;
      double var = 0.0;
      for (double v : in) var += (v - mean) * (v - mean);
      var /= dd;
      const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
      double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        xhat[j] = (in[j] - mean) * inv;
        const double gj = g[r * d + j];
        dxhat[j] = gj * gain.value()[j];
        sum_dxhat += dxhat[j];
        sum_dxhat_xhat += dxhat[j] * xhat[j];
        if (t.requires_grad(gain)) t.grad(gain)[j] += gj * xhat[j];
        if (t.requires_grad(bias)) t.grad(bias)[j] += gj;
      }
      if (t.requires_grad(x)) {
        auto& dst = t.grad(x);
        for (std::size_t j = 0; j < d; ++j)
          dst[r * d + j] += inv / dd * (dd * dxhat[j] - sum_dxhat - xhat[j] * sum_dxhat_xhat);
      }
    }
  });
}

Var dropout(Var a, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ContractError("dropout rate must lie in [0, 1)");
  if (rate == 0.0) return a;
  std::bernoulli_distribution keep(1.0 - rate);
  const double s = 1.0 / (1.0 - rate);
  Array mask(a.shape());
  for (auto& m : mask.data()) m = keep(rng) ? s : 0.0;
  return mul(a, a.tape().constant(std::move(mask)));
}

Var slice_rows(Var a, std::size_t start, std::size_t count) {
  const Array& av = a.value();
  if (av.rank() != 2 || start + count > av.rows()) {
    throw ShapeError("row slice [" + std::to_string(start) + ", " + std::to_string(start + count) + ") out of " +
                     shape_str(a.shape()));
  }
  const std::size_t n = av.cols();
  Array out({count, n},
            std::vector<double>(av.data().begin() + start * n, av.data().begin() + (start + count) * n));
  Var inputs[] = {a};
  return a.tape().record(std::move(out), inputs, [a, start, n](Tape& t, const Array& g, const Array&) {
    auto& dst = t.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) dst[start * n + i] += g[i];
  });
}

Var slice_cols(Var a, std::size_t start, std::size_t count) {
  const Array& av = a.value();
  if (av.rank() != 2 || start + count > av.cols()) {
    throw ShapeError("column slice [" + std::to_string(start) + ", " + std::to_string(start + count) + ") out of " +
                     shape_str(a.shape()));
  }
  const std::size_t rows = av.rows(), n = av.cols();
  Array out({rows, count});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < count; ++c) out.at(r, c) = av.at(r, start + c);
  Var inputs[] = {a};
  return a.tape().record(std::move(out), inputs,
                         [a, start, count, rows, n](Tape& t, const Array& g, const Array&) {
                           auto& dst = t.grad(a);
                           for (std::size_t r = 0; r < rows; ++r)
                             for (std::size_t c = 0; c < count; ++c) dst[r * n + start + c] += g[r * count + c];
                         });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_cols needs at least one input");
  const std::size_t rows = parts[0].value().rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.value().rank() != 2 || p.value().rows() != rows) {
      throw ShapeError("concat_cols row mismatch at " + shape_str(p.shape()));
    }
    total += p.value().cols();
  }
  Array out({rows, total});
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t c = p.value().cols();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < c; ++j) out.at(r, off + j) = p.value().at(r, j);
    off += c;
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts[0].tape().record(std::move(out), inputs, [inputs, rows, total](Tape& t, const Array& g, const Array&) {
    std::size_t off = 0;
    for (const auto& p : inputs) {
      const std::size_t c = p.value().cols();
      if (t.requires_grad(p)) {
        auto& dst = t.grad(p);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < c; ++j) dst[r * c + j] += g[r * total + off + j];
      }
      off += c;
    }
  });
}

Var reshape(Var a, Shape shape) {
  Array out(std::move(shape), a.value().data());
  Var inputs[] = {a};
  return a.tape().record(std::move(out), inputs,
                         [a](Tape& t, const Array& g, const Array&) { accumulate(t, a, g); });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  Var inputs[] = {a};
  return a.tape().record(Array::scalar(s), inputs, [a](Tape& t, const Array& g, const Array&) {
    auto& dst = t.grad(a);
    for (auto& v : dst.data()) v += g[0];
  });
}

Var l1_normalize(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) {
    if (v < 0.0) throw ContractError("l1_normalize expects nonnegative input");
    s += v;
  }
  const bool floored = s < kNormFloor;
  const double denom = floored ? kNormFloor : s;
  Array out = a.value();
  for (auto& v : out.data()) v /= denom;
  Var inputs[] = {a};
  return a.tape().record(std::move(out), inputs, [a, denom, floored](Tape& t, const Array& g, const Array& y) {
    auto& dst = t.grad(a);
    double dot = 0.0;
    if (!floored)
      for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * y[i];
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += (g[i] - dot) / denom;
  });
}

Var soft_cross_entropy_rows(Var logits, const Array& targets) {
  const Array& z = logits.value();
  if (z.rank() != 2 && z.rank() != 1) throw ShapeError("soft_cross_entropy_rows expects a vector or matrix");
  if (z.size() != targets.size() || z.cols() != targets.cols()) {
    throw ShapeError("soft_cross_entropy_rows shape mismatch: logits " + shape_str(z.shape()) + " vs targets " +
                     shape_str(targets.shape()));
  }
  const std::size_t n = z.rank() == 2 ? z.cols() : z.size();
  const std::size_t rows = z.size() / n;
  Array probs(z.shape());
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    std::span<const double> zr(z.data().data() + r * n, n);
    std::span<const double> tr(targets.data().data() + r * n, n);
    loss += soft_cross_entropy(zr, tr);
    auto p = nsnet::softmax(zr);
    std::copy(p.begin(), p.end(), probs.data().begin() + r * n);
  }
  Var inputs[] = {logits};
  return logits.tape().record(Array::scalar(loss), inputs,
                              [logits, probs = std::move(probs), targets](Tape& t, const Array& g, const Array&) {
                                auto& dst = t.grad(logits);
                                for (std::size_t i = 0; i < dst.size(); ++i)
                                  dst[i] += g[0] * (probs[i] - targets[i]);
                              });
}

}  // namespace ag
}  // namespace nsnet

// SPDX-License-Identifier: Apache-2.0
#include "nsnet/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "nsnet/error.hpp"

namespace nsnet {

namespace {

Shape as_matrix_shape(const Array& a) {
  if (a.rank() == 1) return {1, a.rows()};
  if (a.rank() == 2) return a.shape();
  throw ShapeError("expected a vector or matrix, got " + shape_str(a.shape()));
}

}  // namespace

Array matmul(const Array& a, const Array& b) {
  const Shape sa = as_matrix_shape(a);
  const Shape sb = b.rank() == 1 ? Shape{b.rows(), 1} : as_matrix_shape(b);
  if (sa[1] != sb[0]) {
    throw ShapeError("matmul inner dimensions disagree: " + shape_str(a.shape()) + " . " + shape_str(b.shape()));
  }
  const std::size_t m = sa[0], k = sa[1], n = sb[1];
  Array out({m, n});
  const auto& ad = a.data();
  const auto& bd = b.data();
  auto& od = out.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ad[i * k + p];
      const double* brow = bd.data() + p * n;
      double* orow = od.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  return out;
}

Array transpose(const Array& a) {
  const Shape s = as_matrix_shape(a);
  Array out({s[1], s[0]});
  for (std::size_t i = 0; i < s[0]; ++i)
    for (std::size_t j = 0; j < s[1]; ++j) out.data()[j * s[0] + i] = a.data()[i * s[1] + j];
  return out;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    z += out[i];
  }
  for (auto& v : out) v /= z;
  return out;
}

std::vector<double> log_softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double v : logits) z += std::exp(v - mx);
  const double lz = mx + std::log(z);
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lz;
  return out;
}

Array softmax(const Array& x, std::size_t axis) {
  if (x.rank() == 1) {
    if (axis != 0) throw ShapeError("softmax axis " + std::to_string(axis) + " invalid for a vector");
    return Array(x.shape(), softmax(std::span<const double>(x.data())));
  }
  if (x.rank() != 2 || axis > 1) {
    throw ShapeError("softmax axis " + std::to_string(axis) + " invalid for " + shape_str(x.shape()));
  }
  if (axis == 1) {
    Array out(x.shape());
    for (std::size_t r = 0; r < x.rows(); ++r) {
      auto s = softmax(x.row(r));
      std::copy(s.begin(), s.end(), out.row(r).begin());
    }
    return out;
  }
  return transpose(softmax(transpose(x), 1));
}

Array layer_norm(const Array& x, const Array& gain, const Array& bias) {
  if (x.rank() != 2) throw ShapeError("layer_norm expects a matrix, got " + shape_str(x.shape()));
  const std::size_t d = x.cols();
  if (d < 2) throw ContractError("layer_norm needs at least 2 features per row");
  if (gain.size() != d || bias.size() != d) {
    throw ShapeError("layer_norm affine shapes " + shape_str(gain.shape()) + "/" + shape_str(bias.shape()) +
                     " do not match row width " + std::to_string(d));
  }
  Array out(x.shape());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row(r);
    double mean = 0.0;
    for (double v : in) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (double v : in) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    auto o = out.row(r);
    for (std::size_t j = 0; j < d; ++j) o[j] = (in[j] - mean) * inv * gain[j] + bias[j];
  }
  return out;
}

void check_distribution(std::span<const double> target, const char* what) {
  double sum = 0.0;
  for (double v : target) {
    if (!(v >= 0.0)) throw ContractError(std::string(what) + " has a negative or non-finite entry");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ContractError(std::string(what) + " sums to " + std::to_string(sum) + ", expected 1");
  }
}

double soft_cross_entropy(std::span<const double> logits, std::span<const double> target) {
  if (logits.size() != target.size()) {
    throw ShapeError("soft_cross_entropy length mismatch: " + std::to_string(logits.size()) + " logits vs " +
                     std::to_string(target.size()) + " targets");
  }
  check_distribution(target);
  const auto ls = log_softmax(logits);
  double loss = 0.0;
  for (std::size_t j = 0; j < ls.size(); ++j)
    if (target[j] != 0.0) loss -= target[j] * ls[j];
  return loss;
}

}  // namespace nsnet

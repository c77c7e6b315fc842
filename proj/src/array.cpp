// SPDX-License-Identifier: Apache-2.0
#include "nsnet/array.hpp"

#include <cmath>
#include <sstream>
#include <utility>

#include "nsnet/error.hpp"

namespace nsnet {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

Array::Array(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Array::Array(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != data_.size()) {
    throw ShapeError("array shape " + shape_str(shape_) + " does not hold " + std::to_string(data_.size()) +
                     " values");
  }
}

Array Array::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Array({n}, std::move(values));
}

Array Array::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Array({rows, cols}, std::move(values));
}

Array Array::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  std::vector<double> values;
  std::size_t cols = rows.size() ? rows.begin()->size() : 0;
  for (const auto& r : rows) {
    if (r.size() != cols) throw ShapeError("ragged matrix literal");
    values.insert(values.end(), r.begin(), r.end());
  }
  return Array({rows.size(), cols}, std::move(values));
}

Array Array::gather_rows(std::span<const std::size_t> indices) const {
  if (shape_.empty()) throw ShapeError("gather_rows on a rank-0 array");
  const std::size_t stride = size() / shape_[0];
  Shape out_shape = shape_;
  out_shape[0] = indices.size();
  std::vector<double> out;
  out.reserve(indices.size() * stride);
  for (auto idx : indices) {
    if (idx >= shape_[0]) {
      throw ShapeError("row index " + std::to_string(idx) + " out of range for " + shape_str(shape_));
    }
    out.insert(out.end(), data_.begin() + idx * stride, data_.begin() + (idx + 1) * stride);
  }
  return Array(std::move(out_shape), std::move(out));
}

bool Array::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace nsnet

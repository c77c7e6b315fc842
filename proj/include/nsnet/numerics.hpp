// SPDX-License-Identifier: Apache-2.0
//
// Plain (untracked) array kernels. The tape-recorded versions in autograd.hpp
// reuse these for their forward pass.
#pragma once

#include <cstddef>
#include <span>

#include "nsnet/array.hpp"

namespace nsnet {

inline constexpr double kLayerNormEps = 1e-5;
inline constexpr double kNormFloor = 1e-12;

/// [M x K] . [K x N] -> [M x N]. Vectors are treated as single rows.
Array matmul(const Array& a, const Array& b);

Array transpose(const Array& a);

/// Softmax along `axis` (0 or 1 for matrices, 0 for vectors), max-subtracted.
Array softmax(const Array& x, std::size_t axis);

/// Softmax of a single vector of logits.
std::vector<double> softmax(std::span<const double> logits);

std::vector<double> log_softmax(std::span<const double> logits);

/// Row-wise layer normalization with population variance, then affine.
Array layer_norm(const Array& x, const Array& gain, const Array& bias);

/// Throws ContractError unless `target` is nonnegative and sums to 1 within 1e-9.
void check_distribution(std::span<const double> target, const char* what = "target");

/// -sum_j target_j * log softmax(logits)_j
double soft_cross_entropy(std::span<const double> logits, std::span<const double> target);

}  // namespace nsnet

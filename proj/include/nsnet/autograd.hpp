// SPDX-License-Identifier: Apache-2.0
//
// Define-by-run reverse-mode differentiation. A Tape records every operation
// of one forward pass; backward() walks it in reverse, deposits gradients on
// the ParamTensors that were read, and clears the tape.
#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "nsnet/array.hpp"
#include "nsnet/rng.hpp"

namespace nsnet {

/// A named trainable tensor. `grad` always has the shape of `value`.
struct ParamTensor {
  ParamTensor() = default;
  ParamTensor(std::string name_, Array value_);

  std::string name;
  Array value;
  Array grad;

  void zero_grad();
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid until the tape is cleared.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Array& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t id() const { return id_; }
  Tape& tape() const { return *tape_; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Array& grad_out, const Array& out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Array value);
  Var param(ParamTensor& p);

  /// Records a derived node. `fn` runs during backward with the node's
  /// accumulated output gradient and its forward value; it is dropped when no
  /// input needs a gradient.
  Var record(Array value, std::span<const Var> inputs, BackwardFn fn);

  /// Propagates d(loss)/d(node) from a scalar loss, accumulates into every
  /// ParamTensor read on this tape, then clears the tape.
  void backward(Var loss);

  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

  const Array& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool requires_grad(Var v) const { return requires_grad(v.id()); }

  /// Gradient buffer of a node, zero-allocated on first use.
  Array& grad(std::size_t id);
  Array& grad(Var v) { return grad(v.id()); }

 private:
  struct Node {
    Array value;
    Array grad;
    BackwardFn backward;
    ParamTensor* param = nullptr;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
};

namespace ag {

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
/// s * a + c elementwise.
Var affine(Var a, double s, double c);
/// x[T x N] + b[N] broadcast over rows.
Var add_row_bias(Var x, Var b);
Var sigmoid(Var a);
Var gelu(Var a);
Var softmax_rows(Var a);
Var layer_norm(Var x, Var gain, Var bias);
/// Inverted dropout: kept units scaled by 1/(1-rate). Identity when rate == 0.
Var dropout(Var a, double rate, Rng& rng);
Var slice_rows(Var a, std::size_t start, std::size_t count);
Var slice_cols(Var a, std::size_t start, std::size_t count);
Var concat_cols(std::span<const Var> parts);
Var reshape(Var a, Shape shape);
Var sum(Var a);
/// a / max(sum(a), 1e-12) for a nonnegative vector (any shape, flattened).
Var l1_normalize(Var a);
/// Sum over rows of soft cross-entropy between logits rows and target rows.
Var soft_cross_entropy_rows(Var logits, const Array& targets);

}  // namespace ag
}  // namespace nsnet

// SPDX-License-Identifier: Apache-2.0
//
// The sampler network. A transformer encoder over lightweight frame features
// feeds two heads that share its output:
//   - the frame head classifies every frame into C + 1 classes (the extra
//     class absorbs non-salient frames);
//   - the video head pools frames with sigmoid/L1-normalized temporal
//     attention into a salient representation (weights a_i) and a
//     complementary non-salient one (weights (1 - a_i) / T), both scored by
//     one shared C + 1 classifier.
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "nsnet/autograd.hpp"
#include "nsnet/data_store.hpp"

namespace nsnet {

struct ModelConfig {
  std::size_t light_dim = 32;    // D_l
  std::size_t num_classes = 10;  // C
  std::size_t encoder_layers = 2;
  std::size_t heads = 8;
  std::size_t ffn_dim = 0;  // 0 means D_l
  std::size_t max_frames = 100;
  double dropout_pos_enc = 0.2;
  double dropout_cls = 0.9;
  double dropout_attn = 0.2;
  double gamma = 0.2;

  std::size_t ffn_width() const { return ffn_dim == 0 ? light_dim : ffn_dim; }
  std::size_t head_dim() const { return light_dim / heads; }
  void validate() const;

  std::string to_text() const;
  static ModelConfig from_text(const std::string& text);
};

/// Eval-mode forward results as plain arrays.
struct ForwardOutput {
  Array encoded;            // T x D_l
  Array fsm_logits;         // T x (C + 1)
  Array attn;               // T, sums to 1
  Array salient_logits;     // C + 1
  Array nonsalient_logits;  // C + 1
};

struct ForwardVars {
  Var encoded;
  Var fsm_logits;
  Var attn;
  Var salient_logits;
  Var nonsalient_logits;
};

struct LossVars {
  Var total;
  Var frame;       // L_f
  Var classify;    // L_cls
  Var suppress;    // L_ns
};

class SamplerModel {
 public:
  /// Randomly initialized: U(+-1/sqrt(fan_in)) weights, N(0, 0.02) positional
  /// embedding, zero biases, unit layer-norm gains.
  SamplerModel(const ModelConfig& cfg, Rng& init_rng);
  /// Every parameter zero, including layer-norm gains.
  static SamplerModel zeros(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  std::vector<ParamTensor>& params() { return params_; }
  const std::vector<ParamTensor>& params() const { return params_; }
  std::vector<ParamTensor*> param_ptrs();
  ParamTensor& param(const std::string& name);
  const ParamTensor& param(const std::string& name) const;
  std::size_t num_scalars() const;

  /// `dropout_rng` non-null enables train-mode dropout.
  Var encode(Tape& tape, const Array& features, Rng* dropout_rng);
  Var fsm_forward(Tape& tape, Var encoded, Rng* dropout_rng);
  Var vgm_attention(Tape& tape, Var encoded, Rng* dropout_rng);
  /// Salient (sum a_i x_i) and non-salient (sum (1 - a_i)/T x_i) representations, each 1 x D_l.
  std::pair<Var, Var> vgm_representations(Var encoded, Var attn) const;
  Var vgm_classify(Tape& tape, Var representation, Rng* dropout_rng);
  ForwardVars forward(Tape& tape, const Array& features, Rng* dropout_rng);

  /// Frozen eval-mode inference; does not touch gradients, safe to run concurrently.
  ForwardOutput infer(const Array& features) const;

 private:
  explicit SamplerModel(const ModelConfig& cfg);
  void add_param(std::string name, Array value);
  std::size_t index_of(const std::string& name) const;
  /// Tracked reads record a gradient path to the parameter; untracked reads
  /// copy its value in as a constant.
  Var read(Tape& tape, const std::string& name, bool tracked) const;

  Var encode_impl(Tape& tape, const Array& features, Rng* dropout_rng, bool tracked) const;
  Var fsm_impl(Tape& tape, Var encoded, Rng* dropout_rng, bool tracked) const;
  Var attention_impl(Tape& tape, Var encoded, Rng* dropout_rng, bool tracked) const;
  Var classify_impl(Tape& tape, Var representation, Rng* dropout_rng, bool tracked) const;
  ForwardVars forward_impl(Tape& tape, const Array& features, Rng* dropout_rng, bool tracked) const;

  ModelConfig cfg_;
  std::vector<ParamTensor> params_;
};

/// Sum over frames of soft cross-entropy against T x (C + 1) targets.
Var fsm_loss(Var fsm_logits, const Array& targets);
/// L_cls + gamma * L_ns with targets [onehot(label), 0] and [0, ..., 0, 1].
Var vgm_loss(Var salient_logits, Var nonsalient_logits, std::size_t label, double gamma, Var* classify = nullptr,
             Var* suppress = nullptr);
LossVars total_loss(const ForwardVars& out, const Array& frame_targets, std::size_t label, double gamma);

/// Per frame: max over the C real classes of softmax(logits), then softmax over time.
std::vector<double> fsm_saliency(const Array& fsm_logits);
/// The attention weights themselves.
std::vector<double> vgm_saliency(const Array& attn);

// NSC1: "NSC1" | u32 count | per parameter: u16 name length, name, u32 rank,
// u32 dims..., float32 values. The model configuration goes to `<path>.cfg`.
void save_checkpoint(const fs::path& path, const SamplerModel& model);
SamplerModel load_checkpoint(const fs::path& path);
std::string checkpoint_bytes(const SamplerModel& model);

}  // namespace nsnet

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nsnet/data_store.hpp"
#include "nsnet/fusion.hpp"
#include "nsnet/model.hpp"
#include "nsnet/optim.hpp"
#include "nsnet/supervision.hpp"

namespace nsnet {

enum class FrameTarget { ns, hard };
enum class GuidingSource { prototype, response };

std::string to_string(FrameTarget t);
std::string to_string(GuidingSource g);
FrameTarget parse_frame_target(const std::string& s);
GuidingSource parse_guiding_source(const std::string& s);

struct TrainConfig {
  std::size_t epochs = 120;
  std::size_t batch_size = 64;
  double base_lr = 0.01;
  std::vector<std::size_t> lr_decay_epochs{50, 75};
  double decay_factor = 0.1;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  PresampleConfig presample{16, true};
  FrameTarget frame_target = FrameTarget::ns;
  GuidingSource guiding = GuidingSource::prototype;
  FusionConfig eval_fusion{};  // model selection uses this (index_union by default)
  fs::path out_dir;            // empty: keep everything in memory

  void validate() const;
};

double lr_at_epoch(const TrainConfig& cfg, std::size_t epoch);

struct EpochMetrics {
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  double loss_f = 0.0;
  double loss_cls = 0.0;
  double loss_ns = 0.0;
  double val_top1 = 0.0;
  std::optional<double> val_recall;
};

std::string metrics_csv(const std::vector<EpochMetrics>& rows);

struct TrainResult {
  SamplerModel model;  // after the last epoch
  SamplerModel best;   // highest validation top-1, earliest on ties
  std::size_t best_epoch = 0;
  std::vector<EpochMetrics> metrics;
};

/// Frame targets for one record over its stored frames: NS pseudo labels from
/// the guiding scores, or hard video labels.
Array frame_targets(const VideoRecord& record, const PrototypeBank* bank, FrameTarget target, GuidingSource guiding);

/// Mini-batch SGD on the total objective. `bank` may be null unless NS targets
/// with prototype guidance are requested. With cfg.out_dir set, writes
/// last.nsc, best.nsc and metrics.csv there after every epoch.
TrainResult train(const std::vector<VideoRecord>& train_set, const std::vector<VideoRecord>& val_set,
                  const PrototypeBank* bank, const ModelConfig& model_cfg, const TrainConfig& cfg);

struct EpochEval {
  double top1 = 0.0;
  std::optional<double> recall;
};

/// Eval-mode inference over already pre-sampled records.
EpochEval evaluate_epoch(const SamplerModel& model, const std::vector<VideoRecord>& records,
                         const FusionConfig& fusion);

/// Gradient check of the full objective summed over `batch`. Rejects
/// dropout_enabled, since a stochastic loss cannot be differenced.
GradCheckReport model_gradient_check(SamplerModel& model, const std::vector<VideoRecord>& batch,
                                     const std::vector<Array>& targets, double step, double tolerance,
                                     bool dropout_enabled = false);

}  // namespace nsnet

// SPDX-License-Identifier: Apache-2.0
#include "nsnet/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "nsnet/error.hpp"
#include "nsnet/evaluation.hpp"

namespace nsnet {

std::string to_string(FrameTarget t) { return t == FrameTarget::ns ? "ns" : "hard"; }
std::string to_string(GuidingSource g) { return g == GuidingSource::prototype ? "prototype" : "response"; }

FrameTarget parse_frame_target(const std::string& s) {
  if (s == "ns") return FrameTarget::ns;
  if (s == "hard") return FrameTarget::hard;
  throw ContractError("unknown frame target '" + s + "' (expected ns or hard)");
}

GuidingSource parse_guiding_source(const std::string& s) {
  if (s == "prototype") return GuidingSource::prototype;
  if (s == "response") return GuidingSource::response;
  throw ContractError("unknown guiding source '" + s + "' (expected prototype or response)");
}

void TrainConfig::validate() const {
  require(epochs >= 1, "epochs must be >= 1");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(base_lr >= 0.0 && std::isfinite(base_lr), "base_lr must be finite and >= 0");
  require(decay_factor > 0.0 && decay_factor <= 1.0, "decay_factor must lie in (0, 1]");
  require(momentum >= 0.0 && momentum < 1.0, "momentum must lie in [0, 1)");
  require(presample.num_frames >= 1, "presample T must be >= 1");
  for (std::size_t i = 0; i < lr_decay_epochs.size(); ++i) {
    require(lr_decay_epochs[i] < epochs, "decay epoch " + std::to_string(lr_decay_epochs[i]) +
                                             " is not below epochs = " + std::to_string(epochs));
    if (i > 0) require(lr_decay_epochs[i] > lr_decay_epochs[i - 1], "decay epochs must be strictly increasing");
  }
}

double lr_at_epoch(const TrainConfig& cfg, std::size_t epoch) {
  require(epoch < cfg.epochs,
          "epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(cfg.epochs) + ")");
  double lr = cfg.base_lr;
  for (auto d : cfg.lr_decay_epochs)
    if (d <= epoch) lr *= cfg.decay_factor;
  return lr;
}

std::string metrics_csv(const std::vector<EpochMetrics>& rows) {
  std::ostringstream os;
  os << "epoch,lr,loss,loss_f,loss_cls,loss_ns,val_top1,val_recall\n";
  char buf[512];
  for (const auto& m : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%.8g,%.10f,%.10f,%.10f,%.10f,%.6f,", m.epoch, m.lr, m.loss, m.loss_f,
                  m.loss_cls, m.loss_ns, m.val_top1);
    os << buf;
    if (m.val_recall) {
      std::snprintf(buf, sizeof buf, "%.6f", *m.val_recall);
      os << buf;
    }
    os << '\n';
  }
  return os.str();
}

Array frame_targets(const VideoRecord& record, const PrototypeBank* bank, FrameTarget target, GuidingSource guiding) {
  const std::size_t c = record.recognizer_logits.cols();
  if (target == FrameTarget::hard) return pseudo_label_matrix(hard_video_labels(record.num_frames(), record.label, c));
  std::vector<double> g;
  if (guiding == GuidingSource::prototype) {
    require(bank != nullptr, "prototype guidance needs a prototype bank");
    g = guiding_saliency_scores(record, *bank);
  } else {
    g = guiding_scores_response_variant(record);
  }
  return pseudo_label_matrix(ns_pseudo_labels(g, record.label, c));
}

EpochEval evaluate_epoch(const SamplerModel& model, const std::vector<VideoRecord>& records,
                         const FusionConfig& fusion) {
  EpochEval out;
  if (records.empty()) return out;
  const auto s = evaluate_selection(
      records, [&](const VideoRecord& r, std::size_t) { return sample_video(model, r, fusion).selected; }, 0.0);
  out.top1 = s.top1;
  out.recall = s.recall;
  return out;
}

namespace {

void write_outputs(const TrainConfig& cfg, const SamplerModel& last, const SamplerModel& best,
                   const std::vector<EpochMetrics>& metrics, bool best_changed) {
  if (cfg.out_dir.empty()) return;
  try {
    save_checkpoint(cfg.out_dir / "last.nsc", last);
    if (best_changed) save_checkpoint(cfg.out_dir / "best.nsc", best);
    atomic_write(cfg.out_dir / "metrics.csv", metrics_csv(metrics));
  } catch (const IoError& e) {
    throw TrainingError(std::string("checkpoint write failed: ") + e.what());
  }
}

}  // namespace

TrainResult train(const std::vector<VideoRecord>& train_set, const std::vector<VideoRecord>& val_set,
                  const PrototypeBank* bank, const ModelConfig& model_cfg, const TrainConfig& cfg) {
  cfg.validate();
  model_cfg.validate();
  require(!train_set.empty(), "training set is empty");
  require(cfg.presample.num_frames <= model_cfg.max_frames, "presample T exceeds the model's max_frames");
  for (const auto& r : train_set) {
    r.validate(model_cfg.num_classes);
    require(r.light_features.cols() == model_cfg.light_dim, "record " + r.video_id + " has D_l = " +
                                                                std::to_string(r.light_features.cols()) +
                                                                ", model expects " +
                                                                std::to_string(model_cfg.light_dim));
  }

  Rng init_rng = rng_stream(cfg.seed, "init");
  Rng shuffle_rng = rng_stream(cfg.seed, "shuffle");
  Rng dropout_rng = rng_stream(cfg.seed, "dropout");

  TrainResult res{SamplerModel(model_cfg, init_rng), SamplerModel::zeros(model_cfg), 0, {}};
  res.best = res.model;

  // g_i depends on frozen prototypes and recognizer features only.
  std::vector<Array> targets;
  targets.reserve(train_set.size());
  for (const auto& r : train_set) targets.push_back(frame_targets(r, bank, cfg.frame_target, cfg.guiding));

  PresampleConfig eval_presample = cfg.presample;
  eval_presample.shift_augment = false;
  std::vector<VideoRecord> val;
  val.reserve(val_set.size());
  for (const auto& r : val_set) val.push_back(presample(r, eval_presample));
  FusionConfig fusion = cfg.eval_fusion;
  fusion.k = std::min(fusion.k, cfg.presample.num_frames);

  auto params = res.model.param_ptrs();
  OptimizerState opt(params, cfg.base_lr, cfg.momentum);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  double best_top1 = -1.0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    opt.learning_rate = lr_at_epoch(cfg, epoch);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    EpochMetrics m;
    m.epoch = epoch;
    m.lr = opt.learning_rate;
    std::size_t batch_id = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_id) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const double inv_b = 1.0 / static_cast<double>(end - start);
      for (std::size_t j = start; j < end; ++j) {
        const std::size_t v = order[j];
        const auto idx = presample_indices(train_set[v].num_frames(), cfg.presample, &shuffle_rng);
        const VideoRecord clip = gather_frames(train_set[v], idx);
        const Array clip_targets = targets[v].gather_rows(idx);
        Tape tape;
        const ForwardVars out = res.model.forward(tape, clip.light_features, &dropout_rng);
        const LossVars loss = total_loss(out, clip_targets, clip.label, model_cfg.gamma);
        const double value = loss.total.value()[0];
        if (!std::isfinite(value)) {
          throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(batch_id) + " (video " + clip.video_id + ")");
        }
        m.loss += value;
        m.loss_f += loss.frame.value()[0];
        m.loss_cls += loss.classify.value()[0];
        m.loss_ns += loss.suppress.value()[0];
        tape.backward(ag::scale(loss.total, inv_b));
      }
      sgd_step(params, opt);
    }
    const double n = static_cast<double>(order.size());
    m.loss /= n;
    m.loss_f /= n;
    m.loss_cls /= n;
    m.loss_ns /= n;

    const EpochEval ev = evaluate_epoch(res.model, val, fusion);
    m.val_top1 = ev.top1;
    m.val_recall = ev.recall;
    res.metrics.push_back(m);
    const bool improved = val.empty() || ev.top1 > best_top1;
    if (improved) {
      best_top1 = ev.top1;
      res.best = res.model;
      res.best_epoch = epoch;
    }
    write_outputs(cfg, res.model, res.best, res.metrics, improved);
  }
  return res;
}

GradCheckReport model_gradient_check(SamplerModel& model, const std::vector<VideoRecord>& batch,
                                     const std::vector<Array>& targets, double step, double tolerance,
                                     bool dropout_enabled) {
  require(batch.size() == targets.size(), "one target matrix per video required");
  auto params = model.param_ptrs();
  const double gamma = model.config().gamma;
  auto loss_fn = [&](Tape& tape) {
    Var sum = tape.constant(Array::scalar(0.0));
    for (std::size_t v = 0; v < batch.size(); ++v) {
      const ForwardVars out = model.forward(tape, batch[v].light_features, nullptr);
      sum = ag::add(sum, total_loss(out, targets[v], batch[v].label, gamma).total);
    }
    return sum;
  };
  return finite_difference_check(params, loss_fn, step, tolerance, !dropout_enabled);
}

}  // namespace nsnet

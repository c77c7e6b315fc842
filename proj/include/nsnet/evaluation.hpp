// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nsnet/data_store.hpp"
#include "nsnet/fusion.hpp"
#include "nsnet/model.hpp"

namespace nsnet {

/// Per-video compute in GFLOPs: recognizer * K + embedding + video head + frame head.
struct FlopsBudget {
  double recognizer_per_frame = 0.0;
  std::size_t k = 0;
  double embedding = 0.0;
  double vgm = 0.0;
  double fsm = 0.0;
};

double flops_total(const FlopsBudget& budget);

/// Per-network costs read from `name=gflops` lines. Known names: recognizer,
/// extractor (per observed frame), encoder, vgm, fsm.
struct CostTable {
  double recognizer = 0.0;
  double extractor = 0.0;
  double encoder = 0.0;
  double vgm = 0.0;
  double fsm = 0.0;

  static CostTable parse(const std::string& text);
  static CostTable load(const fs::path& path);
  /// Embedding cost is extractor * T + encoder.
  FlopsBudget budget(std::size_t k, std::size_t t) const;
};

struct ApResult {
  std::vector<double> per_class;            // indexed by class; NaN where excluded
  std::vector<std::size_t> excluded_classes;  // classes with no positive video
  double map = 0.0;
};

/// Single-label, interpolation-free AP: for each class, videos ranked by
/// score (ties in video order), precision averaged over the positives' ranks.
ApResult mean_average_precision(const Array& scores, std::span<const std::size_t> labels);

double top1_accuracy(const Array& predictions, std::span<const std::size_t> labels);

/// Fraction of planted salient frames that were selected; nullopt without a mask or planted frames.
std::optional<double> salient_recall(const VideoRecord& record, std::span<const std::size_t> selected);

enum class BaselineMethod { uniform, random, dense, topk_confidence };
std::string to_string(BaselineMethod m);
inline constexpr BaselineMethod kAllBaselines[] = {BaselineMethod::uniform, BaselineMethod::random,
                                                   BaselineMethod::dense, BaselineMethod::topk_confidence};

/// Indices into the (pre-sampled) record. K is ignored for dense.
std::vector<std::size_t> baseline_sample(const VideoRecord& record, BaselineMethod method, std::size_t k,
                                         std::uint64_t seed);

/// Runs the sampler on one pre-sampled record and fuses both heads' saliency.
SaliencyProfile sample_video(const SamplerModel& model, const VideoRecord& record, const FusionConfig& cfg);

struct EvalSummary {
  double top1 = 0.0;
  double map = 0.0;
  std::optional<double> recall;
  double gflops = 0.0;
};

using SelectionFn = std::function<std::vector<std::size_t>(const VideoRecord&, std::size_t video_index)>;

/// Scores a selection rule over pre-sampled records; `gflops` is the per-video cost.
EvalSummary evaluate_selection(const std::vector<VideoRecord>& records, const SelectionFn& select, double gflops);

struct ComparisonRow {
  std::string method;
  std::size_t k = 0;
  EvalSummary summary;
};

/// Sampler and every baseline at each K over pre-sampled records.
std::vector<ComparisonRow> run_comparison(const std::vector<VideoRecord>& records, const SamplerModel& model,
                                          const FusionConfig& fusion, std::span<const std::size_t> k_list,
                                          const CostTable& costs, std::uint64_t seed);

/// `method,K,top1,mAP,recall,gflops`
std::string frontier_csv(const std::vector<ComparisonRow>& rows);

}  // namespace nsnet

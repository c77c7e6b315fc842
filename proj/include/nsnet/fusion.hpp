// SPDX-License-Identifier: Apache-2.0
//
// Combining frame-head (s_f) and video-head (s_v) saliency into K selected
// frames. Ties always go to the lower frame index.
#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nsnet/data_store.hpp"

namespace nsnet {

enum class FusionMode { score_add, score_mul, score_max, index_union, index_intersect, index_join };

std::string to_string(FusionMode mode);
FusionMode parse_fusion_mode(const std::string& name);
inline constexpr FusionMode kAllFusionModes[] = {FusionMode::score_add,       FusionMode::score_mul,
                                                 FusionMode::score_max,       FusionMode::index_union,
                                                 FusionMode::index_intersect, FusionMode::index_join};

struct FusionConfig {
  FusionMode mode = FusionMode::index_union;
  double ratio = 0.6;  // weight of the frame head in score_add and index_union
  std::size_t k = 4;
};

struct SaliencyProfile {
  std::vector<double> s_f;
  std::vector<double> s_v;
  std::vector<std::size_t> selected;
  std::optional<std::vector<double>> fused_scores;
};

/// Frame indices sorted by descending score, ties to the lower index.
std::vector<std::size_t> rank_order(std::span<const double> scores);

/// Indices of the K largest scores in rank order. Throws ContractError if K > T.
std::vector<std::size_t> select_topk(std::span<const double> scores, std::size_t k);

/// add: ratio*s_f + (1-ratio)*s_v; mul: s_f*s_v; max: max(s_f, s_v).
std::vector<double> fuse_scores(std::span<const double> s_f, std::span<const double> s_v, FusionMode mode,
                                double ratio = 0.6);

/// Top-K intersection, then alternately the next unused frame past rank K in
/// each list (frame list first) until K frames are held.
std::vector<std::size_t> fuse_index_intersect(std::span<const double> s_f, std::span<const double> s_v,
                                              std::size_t k);

/// Top-ceil(K*ratio) frame-head frames united with top-ceil(K*(1-ratio))
/// video-head frames; grown from the frame list or trimmed from the tail of
/// the video-head contributions to exactly K.
std::vector<std::size_t> fuse_index_union(std::span<const double> s_f, std::span<const double> s_v, std::size_t k,
                                          double ratio = 0.6);

/// Scan both score lists merged (2T entries) in descending order, taking each
/// frame the first time it appears. Equal scores: frame-head entry first.
std::vector<std::size_t> fuse_index_join(std::span<const double> s_f, std::span<const double> s_v, std::size_t k);

/// Dispatches on cfg.mode.
SaliencyProfile select_frames(std::span<const double> s_f, std::span<const double> s_v, const FusionConfig& cfg);

/// Averages softmax(recognizer logits) over the selected frames.
std::vector<double> recognize_video(const VideoRecord& record, std::span<const std::size_t> selected);

std::size_t argmax(std::span<const double> v);

}  // namespace nsnet

// SPDX-License-Identifier: Apache-2.0
//
// Frame-level supervision for the frame head: category prototypes in
// recognizer feature space, prototype-distance guiding scores, and the
// non-saliency-suppression soft targets built from them.
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "nsnet/array.hpp"
#include "nsnet/data_store.hpp"

namespace nsnet {

struct PrototypeBank {
  Array prototypes;  // C x D_g
  double epsilon_percent = 30.0;

  std::size_t num_classes() const { return prototypes.rows(); }
  std::size_t dim() const { return prototypes.cols(); }
};

/// Soft target over C + 1 classes; the last slot is the non-salient class.
struct PseudoLabel {
  std::vector<double> target;
  double guiding_score = 0.0;
};

/// Number of frames kept by the top-epsilon-percent rule: max(1, ceil(eps% * count)).
std::size_t epsilon_count(std::size_t count, double epsilon_percent);

/// Per video: average the guiding features of its most confident correctly
/// recognized frames; per class: average those video features. Videos with
/// no correct frame rank all of their frames instead. Reduction order is by
/// video_id, so the result does not depend on record order.
PrototypeBank build_prototypes(const std::vector<VideoRecord>& train, std::size_t num_classes,
                               double epsilon_percent = 30.0);

/// g_i = softmax_j(-||x_i - p_j||) evaluated at the video's class.
std::vector<double> guiding_saliency_scores(const VideoRecord& record, const PrototypeBank& bank);

/// Alternative guiding score: the recognizer's softmax probability of the true class.
std::vector<double> guiding_scores_response_variant(const VideoRecord& record);

/// y_i = [g_i * onehot(label), 1 - g_i].
std::vector<PseudoLabel> ns_pseudo_labels(std::span<const double> g, std::size_t label, std::size_t num_classes);

/// Hard video labels [onehot(label), 0] for every frame (the no-suppression baseline).
std::vector<PseudoLabel> hard_video_labels(std::size_t num_frames, std::size_t label, std::size_t num_classes);

/// Stacks pseudo-label targets into a T x (C + 1) matrix.
Array pseudo_label_matrix(const std::vector<PseudoLabel>& labels);

/// Writes the bank as NSF1 plus `<path>.meta` with epsilon and the source
/// manifest checksum.
void save_prototypes(const fs::path& path, const PrototypeBank& bank, const std::string& manifest_checksum);
PrototypeBank load_prototypes(const fs::path& path);

}  // namespace nsnet

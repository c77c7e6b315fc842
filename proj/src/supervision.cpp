// SPDX-License-Identifier: Apache-2.0
#include "nsnet/supervision.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "nsnet/error.hpp"
#include "nsnet/numerics.hpp"

namespace nsnet {

namespace {

/// Frame indices sorted by true-class confidence, descending, ties to lower index.
std::vector<std::size_t> rank_by_confidence(const std::vector<double>& conf, std::vector<std::size_t> frames) {
  std::stable_sort(frames.begin(), frames.end(), [&](std::size_t a, std::size_t b) { return conf[a] > conf[b]; });
  return frames;
}

}  // namespace

std::size_t epsilon_count(std::size_t count, double epsilon_percent) {
  require(epsilon_percent > 0.0 && epsilon_percent <= 100.0, "epsilon must lie in (0, 100]");
  const double raw = epsilon_percent * static_cast<double>(count) / 100.0;
  const auto k = static_cast<std::size_t>(std::ceil(raw - 1e-9));
  return std::clamp<std::size_t>(k, 1, std::max<std::size_t>(count, 1));
}

PrototypeBank build_prototypes(const std::vector<VideoRecord>& train, std::size_t num_classes,
                               double epsilon_percent) {
  require(num_classes >= 1, "prototype bank needs at least one class");
  std::vector<const VideoRecord*> ordered;
  ordered.reserve(train.size());
  for (const auto& r : train) ordered.push_back(&r);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const VideoRecord* a, const VideoRecord* b) { return a->video_id < b->video_id; });

  const std::size_t dg = train.empty() ? 0 : train.front().guiding_features.cols();
  Array sums({num_classes, std::max<std::size_t>(dg, 1)});
  std::vector<std::size_t> counts(num_classes, 0);

  for (const VideoRecord* r : ordered) {
    r->validate(num_classes);
    if (r->guiding_features.cols() != dg) throw ShapeError(r->video_id + ": guiding feature width differs");
    const std::size_t n = r->num_frames(), c = r->label;
    std::vector<double> conf(n);
    std::vector<std::size_t> correct, all(n);
    for (std::size_t i = 0; i < n; ++i) {
      auto row = r->recognizer_logits.row(i);
      conf[i] = softmax(row)[c];
      const auto argmax = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
      if (argmax == c) correct.push_back(i);
      all[i] = i;
    }
    const auto& pool = correct.empty() ? all : correct;
    const auto ranked = rank_by_confidence(conf, pool);
    const std::size_t keep = epsilon_count(pool.size(), epsilon_percent);

    std::vector<double> video_feature(dg, 0.0);
    for (std::size_t k = 0; k < keep; ++k) {
      auto row = r->guiding_features.row(ranked[k]);
      for (std::size_t j = 0; j < dg; ++j) video_feature[j] += row[j];
    }
    auto dst = sums.row(c);
    for (std::size_t j = 0; j < dg; ++j) dst[j] += video_feature[j] / static_cast<double>(keep);
    ++counts[c];
  }

  std::vector<std::size_t> missing;
  for (std::size_t c = 0; c < num_classes; ++c)
    if (counts[c] == 0) missing.push_back(c);
  if (!missing.empty()) {
    std::ostringstream os;
    os << "no training videos for categor" << (missing.size() == 1 ? "y" : "ies");
    for (auto c : missing) os << ' ' << c;
    throw ContractError(os.str());
  }

  PrototypeBank bank;
  bank.epsilon_percent = epsilon_percent;
  bank.prototypes = Array({num_classes, dg});
  for (std::size_t c = 0; c < num_classes; ++c)
    for (std::size_t j = 0; j < dg; ++j) bank.prototypes.at(c, j) = sums.at(c, j) / static_cast<double>(counts[c]);
  return bank;
}

std::vector<double> guiding_saliency_scores(const VideoRecord& record, const PrototypeBank& bank) {
  const std::size_t c_count = bank.num_classes();
  require(record.label < c_count, record.video_id + ": class index " + std::to_string(record.label) +
                                      " outside the prototype bank");
  if (record.guiding_features.cols() != bank.dim()) {
    throw ShapeError(record.video_id + ": guiding features are " + std::to_string(record.guiding_features.cols()) +
                     "-d but prototypes are " + std::to_string(bank.dim()) + "-d");
  }
  const std::size_t n = record.guiding_features.rows();
  std::vector<double> g(n), neg_dist(c_count);
  for (std::size_t i = 0; i < n; ++i) {
    auto x = record.guiding_features.row(i);
    for (std::size_t c = 0; c < c_count; ++c) {
      auto p = bank.prototypes.row(c);
      double s = 0.0;
      for (std::size_t j = 0; j < x.size(); ++j) s += (x[j] - p[j]) * (x[j] - p[j]);
      neg_dist[c] = -std::sqrt(s);
    }
    g[i] = softmax(neg_dist)[record.label];
  }
  return g;
}

std::vector<double> guiding_scores_response_variant(const VideoRecord& record) {
  const std::size_t n = record.recognizer_logits.rows();
  require(record.label < record.recognizer_logits.cols(), record.video_id + ": label outside logits width");
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = softmax(record.recognizer_logits.row(i))[record.label];
  return g;
}

std::vector<PseudoLabel> ns_pseudo_labels(std::span<const double> g, std::size_t label, std::size_t num_classes) {
  require(label < num_classes, "label " + std::to_string(label) + " outside [0, " + std::to_string(num_classes) + ")");
  std::vector<PseudoLabel> out;
  out.reserve(g.size());
  for (double gi : g) {
    require(gi >= -1e-9 && gi <= 1.0 + 1e-9, "guiding score " + std::to_string(gi) + " outside [0, 1]");
    const double s = std::clamp(gi, 0.0, 1.0);
    PseudoLabel p;
    p.guiding_score = s;
    p.target.assign(num_classes + 1, 0.0);
    p.target[label] = s;
    p.target[num_classes] = 1.0 - s;
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<PseudoLabel> hard_video_labels(std::size_t num_frames, std::size_t label, std::size_t num_classes) {
  std::vector<double> ones(num_frames, 1.0);
  return ns_pseudo_labels(ones, label, num_classes);
}

Array pseudo_label_matrix(const std::vector<PseudoLabel>& labels) {
  if (labels.empty()) return Array({0, 0});
  const std::size_t w = labels.front().target.size();
  Array out({labels.size(), w});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i].target.size() != w) throw ShapeError("pseudo labels disagree on width");
    std::copy(labels[i].target.begin(), labels[i].target.end(), out.row(i).begin());
  }
  return out;
}

void save_prototypes(const fs::path& path, const PrototypeBank& bank, const std::string& manifest_checksum) {
  write_feature_file(path, bank.prototypes);
  std::ostringstream meta;
  meta.precision(17);
  meta << "epsilon=" << bank.epsilon_percent << '\n' << "manifest_fnv1a=" << manifest_checksum << '\n';
  fs::path side = path;
  side += ".meta";
  atomic_write(side, meta.str());
}

PrototypeBank load_prototypes(const fs::path& path) {
  PrototypeBank bank;
  bank.prototypes = read_feature_file(path);
  fs::path side = path;
  side += ".meta";
  if (fs::exists(side)) {
    std::istringstream in(read_file_bytes(side));
    std::string line;
    while (std::getline(in, line)) {
      if (line.rfind("epsilon=", 0) == 0) bank.epsilon_percent = std::stod(line.substr(8));
    }
  }
  return bank;
}

}  // namespace nsnet

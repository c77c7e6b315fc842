// SPDX-License-Identifier: Apache-2.0
#include "nsnet/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nsnet/error.hpp"
#include "nsnet/numerics.hpp"

namespace nsnet {

namespace {

void check_pair(std::span<const double> s_f, std::span<const double> s_v, std::size_t k) {
  if (s_f.size() != s_v.size()) {
    throw ContractError("saliency lengths differ: " + std::to_string(s_f.size()) + " vs " +
                        std::to_string(s_v.size()));
  }
  require(k <= s_f.size(), "K = " + std::to_string(k) + " exceeds T = " + std::to_string(s_f.size()));
}

std::size_t ceil_count(double x) { return static_cast<std::size_t>(std::ceil(x - 1e-9)); }

}  // namespace

std::string to_string(FusionMode mode) {
  switch (mode) {
    case FusionMode::score_add: return "score_add";
    case FusionMode::score_mul: return "score_mul";
    case FusionMode::score_max: return "score_max";
    case FusionMode::index_union: return "index_union";
    case FusionMode::index_intersect: return "index_intersect";
    case FusionMode::index_join: return "index_join";
  }
  return "?";
}

FusionMode parse_fusion_mode(const std::string& name) {
  for (auto m : kAllFusionModes)
    if (to_string(m) == name) return m;
  throw ContractError("unknown fusion mode '" + name + "'");
}

std::vector<std::size_t> rank_order(std::span<const double> scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return idx;
}

std::vector<std::size_t> select_topk(std::span<const double> scores, std::size_t k) {
  require(k <= scores.size(), "K = " + std::to_string(k) + " exceeds T = " + std::to_string(scores.size()));
  auto idx = rank_order(scores);
  idx.resize(k);
  return idx;
}

std::vector<double> fuse_scores(std::span<const double> s_f, std::span<const double> s_v, FusionMode mode,
                                double ratio) {
  check_pair(s_f, s_v, 0);
  std::vector<double> out(s_f.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    switch (mode) {
      case FusionMode::score_add: out[i] = ratio * s_f[i] + (1.0 - ratio) * s_v[i]; break;
      case FusionMode::score_mul: out[i] = s_f[i] * s_v[i]; break;
      case FusionMode::score_max: out[i] = std::max(s_f[i], s_v[i]); break;
      default: throw ContractError("fuse_scores called with index mode " + to_string(mode));
    }
  }
  return out;
}

std::vector<std::size_t> fuse_index_intersect(std::span<const double> s_f, std::span<const double> s_v,
                                              std::size_t k) {
  check_pair(s_f, s_v, k);
  const std::size_t t = s_f.size();
  const auto pf = rank_order(s_f), pv = rank_order(s_v);
  std::vector<char> in_v_top(t, 0), taken(t, 0);
  for (std::size_t i = 0; i < k; ++i) in_v_top[pv[i]] = 1;
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < k; ++i) {
    if (in_v_top[pf[i]]) {
      out.push_back(pf[i]);
      taken[pf[i]] = 1;
    }
  }
  std::size_t next_f = k, next_v = k;
  bool from_f = true;
  while (out.size() < k) {
    auto& cursor = from_f ? next_f : next_v;
    const auto& list = from_f ? pf : pv;
    while (cursor < t && taken[list[cursor]]) ++cursor;
    if (cursor < t) {
      out.push_back(list[cursor]);
      taken[list[cursor]] = 1;
      ++cursor;
    }
    from_f = !from_f;
  }
  return out;
}

std::vector<std::size_t> fuse_index_union(std::span<const double> s_f, std::span<const double> s_v, std::size_t k,
                                          double ratio) {
  check_pair(s_f, s_v, k);
  require(ratio >= 0.0 && ratio <= 1.0, "union ratio must lie in [0, 1]");
  const std::size_t t = s_f.size();
  const auto pf = rank_order(s_f), pv = rank_order(s_v);
  const std::size_t nf = std::min(ceil_count(static_cast<double>(k) * ratio), k);
  const std::size_t nv = std::min(ceil_count(static_cast<double>(k) * (1.0 - ratio)), k);
  std::vector<char> taken(t, 0);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < nf; ++i) {
    out.push_back(pf[i]);
    taken[pf[i]] = 1;
  }
  for (std::size_t i = 0; i < nv; ++i) {
    if (!taken[pv[i]]) {
      out.push_back(pv[i]);
      taken[pv[i]] = 1;
    }
  }
  // Overshoot: the video-head additions sit at the tail, lowest-ranked last.
  if (out.size() > k) out.resize(k);
  for (std::size_t i = 0; out.size() < k && i < t; ++i) {
    if (!taken[pf[i]]) {
      out.push_back(pf[i]);
      taken[pf[i]] = 1;
    }
  }
  return out;
}

std::vector<std::size_t> fuse_index_join(std::span<const double> s_f, std::span<const double> s_v, std::size_t k) {
  check_pair(s_f, s_v, k);
  const std::size_t t = s_f.size();
  struct Entry {
    double score;
    std::size_t source;  // 0 = frame head, 1 = video head
    std::size_t frame;
  };
  std::vector<Entry> merged;
  merged.reserve(2 * t);
  for (std::size_t i = 0; i < t; ++i) merged.push_back({s_f[i], 0, i});
  for (std::size_t i = 0; i < t; ++i) merged.push_back({s_v[i], 1, i});
  std::stable_sort(merged.begin(), merged.end(), [](const Entry& a, const Entry& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.source != b.source) return a.source < b.source;
    return a.frame < b.frame;
  });
  std::vector<char> taken(t, 0);
  std::vector<std::size_t> out;
  for (const auto& e : merged) {
    if (out.size() == k) break;
    if (!taken[e.frame]) {
      taken[e.frame] = 1;
      out.push_back(e.frame);
    }
  }
  return out;
}

SaliencyProfile select_frames(std::span<const double> s_f, std::span<const double> s_v, const FusionConfig& cfg) {
  check_pair(s_f, s_v, cfg.k);
  SaliencyProfile p;
  p.s_f.assign(s_f.begin(), s_f.end());
  p.s_v.assign(s_v.begin(), s_v.end());
  switch (cfg.mode) {
    case FusionMode::score_add:
    case FusionMode::score_mul:
    case FusionMode::score_max:
      p.fused_scores = fuse_scores(s_f, s_v, cfg.mode, cfg.ratio);
      p.selected = select_topk(*p.fused_scores, cfg.k);
      break;
    case FusionMode::index_union: p.selected = fuse_index_union(s_f, s_v, cfg.k, cfg.ratio); break;
    case FusionMode::index_intersect: p.selected = fuse_index_intersect(s_f, s_v, cfg.k); break;
    case FusionMode::index_join: p.selected = fuse_index_join(s_f, s_v, cfg.k); break;
  }
  return p;
}

std::vector<double> recognize_video(const VideoRecord& record, std::span<const std::size_t> selected) {
  require(!selected.empty(), "recognition needs at least one selected frame");
  const std::size_t c = record.recognizer_logits.cols();
  std::vector<double> avg(c, 0.0);
  for (auto i : selected) {
    require(i < record.recognizer_logits.rows(), "selected frame " + std::to_string(i) + " out of range");
    const auto p = softmax(record.recognizer_logits.row(i));
    for (std::size_t j = 0; j < c; ++j) avg[j] += p[j];
  }
  for (auto& v : avg) v /= static_cast<double>(selected.size());
  return avg;
}

std::size_t argmax(std::span<const double> v) {
  require(!v.empty(), "argmax of an empty vector");
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace nsnet

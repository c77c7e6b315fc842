// SPDX-License-Identifier: Apache-2.0
#include "nsnet/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "nsnet/error.hpp"
#include "nsnet/numerics.hpp"

namespace nsnet {

double flops_total(const FlopsBudget& b) {
  for (double v : {b.recognizer_per_frame, b.embedding, b.vgm, b.fsm}) require(v >= 0.0, "FLOPs components must be >= 0");
  return b.recognizer_per_frame * static_cast<double>(b.k) + b.embedding + b.vgm + b.fsm;
}

CostTable CostTable::parse(const std::string& text) {
  CostTable t;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line.erase(0, line.find_first_not_of(" \t\r"));
    line.erase(line.find_last_not_of(" \t\r") + 1);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("cost table line " + std::to_string(lineno) + ": expected name=gflops");
    std::string key = line.substr(0, eq), val = line.substr(eq + 1);
    key.erase(key.find_last_not_of(" \t") + 1);
    double v = 0.0;
    try {
      v = std::stod(val);
    } catch (const std::exception&) {
      throw FormatError("cost table line " + std::to_string(lineno) + ": bad number '" + val + "'");
    }
    if (!(v >= 0.0)) throw FormatError("cost table line " + std::to_string(lineno) + ": negative cost");
    if (key == "recognizer") t.recognizer = v;
    else if (key == "extractor") t.extractor = v;
    else if (key == "encoder") t.encoder = v;
    else if (key == "vgm") t.vgm = v;
    else if (key == "fsm") t.fsm = v;
    else throw FormatError("cost table line " + std::to_string(lineno) + ": unknown component '" + key + "'");
  }
  return t;
}

CostTable CostTable::load(const fs::path& path) { return parse(read_file_bytes(path)); }

FlopsBudget CostTable::budget(std::size_t k, std::size_t t) const {
  return FlopsBudget{recognizer, k, extractor * static_cast<double>(t) + encoder, vgm, fsm};
}

ApResult mean_average_precision(const Array& scores, std::span<const std::size_t> labels) {
  require(scores.rank() == 2, "scores must be a V x C matrix");
  const std::size_t v_count = scores.rows(), c_count = scores.cols();
  require(v_count >= 1, "mAP needs at least one video");
  require(labels.size() == v_count, "one label per video required");
  ApResult res;
  res.per_class.assign(c_count, std::numeric_limits<double>::quiet_NaN());
  double total = 0.0;
  std::size_t used = 0;
  std::vector<std::size_t> order(v_count);
  for (std::size_t c = 0; c < c_count; ++c) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores.at(a, c) > scores.at(b, c); });
    std::size_t hits = 0;
    double sum_prec = 0.0;
    for (std::size_t r = 0; r < v_count; ++r) {
      if (labels[order[r]] == c) {
        ++hits;
        sum_prec += static_cast<double>(hits) / static_cast<double>(r + 1);
      }
    }
    if (hits == 0) {
      res.excluded_classes.push_back(c);
      continue;
    }
    res.per_class[c] = sum_prec / static_cast<double>(hits);
    total += res.per_class[c];
    ++used;
  }
  res.map = used ? total / static_cast<double>(used) : 0.0;
  return res;
}

double top1_accuracy(const Array& predictions, std::span<const std::size_t> labels) {
  require(predictions.rows() == labels.size(), "predictions and labels differ in length");
  if (labels.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t v = 0; v < labels.size(); ++v)
    if (argmax(predictions.row(v)) == labels[v]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

std::optional<double> salient_recall(const VideoRecord& record, std::span<const std::size_t> selected) {
  if (!record.saliency_mask) return std::nullopt;
  const auto& mask = *record.saliency_mask;
  double planted = 0.0;
  for (double m : mask.data()) planted += m;
  if (planted == 0.0) return std::nullopt;
  std::vector<char> seen(mask.size(), 0);
  double hit = 0.0;
  for (auto i : selected) {
    if (i < mask.size() && !seen[i]) {
      seen[i] = 1;
      hit += mask[i];
    }
  }
  return hit / planted;
}

std::string to_string(BaselineMethod m) {
  switch (m) {
    case BaselineMethod::uniform: return "uniform";
    case BaselineMethod::random: return "random";
    case BaselineMethod::dense: return "dense";
    case BaselineMethod::topk_confidence: return "topk_confidence";
  }
  return "?";
}

std::vector<std::size_t> baseline_sample(const VideoRecord& record, BaselineMethod method, std::size_t k,
                                         std::uint64_t seed) {
  const std::size_t t = record.num_frames();
  std::vector<std::size_t> out;
  if (method == BaselineMethod::dense) {
    out.resize(t);
    std::iota(out.begin(), out.end(), 0);
    return out;
  }
  require(k <= t, "K = " + std::to_string(k) + " exceeds T = " + std::to_string(t));
  switch (method) {
    case BaselineMethod::uniform:
      for (std::size_t i = 0; i < k; ++i) out.push_back((2 * i + 1) * t / (2 * k));
      break;
    case BaselineMethod::random: {
      Rng rng = rng_stream(seed, "baseline_random:" + record.video_id);
      std::vector<std::size_t> pool(t);
      std::iota(pool.begin(), pool.end(), 0);
      for (std::size_t i = 0; i < k; ++i) {
        std::uniform_int_distribution<std::size_t> d(i, t - 1);
        std::swap(pool[i], pool[d(rng)]);
      }
      out.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));
      std::sort(out.begin(), out.end());
      break;
    }
    case BaselineMethod::topk_confidence: {
      std::vector<double> conf(t);
      for (std::size_t i = 0; i < t; ++i) {
        const auto p = softmax(record.recognizer_logits.row(i));
        conf[i] = *std::max_element(p.begin(), p.end());
      }
      out = select_topk(conf, k);
      break;
    }
    case BaselineMethod::dense: break;
  }
  return out;
}

SaliencyProfile sample_video(const SamplerModel& model, const VideoRecord& record, const FusionConfig& cfg) {
  const ForwardOutput out = model.infer(record.light_features);
  const auto s_f = fsm_saliency(out.fsm_logits);
  const auto s_v = vgm_saliency(out.attn);
  return select_frames(s_f, s_v, cfg);
}

EvalSummary evaluate_selection(const std::vector<VideoRecord>& records, const SelectionFn& select, double gflops) {
  EvalSummary s;
  s.gflops = gflops;
  if (records.empty()) return s;
  const std::size_t c = records.front().recognizer_logits.cols();
  Array preds({records.size(), c});
  std::vector<std::size_t> labels(records.size());
  double recall_sum = 0.0;
  std::size_t recall_n = 0;
  for (std::size_t v = 0; v < records.size(); ++v) {
    const auto selected = select(records[v], v);
    const auto dist = recognize_video(records[v], selected);
    std::copy(dist.begin(), dist.end(), preds.row(v).begin());
    labels[v] = records[v].label;
    if (auto r = salient_recall(records[v], selected)) {
      recall_sum += *r;
      ++recall_n;
    }
  }
  s.top1 = top1_accuracy(preds, labels);
  s.map = mean_average_precision(preds, labels).map;
  if (recall_n) s.recall = recall_sum / static_cast<double>(recall_n);
  return s;
}

std::vector<ComparisonRow> run_comparison(const std::vector<VideoRecord>& records, const SamplerModel& model,
                                          const FusionConfig& fusion, std::span<const std::size_t> k_list,
                                          const CostTable& costs, std::uint64_t seed) {
  std::vector<ComparisonRow> rows;
  const std::size_t t = records.empty() ? 0 : records.front().num_frames();
  // Sampler outputs depend only on the record, so score each video once.
  std::vector<ForwardOutput> outputs;
  outputs.reserve(records.size());
  for (const auto& r : records) outputs.push_back(model.infer(r.light_features));

  for (std::size_t k : k_list) {
    require(k >= 1 && k <= t, "K = " + std::to_string(k) + " outside [1, T = " + std::to_string(t) + "]");
    FusionConfig cfg = fusion;
    cfg.k = k;
    rows.push_back({"nsnet", k,
                    evaluate_selection(
                        records,
                        [&](const VideoRecord&, std::size_t v) {
                          return select_frames(fsm_saliency(outputs[v].fsm_logits), vgm_saliency(outputs[v].attn), cfg)
                              .selected;
                        },
                        flops_total(costs.budget(k, t)))});
    for (auto method : kAllBaselines) {
      const double per_frame = costs.recognizer;
      const double gflops = method == BaselineMethod::uniform || method == BaselineMethod::random
                                ? per_frame * static_cast<double>(k)
                                : per_frame * static_cast<double>(t);
      rows.push_back({to_string(method), k,
                      evaluate_selection(
                          records,
                          [&](const VideoRecord& r, std::size_t) { return baseline_sample(r, method, k, seed); },
                          gflops)});
    }
  }
  return rows;
}

std::string frontier_csv(const std::vector<ComparisonRow>& rows) {
  std::ostringstream os;
  os << "method,K,top1,mAP,recall,gflops\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%zu,%.6f,%.6f,", r.method.c_str(), r.k, r.summary.top1, r.summary.map);
    os << buf;
    if (r.summary.recall) {
      std::snprintf(buf, sizeof buf, "%.6f", *r.summary.recall);
      os << buf;
    }
    std::snprintf(buf, sizeof buf, ",%.4f\n", r.summary.gflops);
    os << buf;
  }
  return os.str();
}

}  // namespace nsnet

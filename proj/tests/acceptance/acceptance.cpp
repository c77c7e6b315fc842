// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite. Prints one PASS/FAIL line per criterion and exits nonzero
// if any criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "nsnet/cli.hpp"
#include "nsnet/evaluation.hpp"
#include "nsnet/supervision.hpp"
#include "nsnet/training.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace nsnet;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(int id, bool pass, double seconds, double limit, const std::string& detail) {
  const bool ok = pass && seconds < limit;
  if (!ok) ++failures;
  std::printf("CRITERION %d: %s (%s; %.2fs, limit %.0fs)\n", id, ok ? "PASS" : "FAIL", detail.c_str(), seconds,
              limit);
  std::fflush(stdout);
}

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// 1 --------------------------------------------------------------------------
void criterion_flops() {
  const auto t0 = Clock::now();
  testutil::TempDir tmp("acc_flops");
  const fs::path table = tmp.path / "costs.txt";
  atomic_write(table, "recognizer=4.109\nextractor=0.320\nencoder=0.315\nvgm=0.004\nfsm=0.002\n");
  const std::string line = cmd_flops(table, 5, 16);
  const double v = std::stod(line);
  report(1, std::abs(v - 25.99) <= 0.01, since(t0), 1.0, "cmd_flops printed " + line);
}

// 2 --------------------------------------------------------------------------
void criterion_gradients() {
  const auto t0 = Clock::now();
  ModelConfig mc;
  mc.light_dim = 16;
  mc.num_classes = 4;
  mc.encoder_layers = 2;
  mc.heads = 8;
  mc.max_frames = 8;
  Rng init = rng_stream(2, "init");
  SamplerModel model(mc, init);
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<VideoRecord> batch;
  std::vector<Array> targets;
  for (std::size_t v = 0; v < 2; ++v) {
    VideoRecord r;
    r.video_id = "g" + std::to_string(v);
    r.label = v % 4;
    r.light_features = testutil::random_array({8, 16}, rng);
    std::vector<double> g(8);
    for (auto& x : g) x = u(rng);
    targets.push_back(pseudo_label_matrix(ns_pseudo_labels(g, r.label, 4)));
    batch.push_back(std::move(r));
  }
  const auto rep = model_gradient_check(model, batch, targets, 1e-5, 1e-4);
  std::string worst;
  double w = -1;
  for (const auto& e : rep.entries)
    if (e.max_rel_error > w) {
      w = e.max_rel_error;
      worst = e.name;
    }
  report(2, rep.passed(), since(t0), 120.0,
         "max rel err " + fmt("%.3g", rep.max_rel_error()) + " at " + worst + ", " +
             std::to_string(model.num_scalars()) + " scalars");
}

// 3 --------------------------------------------------------------------------
struct FusionTally {
  std::size_t cases = 0;
  std::size_t mismatches = 0;
};

void check_all_modes(const std::vector<double>& f, const std::vector<double>& v, std::size_t k, FusionTally& tally) {
  static const double ratios[] = {0.0, 0.25, 0.5, 0.6, 1.0};
  auto expect = [&](bool same) {
    ++tally.cases;
    if (!same) ++tally.mismatches;
  };
  for (double a : ratios) {
    expect(select_frames(f, v, {FusionMode::score_add, a, k}).selected == oracle::score_add(f, v, k, a));
    expect(select_frames(f, v, {FusionMode::index_union, a, k}).selected == oracle::index_union(f, v, k, a));
  }
  expect(select_frames(f, v, {FusionMode::score_mul, 0.6, k}).selected == oracle::score_mul(f, v, k));
  expect(select_frames(f, v, {FusionMode::score_max, 0.6, k}).selected == oracle::score_max(f, v, k));
  expect(select_frames(f, v, {FusionMode::index_intersect, 0.6, k}).selected == oracle::index_intersect(f, v, k));
  expect(select_frames(f, v, {FusionMode::index_join, 0.6, k}).selected == oracle::index_join(f, v, k));
}

void criterion_fusion() {
  const auto t0 = Clock::now();
  FusionTally tally;
  // Randomized suite, with and without ties.
  std::mt19937_64 rng(33);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 3000; ++trial) {
    const std::size_t t = 1 + rng() % 20, k = 1 + rng() % t;
    std::vector<double> f(t), v(t);
    const bool coarse = trial % 2 == 0;
    for (auto& x : f) x = coarse ? std::floor(5 * u(rng)) / 5 : u(rng);
    for (auto& x : v) x = coarse ? std::floor(5 * u(rng)) / 5 : u(rng);
    check_all_modes(f, v, k, tally);
  }
  // Exhaustive rank patterns: every pair of permutations for T <= 6, and every
  // pair of weak orderings (ties included) for T <= 4.
  for (std::size_t t = 1; t <= 6; ++t) {
    std::vector<std::size_t> pf(t);
    std::iota(pf.begin(), pf.end(), 0);
    do {
      std::vector<std::size_t> pv(t);
      std::iota(pv.begin(), pv.end(), 0);
      do {
        std::vector<double> f(t), v(t);
        for (std::size_t i = 0; i < t; ++i) {
          f[i] = static_cast<double>(pf[i] + 1) / static_cast<double>(t);
          v[i] = static_cast<double>(pv[i] + 1) / static_cast<double>(t);
        }
        for (std::size_t k = 1; k <= std::min<std::size_t>(4, t); ++k) check_all_modes(f, v, k, tally);
      } while (std::next_permutation(pv.begin(), pv.end()));
    } while (std::next_permutation(pf.begin(), pf.end()));
  }
  for (std::size_t t = 1; t <= 4; ++t) {
    std::size_t patterns = 1;
    for (std::size_t i = 0; i < t; ++i) patterns *= t;
    for (std::size_t a = 0; a < patterns; ++a)
      for (std::size_t b = 0; b < patterns; ++b) {
        std::vector<double> f(t), v(t);
        std::size_t x = a, y = b;
        for (std::size_t i = 0; i < t; ++i, x /= t, y /= t) {
          f[i] = static_cast<double>(x % t) / static_cast<double>(t);
          v[i] = static_cast<double>(y % t) / static_cast<double>(t);
        }
        for (std::size_t k = 1; k <= t; ++k) check_all_modes(f, v, k, tally);
      }
  }
  report(3, tally.mismatches == 0, since(t0), 60.0,
         std::to_string(tally.cases) + " comparisons, " + std::to_string(tally.mismatches) + " mismatches");
}

// 4 --------------------------------------------------------------------------
void criterion_supervision() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(44);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t bad_labels = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t c = 1 + rng() % 20, label = rng() % c;
    double g = u(rng);
    if (trial % 50 == 0) g = 0.0;
    if (trial % 50 == 1) g = 1.0;
    const std::vector<double> gs{g};
    const auto y = ns_pseudo_labels(gs, label, c)[0].target;
    double sum = 0;
    bool ok = y.size() == c + 1;
    for (std::size_t j = 0; ok && j <= c; ++j) {
      sum += y[j];
      if (y[j] < 0) ok = false;
      const double want = j == label ? g : (j == c ? 1.0 - g : 0.0);
      if (y[j] != want) ok = false;
    }
    if (!ok || std::abs(sum - 1.0) > 1e-9) ++bad_labels;
  }

  SyntheticConfig sc;
  sc.num_classes = 10;
  sc.videos_per_class = 20;
  sc.num_frames = 32;
  sc.noise_sigma = 0.0;
  sc.seed = 4;
  const auto ds = generate_synthetic(sc);
  const auto bank = build_prototypes(ds.train, sc.num_classes);
  std::size_t misordered = 0;
  double worst_gap = 1.0;
  for (const auto& r : ds.train) {
    const auto g = guiding_saliency_scores(r, bank);
    double lo = 2.0, hi = -1.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if ((*r.saliency_mask)[i] == 1.0) lo = std::min(lo, g[i]);
      else hi = std::max(hi, g[i]);
    }
    if (hi >= 0.0) {
      worst_gap = std::min(worst_gap, lo - hi);
      if (!(lo > hi)) ++misordered;
    }
  }
  report(4, bad_labels == 0 && misordered == 0, since(t0), 60.0,
         std::to_string(bad_labels) + " invalid pseudo labels of 1000; " + std::to_string(misordered) + " of " +
             std::to_string(ds.train.size()) + " videos misordered, min salient-background gap " +
             fmt("%.4f", worst_gap));
}

// 5 and 7 --------------------------------------------------------------------
struct BenchmarkRun {
  std::string metrics_ns, metrics_base;
  std::string last_ns, last_base, best_ns, best_base;
  double ns_recall = 0, ns_top1 = 0, base_recall = 0, uni_recall = 0, uni_top1 = 0;
};

constexpr std::size_t kK = 4;

BenchmarkRun run_benchmark(const fs::path& dir) {
  SyntheticConfig sc;
  sc.num_classes = 10;
  sc.videos_per_class = 40;
  sc.val_videos_per_class = 10;
  sc.num_frames = 32;
  sc.light_dim = 32;
  sc.guiding_dim = 32;
  sc.salient_fraction = 0.25;
  sc.noise_sigma = 0.3;
  sc.seed = 2024;
  const auto ds = generate_synthetic(sc);
  const auto bank = build_prototypes(ds.train, sc.num_classes);

  ModelConfig mc;
  mc.light_dim = 32;
  mc.num_classes = 10;

  TrainConfig tc;
  tc.epochs = 30;
  tc.batch_size = 16;
  tc.lr_decay_epochs = {20, 25};
  tc.seed = 2024;
  tc.presample = {16, true};
  tc.eval_fusion = {FusionMode::index_union, 0.6, kK};

  BenchmarkRun out;
  tc.out_dir = dir / "ns";
  mc.gamma = 0.2;
  tc.frame_target = FrameTarget::ns;
  const TrainResult ns = train(ds.train, ds.val, &bank, mc, tc);

  tc.out_dir = dir / "baseline";
  mc.gamma = 0.0;
  tc.frame_target = FrameTarget::hard;
  const TrainResult base = train(ds.train, ds.val, nullptr, mc, tc);

  out.metrics_ns = read_file_bytes(dir / "ns" / "metrics.csv");
  out.metrics_base = read_file_bytes(dir / "baseline" / "metrics.csv");
  out.last_ns = read_file_bytes(dir / "ns" / "last.nsc");
  out.best_ns = read_file_bytes(dir / "ns" / "best.nsc");
  out.last_base = read_file_bytes(dir / "baseline" / "last.nsc");
  out.best_base = read_file_bytes(dir / "baseline" / "best.nsc");

  std::vector<VideoRecord> val;
  for (const auto& r : ds.val) val.push_back(presample(r, {16, false}));
  const FusionConfig fusion{FusionMode::index_union, 0.6, kK};
  const SamplerModel ns_model = load_checkpoint(dir / "ns" / "best.nsc");
  const SamplerModel base_model = load_checkpoint(dir / "baseline" / "best.nsc");
  const EvalSummary s_ns = evaluate_selection(
      val, [&](const VideoRecord& r, std::size_t) { return sample_video(ns_model, r, fusion).selected; }, 0.0);
  const EvalSummary s_base = evaluate_selection(
      val, [&](const VideoRecord& r, std::size_t) { return sample_video(base_model, r, fusion).selected; }, 0.0);
  const EvalSummary s_uni = evaluate_selection(
      val, [&](const VideoRecord& r, std::size_t) { return baseline_sample(r, BaselineMethod::uniform, kK, 0); }, 0.0);
  out.ns_recall = *s_ns.recall;
  out.ns_top1 = s_ns.top1;
  out.base_recall = *s_base.recall;
  out.uni_recall = *s_uni.recall;
  out.uni_top1 = s_uni.top1;
  return out;
}

BenchmarkRun criterion_benchmark(const fs::path& dir) {
  const auto t0 = Clock::now();
  const BenchmarkRun a = run_benchmark(dir);
  const bool pa = a.ns_recall >= a.uni_recall + 0.25;
  const bool pb = a.ns_top1 >= a.uni_top1 + 0.05;
  const bool pc = a.ns_recall > a.base_recall;
  std::ostringstream d;
  d << "(a) recall@4 NS " << fmt("%.4f", a.ns_recall) << " vs uniform " << fmt("%.4f", a.uni_recall) << " ["
    << (pa ? "ok" : "short") << "]; (b) top-1@4 NS " << fmt("%.4f", a.ns_top1) << " vs uniform "
    << fmt("%.4f", a.uni_top1) << " [" << (pb ? "ok" : "short") << "]; (c) recall@4 NS " << fmt("%.4f", a.ns_recall)
    << " vs baseline config " << fmt("%.4f", a.base_recall) << " [" << (pc ? "ok" : "short") << "]";
  report(5, pa && pb && pc, since(t0), 900.0, d.str());
  return a;
}

void criterion_determinism(const BenchmarkRun& a, const fs::path& dir) {
  const auto t0 = Clock::now();
  const BenchmarkRun b = run_benchmark(dir);
  const bool same = a.metrics_ns == b.metrics_ns && a.metrics_base == b.metrics_base && a.last_ns == b.last_ns &&
                    a.best_ns == b.best_ns && a.last_base == b.last_base && a.best_base == b.best_base;
  report(7, same, since(t0), 900.0,
         same ? "rerun produced byte-identical checkpoints and metric CSVs" : "rerun differs from the first run");
}

// 6 --------------------------------------------------------------------------
void criterion_metrics() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(66);
  double worst = 0.0;
  std::size_t nan_mismatch = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t v = 1 + rng() % 20, c = 1 + rng() % 5;
    Array scores({v, c});
    for (auto& x : scores.data()) x = trial % 2 ? static_cast<double>(rng() % 5) / 5.0 : std::ldexp(static_cast<double>(rng() >> 11), -53);
    std::vector<std::size_t> labels(v);
    for (auto& l : labels) l = rng() % c;
    const auto got = mean_average_precision(scores, labels);
    double total = 0;
    std::size_t used = 0;
    for (std::size_t k = 0; k < c; ++k) {
      std::vector<double> col(v);
      std::vector<bool> pos(v);
      for (std::size_t i = 0; i < v; ++i) {
        col[i] = scores.at(i, k);
        pos[i] = labels[i] == k;
      }
      const double ap = oracle::average_precision(col, pos);
      if (std::isnan(ap)) {
        if (!std::isnan(got.per_class[k])) ++nan_mismatch;
        continue;
      }
      worst = std::max(worst, std::abs(ap - got.per_class[k]));
      total += ap;
      ++used;
    }
    worst = std::max(worst, std::abs(got.map - total / static_cast<double>(used)));
  }

  // Boundary identities on a seeded dataset with an untrained sampler.
  SyntheticConfig sc;
  sc.num_classes = 5;
  sc.videos_per_class = 8;
  sc.num_frames = 20;
  sc.light_dim = 16;
  sc.noise_sigma = 0.4;
  sc.seed = 6;
  const auto ds = generate_synthetic(sc);
  std::vector<VideoRecord> recs;
  for (const auto& r : ds.train) recs.push_back(presample(r, {10, false}));
  ModelConfig mc;
  mc.light_dim = 16;
  mc.num_classes = 5;
  mc.max_frames = 10;
  Rng init = rng_stream(6, "init");
  const SamplerModel model(mc, init);
  const CostTable costs = CostTable::parse("recognizer=4.109\nextractor=0.320\nencoder=0.315\nvgm=0.004\nfsm=0.002\n");
  const std::vector<std::size_t> ks{1, 3, 10};
  const auto rows = run_comparison(recs, model, FusionConfig{}, ks, costs, 6);
  auto find = [&](const std::string& m, std::size_t k) {
    for (const auto& r : rows)
      if (r.method == m && r.k == k) return r.summary;
    return EvalSummary{};
  };
  bool dense_invariant = true, kt_equal = true;
  for (auto k : ks) {
    dense_invariant = dense_invariant && find("dense", k).top1 == find("dense", 1).top1 &&
                      find("dense", k).map == find("dense", 1).map && find("dense", k).recall == find("dense", 1).recall;
  }
  for (const char* m : {"nsnet", "uniform", "random", "topk_confidence"})
    kt_equal = kt_equal && find(m, 10).top1 == find("dense", 10).top1 && *find(m, 10).recall == 1.0;
  report(6, worst <= 1e-12 && nan_mismatch == 0 && dense_invariant && kt_equal, since(t0), 60.0,
         "max |AP - reference| " + fmt("%.2g", worst) + ", dense invariant to K: " + (dense_invariant ? "yes" : "no") +
             ", K=T samplers agree: " + (kt_equal ? "yes" : "no"));
}

}  // namespace

int main() {
  try {
    criterion_flops();
    criterion_gradients();
    criterion_fusion();
    criterion_supervision();
    testutil::TempDir tmp("acc_bench");
    const BenchmarkRun first = criterion_benchmark(tmp.path / "a");
    criterion_metrics();
    criterion_determinism(first, tmp.path / "b");
  } catch (const std::exception& e) {
    std::printf("acceptance aborted: %s\n", e.what());
    return 2;
  }
  return failures == 0 ? 0 : 1;
}

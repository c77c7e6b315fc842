// SPDX-License-Identifier: Apache-2.0
//
// Slow reference implementations used only by tests. They are written from
// the selection rules directly (rank counting, repeated arg-max, set logic)
// and share no code with the library.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <set>
#include <vector>

namespace oracle {

// Rank of frame i: how many frames beat it (higher score, or equal score and lower index).
inline std::size_t rank_of(const std::vector<double>& s, std::size_t i) {
  std::size_t r = 0;
  for (std::size_t j = 0; j < s.size(); ++j)
    if (s[j] > s[i] || (s[j] == s[i] && j < i)) ++r;
  return r;
}

// Frames listed by rank, built by inverting rank_of.
inline std::vector<std::size_t> by_rank(const std::vector<double>& s) {
  std::vector<std::size_t> out(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) out[rank_of(s, i)] = i;
  return out;
}

inline std::vector<std::size_t> topk(const std::vector<double>& s, std::size_t k) {
  std::vector<std::size_t> out;
  std::vector<bool> used(s.size(), false);
  for (std::size_t step = 0; step < k; ++step) {
    std::size_t best = s.size();
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (used[i]) continue;
      if (best == s.size() || s[i] > s[best]) best = i;
    }
    used[best] = true;
    out.push_back(best);
  }
  return out;
}

inline std::vector<std::size_t> score_add(const std::vector<double>& f, const std::vector<double>& v, std::size_t k,
                                          double a) {
  std::vector<double> s(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) s[i] = a * f[i] + (1.0 - a) * v[i];
  return topk(s, k);
}

inline std::vector<std::size_t> score_mul(const std::vector<double>& f, const std::vector<double>& v, std::size_t k) {
  std::vector<double> s(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) s[i] = f[i] * v[i];
  return topk(s, k);
}

inline std::vector<std::size_t> score_max(const std::vector<double>& f, const std::vector<double>& v, std::size_t k) {
  std::vector<double> s(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) s[i] = f[i] > v[i] ? f[i] : v[i];
  return topk(s, k);
}

// Smallest integer n with n >= x, tolerating representation error in x.
inline std::size_t ceil_tol(double x) {
  std::size_t n = 0;
  while (static_cast<double>(n) < x - 1e-9) ++n;
  return n;
}

inline std::vector<std::size_t> index_union(const std::vector<double>& f, const std::vector<double>& v, std::size_t k,
                                            double a) {
  const auto pf = by_rank(f), pv = by_rank(v);
  const std::size_t nf = std::min(k, ceil_tol(static_cast<double>(k) * a));
  const std::size_t nv = std::min(k, ceil_tol(static_cast<double>(k) * (1.0 - a)));
  std::vector<std::size_t> seq(pf.begin(), pf.begin() + static_cast<std::ptrdiff_t>(nf));
  std::set<std::size_t> in(seq.begin(), seq.end());
  for (std::size_t r = 0; r < nv; ++r)
    if (in.insert(pv[r]).second) seq.push_back(pv[r]);
  while (seq.size() > k) seq.pop_back();
  for (std::size_t r = 0; seq.size() < k; ++r)
    if (in.insert(pf[r]).second) seq.push_back(pf[r]);
  return seq;
}

inline std::vector<std::size_t> index_intersect(const std::vector<double>& f, const std::vector<double>& v,
                                                std::size_t k) {
  const std::size_t t = f.size();
  std::vector<std::size_t> out;
  std::set<std::size_t> taken;
  // Frames in both top-K sets, in frame-head rank order.
  for (std::size_t r = 0; r < t; ++r) {
    for (std::size_t i = 0; i < t; ++i) {
      if (rank_of(f, i) == r && r < k && rank_of(v, i) < k) {
        out.push_back(i);
        taken.insert(i);
      }
    }
  }
  bool frame_turn = true;
  while (out.size() < k) {
    const auto& s = frame_turn ? f : v;
    // Lowest rank >= K in this list whose frame is still free.
    std::size_t pick = t, pick_rank = t;
    for (std::size_t i = 0; i < t; ++i) {
      const std::size_t r = rank_of(s, i);
      if (r >= k && !taken.count(i) && r < pick_rank) {
        pick = i;
        pick_rank = r;
      }
    }
    if (pick != t) {
      out.push_back(pick);
      taken.insert(pick);
    }
    frame_turn = !frame_turn;
  }
  return out;
}

inline std::vector<std::size_t> index_join(const std::vector<double>& f, const std::vector<double>& v, std::size_t k) {
  const std::size_t t = f.size();
  std::vector<std::size_t> out;
  std::set<std::size_t> taken;
  while (out.size() < k) {
    // Best remaining (score, list, frame): higher score, then frame list, then lower frame.
    double best_s = 0;
    int best_list = -1;
    std::size_t best_i = 0;
    for (int list = 0; list < 2; ++list) {
      const auto& s = list == 0 ? f : v;
      for (std::size_t i = 0; i < t; ++i) {
        if (taken.count(i)) continue;
        const bool better = best_list < 0 || s[i] > best_s ||
                            (s[i] == best_s && (list < best_list || (list == best_list && i < best_i)));
        if (better) {
          best_s = s[i];
          best_list = list;
          best_i = i;
        }
      }
    }
    out.push_back(best_i);
    taken.insert(best_i);
  }
  return out;
}

// AP from its definition: mean over positives of precision at the positive's rank,
// ranks by score descending with ties to the earlier video.
inline double average_precision(const std::vector<double>& scores, const std::vector<bool>& positive) {
  const std::size_t v = scores.size();
  double sum = 0.0;
  std::size_t npos = 0;
  for (std::size_t i = 0; i < v; ++i) {
    if (!positive[i]) continue;
    ++npos;
    std::size_t rank = 1, hits_at_or_above = 1;
    for (std::size_t j = 0; j < v; ++j) {
      if (j == i) continue;
      const bool above = scores[j] > scores[i] || (scores[j] == scores[i] && j < i);
      if (above) {
        ++rank;
        if (positive[j]) ++hits_at_or_above;
      }
    }
    sum += static_cast<double>(hits_at_or_above) / static_cast<double>(rank);
  }
  return npos == 0 ? std::nan("") : sum / static_cast<double>(npos);
}

}  // namespace oracle

/* Copyright 2026 The dialearn Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Reference implementations the tests compare the library against. Each one
// is written from the definition, by brute force where possible, and shares
// no code path with the routine it checks.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dialearn/dialearn.hpp"

namespace oracle {

// Bitmask of the inform_zssp clauses a feature triple satisfies (bit k set
// for class k), evaluated literally from the three-class definition.
inline int zssp_clauses(double confidence, double fertility, bool rare) {
  int m = 0;
  if (confidence >= 0.6 && fertility <= 0.2 && !rare) m |= 1;
  if (confidence >= 0.5 && fertility <= 0.7 && !rare && (confidence < 0.6 || fertility > 0.2)) m |= 2;
  if (confidence < 0.5 || fertility > 0.7 || rare) m |= 4;
  return m;
}

// Hand-computed shaped rewards for f = -1, theta = 0.95.
// Rows: a_i in {-1, -0.5, 0, 0.5, 1}; columns: a_prev in the same order.
inline constexpr double kFeedbackLevels[5] = {-1.0, -0.5, 0.0, 0.5, 1.0};
inline constexpr double kShapedTable[5][5] = {
    {-0.95, -1.45, -1.95, -2.45, -2.95},
    {-0.475, -0.975, -1.475, -1.975, -2.475},
    {0.0, -0.5, -1.0, -1.5, -2.0},
    {0.475, -0.025, -0.525, -1.025, -1.525},
    {0.95, 0.45, -0.05, -0.55, -1.05},
};

// Q* of the 5-state chain: action 0 moves left, 1 moves right (walls hold),
// reward 1 for moving right in the last state.
struct Chain {
  static constexpr int kStates = 5;
  static int next(int s, int a) { return a == 1 ? std::min(s + 1, kStates - 1) : std::max(s - 1, 0); }
  static double reward(int s, int a) { return (s == kStates - 1 && a == 1) ? 1.0 : 0.0; }
};

inline std::vector<std::array<double, 2>> chain_value_iteration(double discount, double tol = 1e-13) {
  std::vector<std::array<double, 2>> q(Chain::kStates, {0.0, 0.0});
  for (int it = 0; it < 100000; ++it) {
    double delta = 0.0;
    auto next_q = q;
    for (int s = 0; s < Chain::kStates; ++s)
      for (int a = 0; a < 2; ++a) {
        const int ns = Chain::next(s, a);
        next_q[s][a] = Chain::reward(s, a) + discount * std::max(q[ns][0], q[ns][1]);
        delta = std::max(delta, std::abs(next_q[s][a] - q[s][a]));
      }
    q = next_q;
    if (delta < tol) break;
  }
  return q;
}

// Moving average over windows of `window` points every `shift` points, with
// the window centre as abscissa.
inline std::vector<std::pair<double, double>> naive_smooth(const std::vector<double>& y, std::size_t window,
                                                           std::size_t shift) {
  std::vector<std::pair<double, double>> out;
  for (std::size_t start = 0; start + window <= y.size(); start += shift) {
    double sum = 0.0;
    for (std::size_t i = start; i < start + window; ++i) sum += y[i];
    out.emplace_back(static_cast<double>(start) + (static_cast<double>(window) - 1.0) / 2.0,
                     sum / static_cast<double>(window));
  }
  return out;
}

inline double cosine(const std::vector<double>& u, const std::vector<double>& v) {
  double d = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    d += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0.0 || nv == 0.0) return 0.0;
  return std::clamp(d / std::sqrt(nu * nv), -1.0, 1.0);
}

// Exhaustive nearest neighbours: full sort by (similarity desc, id asc).
inline std::vector<std::pair<std::size_t, double>> exhaustive_knn(
    const std::vector<double>& q, const std::vector<std::pair<std::size_t, std::vector<double>>>& rows,
    std::size_t k) {
  std::vector<std::pair<std::size_t, double>> all;
  for (const auto& [id, v] : rows) all.emplace_back(id, cosine(q, v));
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (all.size() > k) all.resize(k);
  return all;
}

// Best reading of one chunk: top-k rows by cosine, summed coefficient
// mass per pattern, floored at zero; the null reading wins unless strictly
// beaten. Empty pattern means null.
struct Reading {
  std::string pattern;
  double score = 0.0;
};

inline Reading chunk_reading(const dialearn::KnowledgeBase& kb, const std::vector<std::string>& chunk,
                             const dialearn::ParserConfig& cfg) {
  std::vector<std::pair<std::size_t, std::vector<double>>> rows;
  for (std::size_t i = 0; i < kb.size(); ++i) rows.emplace_back(i, kb.row(i).vector);
  const auto q = kb.embeddings().embed_chunk(chunk);
  std::map<std::string, double> mass;
  for (const auto& [id, sim] : exhaustive_knn(q, rows, cfg.k))
    for (const auto& [p, c] : kb.row(id).coefficients) mass[p] += sim * c;
  Reading best{"", cfg.null_score};
  // Highest score, ties to the alphabetically first pattern.
  std::optional<Reading> top;
  for (const auto& [p, s] : mass) {
    const double v = std::max(0.0, s);
    if (!top || v > top->score) top = Reading{p, v};
  }
  if (top && top->score > cfg.null_score) best = *top;
  return best;
}

struct Segmentation {
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  std::vector<Reading> readings;
  double score = 0.0;
};

// Enumerates every segmentation into chunks of at most max_chunk words and
// keeps the best: highest total score, then fewer chunks, then the
// lexicographically longest chunk lengths from the left.
inline Segmentation brute_force_decode(const dialearn::KnowledgeBase& kb, const std::vector<std::string>& words,
                                       const dialearn::ParserConfig& cfg, double tie_tol = 1e-12) {
  const std::size_t n = words.size();
  std::map<std::pair<std::size_t, std::size_t>, Reading> memo;
  auto reading = [&](std::size_t i, std::size_t j) {
    auto key = std::make_pair(i, j);
    if (!memo.count(key))
      memo[key] = chunk_reading(kb, std::vector<std::string>(words.begin() + i, words.begin() + j), cfg);
    return memo[key];
  };
  std::optional<Segmentation> best;
  auto better = [&](const Segmentation& a, const Segmentation& b) {
    if (std::abs(a.score - b.score) > tie_tol) return a.score > b.score;
    if (a.spans.size() != b.spans.size()) return a.spans.size() < b.spans.size();
    for (std::size_t i = 0; i < a.spans.size(); ++i) {
      const auto la = a.spans[i].second - a.spans[i].first, lb = b.spans[i].second - b.spans[i].first;
      if (la != lb) return la > lb;
    }
    return false;
  };
  Segmentation cur;
  auto rec = [&](auto&& self, std::size_t i) -> void {
    if (i == n) {
      Segmentation s = cur;
      s.score = 0.0;
      for (const auto& r : s.readings) s.score += r.score;
      if (!best || better(s, *best)) best = s;
      return;
    }
    for (std::size_t len = 1; len <= cfg.max_chunk && i + len <= n; ++len) {
      cur.spans.emplace_back(i, i + len);
      cur.readings.push_back(reading(i, i + len));
      self(self, i + len);
      cur.spans.pop_back();
      cur.readings.pop_back();
    }
  };
  rec(rec, 0);
  return best.value_or(Segmentation{});
}

}  // namespace oracle

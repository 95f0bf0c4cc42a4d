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

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dialearn/error.hpp"
#include "dialearn/parser.hpp"

namespace dialearn {

enum class AdaptAction { Skip = 0, AskConfirm = 1, AskAnnotation = 2 };

inline constexpr std::array<AdaptAction, 3> kAdaptActions{AdaptAction::Skip, AdaptAction::AskConfirm,
                                                          AdaptAction::AskAnnotation};

inline std::string_view to_string(AdaptAction a) {
  switch (a) {
    case AdaptAction::Skip: return "Skip";
    case AdaptAction::AskConfirm: return "AskConfirm";
    case AdaptAction::AskAnnotation: return "AskAnnotation";
  }
  return "?";
}

inline AdaptAction parse_adapt_action(std::string_view s) {
  for (auto a : kAdaptActions)
    if (to_string(a) == s) return a;
  fail("unknown adaptation action '", s, "'");
}

// What the expert had to do for one corrected DA during re-annotation.
struct Correction {
  bool boundaries_given = true;
  int n_interim_questions = 0;  // 0..3: acttype, slot, value
};

struct AdaptOutcome {
  AdaptAction action = AdaptAction::Skip;
  bool accepted_whole = false;
  std::size_t n_das = 0;
  std::vector<Correction> corrections;
};

// Number of exchanges the adaptation cost the user.
inline int effort(const AdaptOutcome& o) {
  switch (o.action) {
    case AdaptAction::Skip: return 0;
    case AdaptAction::AskConfirm:
      return o.accepted_whole ? 1 : 1 + static_cast<int>(o.n_das);
    case AdaptAction::AskAnnotation: {
      if (o.accepted_whole) return 1;
      int e = 1;
      for (const auto& c : o.corrections) {
        if (c.n_interim_questions < 0 || c.n_interim_questions > 3)
          fail("a correction asks between 0 and 3 interim questions, got ", c.n_interim_questions);
        e += (c.boundaries_given ? 1 : 0) + c.n_interim_questions;
      }
      return e;
    }
  }
  return 0;
}

// Rows whose chunk is new or whose coefficients changed between two
// knowledge bases, the second derived from the first.
inline std::size_t changed_rows(const KnowledgeBase& before, const KnowledgeBase& after) {
  std::size_t changed = after.size() > before.size() ? after.size() - before.size() : 0;
  for (std::size_t i = 0; i < std::min(before.size(), after.size()); ++i)
    if (before.row(i).coefficients != after.row(i).coefficients) ++changed;
  return changed;
}

// 1 when nothing was learnt, 0 when every hypothesised DA taught the base something.
inline double gain_estimate(const KnowledgeBase& before, const KnowledgeBase& after,
                            const SemanticHypothesis& h) {
  const double denom = static_cast<double>(std::max<std::size_t>(1, h.das.size()));
  return std::clamp(1.0 - static_cast<double>(changed_rows(before, after)) / denom, 0.0, 1.0);
}

inline double loss(double gain, int phi, double gamma_loss, int phi_max) {
  if (phi_max <= 0) fail("phi_max must be positive");
  const double g = std::clamp(gain, 0.0, 1.0);
  const double p = std::clamp(static_cast<double>(phi), 0.0, static_cast<double>(phi_max));
  return std::clamp(gamma_loss * g + (1.0 - gamma_loss) * p / static_cast<double>(phi_max), 0.0, 1.0);
}

//------------------------------------------------------------------------------
// EXP3 over the three adaptation actions

struct BanditConfig {
  double eta = 0.1;
  double gamma_mix = 0.1;   // uniform exploration mixed into the sampling law
  int phi_max = 20;
  double gamma_loss = 0.5;  // weight of system improvement against user effort
};

struct BanditState {
  std::array<double, 3> weights{1.0, 1.0, 1.0};
  BanditConfig config;
  std::size_t t = 0;

  bool operator==(const BanditState& o) const {
    return weights == o.weights && t == o.t && config.eta == o.config.eta &&
           config.gamma_mix == o.config.gamma_mix && config.phi_max == o.config.phi_max &&
           config.gamma_loss == o.config.gamma_loss;
  }
};

inline std::array<double, 3> exp3_probabilities(const BanditState& s) {
  double total = 0.0;
  for (double w : s.weights) {
    if (!(w > 0.0) || !std::isfinite(w)) fail("bandit weights must be positive and finite");
    total += w;
  }
  const double mix = std::clamp(s.config.gamma_mix, 0.0, 1.0);
  std::array<double, 3> p{};
  for (std::size_t i = 0; i < 3; ++i) p[i] = (1.0 - mix) * s.weights[i] / total + mix / 3.0;
  return p;
}

template <typename Rng>
std::pair<AdaptAction, double> exp3_sample(const BanditState& s, Rng& rng) {
  const auto p = exp3_probabilities(s);
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double cum = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    cum += p[i];
    if (u < cum) return {kAdaptActions[i], p[i]};
  }
  return {kAdaptActions[2], p[2]};
}

inline BanditState exp3_update(BanditState s, AdaptAction action, double l, double p) {
  if (!(p > 0.0) || p > 1.0) fail("exp3_update needs a probability in (0,1], got ", p);
  if (l < 0.0 || l > 1.0) fail("exp3_update needs a loss in [0,1], got ", l);
  auto& w = s.weights[static_cast<std::size_t>(action)];
  w *= std::exp(-s.config.eta * l / p);
  // Rescale before the weights under- or overflow; sampling is scale-free.
  const double hi = *std::max_element(s.weights.begin(), s.weights.end());
  if (hi < 1e-100 || hi > 1e100)
    for (auto& x : s.weights) x /= hi;
  // A long-losing arm keeps a tiny positive weight instead of underflowing to 0.
  for (auto& x : s.weights) x = std::max(x, 1e-300);
  ++s.t;
  return s;
}

inline nlohmann::json to_json(const BanditState& s) {
  return {{"weights", s.weights},       {"eta", s.config.eta},
          {"gamma_mix", s.config.gamma_mix}, {"phi_max", s.config.phi_max},
          {"gamma_loss", s.config.gamma_loss}, {"t", s.t}};
}

inline BanditState bandit_from_json(const nlohmann::json& j) {
  BanditState s;
  j.at("weights").get_to(s.weights);
  s.config.eta = j.at("eta").get<double>();
  s.config.gamma_mix = j.at("gamma_mix").get<double>();
  s.config.phi_max = j.at("phi_max").get<int>();
  s.config.gamma_loss = j.at("gamma_loss").get<double>();
  s.t = j.at("t").get<std::size_t>();
  exp3_probabilities(s);  // validates weights
  return s;
}

}  // namespace dialearn

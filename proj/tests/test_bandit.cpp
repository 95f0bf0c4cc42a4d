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

#include <gtest/gtest.h>

#include "support.hpp"

using namespace dialearn;

namespace {

AdaptOutcome outcome(AdaptAction a, bool accepted, std::size_t n_das, std::vector<Correction> c = {}) {
  AdaptOutcome o;
  o.action = a;
  o.accepted_whole = accepted;
  o.n_das = n_das;
  o.corrections = std::move(c);
  return o;
}

SemanticHypothesis hyp(std::vector<std::pair<DialogueAct, Span>> das) {
  SemanticHypothesis h;
  for (auto& [a, s] : das) h.das.push_back({a, s, 1.0});
  return h;
}

}  // namespace

TEST(Effort, Table) {
  EXPECT_EQ(effort(outcome(AdaptAction::Skip, false, 3)), 0);
  EXPECT_EQ(effort(outcome(AdaptAction::AskConfirm, true, 3)), 1);
  EXPECT_EQ(effort(outcome(AdaptAction::AskConfirm, false, 2)), 3);
  EXPECT_EQ(effort(outcome(AdaptAction::AskConfirm, false, 5)), 6);
  EXPECT_EQ(effort(outcome(AdaptAction::AskAnnotation, true, 2)), 1);
  EXPECT_EQ(effort(outcome(AdaptAction::AskAnnotation, false, 1, {{true, 3}})), 5);
  EXPECT_EQ(effort(outcome(AdaptAction::AskAnnotation, false, 1, {{true, 1}})), 3);
  EXPECT_THROW(effort(outcome(AdaptAction::AskAnnotation, false, 1, {{true, 4}})), Error);
}

TEST(Effort, SimulatedExpert) {
  const DialogueAct a = make_act("inform", "area", "north"), b = make_act("hello");
  // Correct hypothesis: accepted straight away.
  const std::vector<TruthDA> truth{{a, {1, 2}}};
  EXPECT_EQ(effort(expert_confirm(hyp({{a, {1, 2}}}), truth).outcome), 1);
  EXPECT_EQ(effort(expert_annotate(hyp({{a, {1, 2}}}), truth).outcome), 1);
  // Two DAs, both wrong.
  const auto wrong = hyp({{b, {0, 1}}, {make_act("bye"), {1, 2}}});
  auto c = expert_confirm(wrong, truth);
  EXPECT_EQ(effort(c.outcome), 3);
  for (const auto& item : c.items) EXPECT_FALSE(item.accepted);
  // One fully new DA against an empty hypothesis.
  EXPECT_EQ(effort(expert_annotate(hyp({}), truth).outcome), 5);
  // Empty hypothesis, empty truth.
  EXPECT_EQ(effort(expert_confirm(hyp({}), {}).outcome), 1);
  EXPECT_TRUE(expert_confirm(hyp({}), {}).outcome.accepted_whole);
}

TEST(Loss, ExampleAndBounds) {
  EXPECT_DOUBLE_EQ(loss(0.4, 3, 0.5, 10), 0.35);
  EXPECT_THROW(loss(0.5, 1, 0.5, 0), Error);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-2.0, 3.0);
  for (int i = 0; i < 10000; ++i) {
    const double g = u(rng), gl = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const int phi = std::uniform_int_distribution<int>(-5, 60)(rng), pmax = std::uniform_int_distribution<int>(1, 40)(rng);
    const double l = loss(g, phi, gl, pmax);
    EXPECT_GE(l, 0.0);
    EXPECT_LE(l, 1.0);
    // Monotone in gain and effort.
    EXPECT_LE(l, loss(g + 0.1, phi, gl, pmax) + 1e-15);
    EXPECT_LE(l, loss(g, phi + 1, gl, pmax) + 1e-15);
  }
}

TEST(Gain, CountsChangedRows) {
  Models m = testing_support::make_models(1);
  const KnowledgeBase before = m.kb;
  SemanticHypothesis h = hyp({{make_act("hello"), {0, 1}}, {make_act("bye"), {1, 2}}});
  EXPECT_DOUBLE_EQ(gain_estimate(before, before, h), 1.0);
  const std::vector<std::string> words{"zq1", "zq2"};
  const KnowledgeBase after = apply_annotation(
      before, words, std::vector<AnnotationItem>{{{0, 1}, make_act("hello"), true}}, AnnotationMode::full);
  EXPECT_EQ(changed_rows(before, after), 1u);
  EXPECT_DOUBLE_EQ(gain_estimate(before, after, h), 0.5);
}

TEST(Exp3, SimplexAndUpdates) {
  BanditState s;
  std::mt19937_64 rng(4);
  for (int i = 0; i < 20000; ++i) {
    const auto p = exp3_probabilities(s);
    double total = 0.0;
    for (double x : p) {
      ASSERT_GT(x, 0.0);
      ASSERT_LE(x, 1.0);
      total += x;
    }
    ASSERT_NEAR(total, 1.0, 1e-12);
    const auto [a, pa] = exp3_sample(s, rng);
    EXPECT_EQ(pa, p[static_cast<std::size_t>(a)]);
    // Extreme losses push the weights toward the rescale guard.
    s = exp3_update(s, a, a == AdaptAction::Skip ? 0.0 : 1.0, pa);
  }
  EXPECT_EQ(s.t, 20000u);
}

TEST(Exp3, ZeroLossIsIdentity) {
  BanditState s;
  const auto once = exp3_update(s, AdaptAction::AskConfirm, 0.0, 0.3);
  EXPECT_EQ(once.weights, s.weights);
  const auto twice = exp3_update(once, AdaptAction::AskConfirm, 0.0, 0.3);
  EXPECT_EQ(twice.weights, once.weights);
  EXPECT_THROW(exp3_update(s, AdaptAction::Skip, 1.5, 0.3), Error);
  EXPECT_THROW(exp3_update(s, AdaptAction::Skip, 0.5, 0.0), Error);
}

TEST(Exp3, StationaryBestArm) {
  BanditState s;
  std::mt19937_64 rng(2024);
  const double means[3] = {0.1, 0.5, 0.9};
  std::size_t best = 0;
  for (int t = 0; t < 5000; ++t) {
    const auto [a, p] = exp3_sample(s, rng);
    const double l = std::bernoulli_distribution(means[static_cast<std::size_t>(a)])(rng) ? 1.0 : 0.0;
    s = exp3_update(s, a, l, p);
    if (t >= 4000 && a == AdaptAction::Skip) ++best;
  }
  EXPECT_GE(best, 700u);
}

TEST(Exp3, JsonRoundTrip) {
  BanditState s;
  s = exp3_update(s, AdaptAction::AskAnnotation, 0.7, 0.2);
  EXPECT_EQ(bandit_from_json(to_json(s)), s);
}

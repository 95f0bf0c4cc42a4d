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

SemanticHypothesis hyp(std::vector<DialogueAct> acts, double score = 0.9) {
  SemanticHypothesis h;
  std::size_t i = 0;
  for (auto& a : acts) {
    h.das.push_back({a, {i, i + 1}, score});
    ++i;
  }
  h.confidence = score;
  return h;
}

}  // namespace

TEST(Belief, StartsUniformOverEveryValue) {
  const TaskSpec t = generate_task(1);
  const Belief b = initial_belief(t);
  EXPECT_EQ(b.candidates.size(), t.database.size());
  for (const auto& s : t.ontology.slots) {
    double total = 0.0;
    for (const auto& [v, p] : b.marginals.at(s)) total += p;
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(Belief, NormalisedUnderFuzzedHypotheses) {
  const TaskSpec t = generate_task(1);
  const auto patterns = t.ontology.patterns();
  std::mt19937_64 rng(12);
  for (int d = 0; d < 200; ++d) {
    Belief b = initial_belief(t);
    for (int turn = 0; turn < 15; ++turn) {
      std::vector<DialogueAct> acts;
      const int n = std::uniform_int_distribution<int>(0, 4)(rng);
      for (int i = 0; i < n; ++i) acts.push_back(patterns[rng() % patterns.size()]);
      b = update_belief(t, b, hyp(acts, std::uniform_real_distribution<double>(0.0, 2.0)(rng)));
      for (const auto& [slot, m] : b.marginals) {
        double total = 0.0;
        for (const auto& [v, p] : m) {
          ASSERT_GE(p, 0.0);
          total += p;
        }
        ASSERT_NEAR(total, 1.0, 1e-9);
      }
      const auto s = summarize(b, quality_features(hyp(acts), std::max<std::size_t>(1, acts.size())), Protocol::RR);
      EXPECT_LT(s.index(), SummaryState::kCount);
    }
  }
}

TEST(Belief, InformRaisesValue) {
  const TaskSpec t = generate_task(1);
  const std::string slot = t.ontology.slots.front(), value = t.ontology.values_per_slot.at(slot).front();
  const Belief b0 = initial_belief(t);
  const Belief b1 = update_belief(t, b0, hyp({make_act("inform", slot, value)}));
  EXPECT_GT(b1.marginals.at(slot).at(value), b0.marginals.at(slot).at(value));
  EXPECT_EQ(top_value(b1.marginals.at(slot)).first, value);
  // Only confirmed slots filter the candidate list.
  EXPECT_EQ(b1.grounding.at(slot), Grounding::hypothesized);
  EXPECT_EQ(b1.candidates.size(), b0.candidates.size());
  Belief asked = b1;
  asked.pending_check = make_act("confirm", slot, value);
  const Belief b2 = update_belief(t, asked, hyp({make_act("affirm")}));
  EXPECT_EQ(b2.grounding.at(slot), Grounding::confirmed);
  EXPECT_LT(b2.candidates.size(), b0.candidates.size());
  EXPECT_EQ(b2.candidates.size(), lookup_entities(t, {{slot, value}}).size());
}

TEST(SummaryState, IndexBijection) {
  for (std::size_t i = 0; i < SummaryState::kCount; ++i) EXPECT_EQ(SummaryState::from_index(i).index(), i);
  EXPECT_THROW(SummaryState::from_index(SummaryState::kCount), Error);
  EXPECT_EQ(SummaryState::kCount, 1080u);
}

TEST(SummaryState, InformZsspOnlyUnderRR) {
  const TaskSpec t = generate_task(1);
  const Belief b = initial_belief(t);
  const QualityFeatures alarming{0.1, 0.9, true};
  EXPECT_EQ(summarize(b, alarming, Protocol::BR).inform_zssp, 0);
  EXPECT_EQ(summarize(b, alarming, Protocol::RR).inform_zssp, 2);
}

TEST(Feasibility, AskActsOnlyUnderRRAndNeverTwiceInARow) {
  const TaskSpec t = generate_task(1);
  Belief b = initial_belief(t);
  b.last_system_act = SummaryAct::Greet;
  for (auto p : {Protocol::ZH, Protocol::BH, Protocol::BR}) {
    const auto m = feasible_actions(b, p, false);
    EXPECT_FALSE(feasible(m, SummaryAct::AskConfirmZ));
    EXPECT_FALSE(feasible(m, SummaryAct::AskAnnotateZ));
  }
  EXPECT_TRUE(feasible(feasible_actions(b, Protocol::RR, false), SummaryAct::AskAnnotateZ));
  EXPECT_FALSE(feasible(feasible_actions(b, Protocol::RR, true), SummaryAct::AskAnnotateZ));
  EXPECT_FALSE(feasible(feasible_actions(b, Protocol::RR, true), SummaryAct::AskConfirmZ));
}

TEST(Handcrafted, AlwaysPicksAFeasibleDialogueAct) {
  const TaskSpec t = generate_task(1);
  std::mt19937_64 rng(2);
  for (std::size_t i = 0; i < SummaryState::kCount; ++i) {
    ActMask m{};
    for (std::size_t a = 0; a < kNumDialogueSummaryActs; ++a) m[a] = rng() % 2;
    m[static_cast<std::size_t>(SummaryAct::Bye)] = true;
    const SummaryAct a = handcrafted_act(SummaryState::from_index(i), m);
    EXPECT_TRUE(feasible(m, a));
    EXPECT_FALSE(is_ask(a));
  }
}

TEST(Templates, RenderAndExpand) {
  EXPECT_EQ(render("a {x} b {y}", {{"x", "1"}, {"y", "2"}}), "a 1 b 2");
  const TaskSpec t = generate_task(1);
  Belief b = initial_belief(t);
  const auto a = expand_action(t, SummaryAct::Offer, b, default_templates());
  ASSERT_TRUE(a.entity.has_value());
  EXPECT_NE(t.find_entity(*a.entity), nullptr);
  EXPECT_FALSE(a.text.empty());
}

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

#include <fstream>
#include <set>

#include "support.hpp"

using namespace dialearn;

TEST(Task, DefaultSizes) {
  const TaskSpec t = generate_task(1);
  EXPECT_EQ(t.ontology.acttypes.size(), 16u);
  EXPECT_EQ(t.ontology.slots.size(), 9u);
  EXPECT_EQ(t.ontology.n_values(), 51u);
  EXPECT_EQ(t.ontology.n_lexical_forms(), 53u);
  EXPECT_EQ(t.database.size(), 300u);
  EXPECT_TRUE(validate_ontology(t.ontology).empty());
  for (const auto& e : t.database) EXPECT_TRUE(validate_entity(t.ontology, e).empty());
}

TEST(Task, DeterministicPerSeed) {
  EXPECT_EQ(generate_task(7), generate_task(7));
  EXPECT_FALSE(generate_task(7) == generate_task(8));
}

TEST(Task, ParaphrasesAreHeldOut) {
  const TaskSpec t = generate_task(3);
  std::set<std::string> lexicon_words;
  for (const auto& [p, forms] : t.ontology.lexicon)
    for (const auto& f : forms)
      for (const auto& w : tokenize(f)) lexicon_words.insert(w);
  for (const auto& [s, vs] : t.ontology.values_per_slot) lexicon_words.insert(vs.begin(), vs.end());
  for (const auto& p : t.ontology.patterns()) {
    ASSERT_TRUE(t.paraphrases.count(p.str())) << p.str();
    for (const auto& w : t.paraphrases.at(p.str())) {
      EXPECT_EQ(tokenize(w).size(), 1u);
      EXPECT_FALSE(lexicon_words.count(w)) << w;
    }
  }
}

TEST(Task, SaveLoadRoundTrip) {
  const auto dir = testing_support::temp_dir("task");
  const TaskSpec t = generate_task(5);
  save_task(t, dir / "task.jsonl");
  EXPECT_EQ(load_task(dir / "task.jsonl"), t);
}

TEST(Task, LoadErrors) {
  const auto dir = testing_support::temp_dir("task_err");
  try {
    load_task(dir / "missing.jsonl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), Error::Kind::not_found);
  }
  std::ofstream(dir / "bad.jsonl") << "{not json\n";
  try {
    load_task(dir / "bad.jsonl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), Error::Kind::format);
  }
}

TEST(Task, RejectsImpossibleSizes) {
  TaskSizes sz;
  sz.n_values = 3;
  EXPECT_THROW(generate_task(1, sz), Error);
  sz = {};
  sz.n_slots = 0;
  EXPECT_THROW(generate_task(1, sz), Error);
}

TEST(Task, ActRoundTrip) {
  for (const char* s : {"hello()", "request(area)", "inform(area=north)"}) EXPECT_EQ(parse_act(s).str(), s);
  EXPECT_THROW(parse_act("inform(area=)"), Error);
  EXPECT_THROW(parse_act("(x)"), Error);
}

TEST(Task, LookupFiltersByEveryConstraint) {
  const TaskSpec t = generate_task(2);
  const auto& e = t.database.front();
  Constraints c{{t.ontology.slots[0], e.attributes.at(t.ontology.slots[0])},
                {t.ontology.slots[1], e.attributes.at(t.ontology.slots[1])}};
  auto hits = lookup_entities(t, c);
  std::size_t expected = 0;
  for (const auto& x : t.database)
    expected += x.attributes.at(t.ontology.slots[0]) == c.begin()->second &&
                x.attributes.at(t.ontology.slots[1]) == std::next(c.begin())->second;
  EXPECT_EQ(hits.size(), expected);
  EXPECT_THROW(lookup_entities(t, {{"nope", "x"}}), Error);
}

TEST(Simulator, GoalIdentifiesTarget) {
  const TaskSpec t = generate_task(1);
  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    UserGoal g = sample_goal(t, rng, 15);
    EXPECT_GE(g.agenda.size(), 3u);
    Constraints c;
    for (const auto& a : g.agenda) c[*a.slot] = *a.value;
    auto hits = lookup_entities(t, c);
    ASSERT_EQ(hits.size(), 1u);
    EXPECT_EQ(hits.front()->id, g.target.id);
  }
}

TEST(Simulator, TruthSpansPointAtParaphrases) {
  const TaskSpec t = generate_task(1);
  std::mt19937_64 rng(3);
  SimConfig sc;
  sc.paraphrase_noise = 0.0;
  sc.oov_rate = 0.0;
  UserGoal g = sample_goal(t, rng, 15);
  UserSimulator<std::mt19937_64> user(t, g, sc, rng);
  for (int i = 0; i < 50; ++i) {
    Utterance u = user.realize({make_act("hello"), g.agenda.front()});
    ASSERT_EQ(u.truth.size(), 2u);
    for (const auto& d : u.truth) {
      ASSERT_EQ(d.span.length(), 1u);
      const auto& ps = t.paraphrases.at(d.act.str());
      EXPECT_NE(std::find(ps.begin(), ps.end(), u.words[d.span.start]), ps.end());
    }
  }
}

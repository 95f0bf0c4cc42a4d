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

#include "oracles.hpp"
#include "support.hpp"

using namespace dialearn;

namespace {

RunConfig small_run(Protocol p, const std::filesystem::path& out) {
  RunConfig c;
  c.protocol = p;
  c.n_train = 12;
  c.n_test = 6;
  c.out = out;
  return c;
}

template <typename F>
Error::Kind error_kind(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return Error::Kind::invalid_argument;
}

}  // namespace

TEST(Config, Defaults) {
  RunConfig c;
  EXPECT_EQ(c.train_budget(), 140u);
  EXPECT_EQ(c.test_budget(), 48u);
  c.protocol = Protocol::ZH;
  EXPECT_EQ(c.train_budget(), 0u);
  EXPECT_EQ(c.test_budget(), 94u);
  c.protocol = Protocol::BH;
  EXPECT_EQ(c.train_budget(), 80u);
}

TEST(Config, ParsesKeysAndComments) {
  RunConfig c;
  apply_config_text(c,
                    "# comment\n"
                    "protocol = rr\n"
                    "n_train = 30   # trailing\n"
                    "\n"
                    "eta = 0.25\n"
                    "discount=0.9\n"
                    "theta = 0.5\n"
                    "feedback_strategy = good_only\n"
                    "per_turn_policy_updates = true\n");
  EXPECT_EQ(c.protocol, Protocol::RR);
  EXPECT_EQ(c.train_budget(), 30u);
  EXPECT_EQ(c.bandit.eta, 0.25);
  EXPECT_EQ(c.ktd.discount, 0.9);
  EXPECT_EQ(c.reward.theta, 0.5);
  EXPECT_EQ(c.sim.feedback, FeedbackStrategy::good_only);
  EXPECT_TRUE(c.per_turn_policy_updates);
}

TEST(Config, ErrorsCarryLineNumbers) {
  RunConfig c;
  for (const char* bad : {"\nunknown_key = 1\n", "\nn_train = many\n", "\nno equals sign\n", "\nprotocol = xx\n"}) {
    try {
      apply_config_text(c, bad, "f.cfg");
      ADD_FAILURE() << bad;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), Error::Kind::format);
      EXPECT_NE(std::string(e.what()).find("f.cfg:2"), std::string::npos) << e.what();
    }
  }
  EXPECT_EQ(error_kind([] { load_run_config("/nonexistent/x.cfg"); }), Error::Kind::not_found);
}

TEST(Seeds, StreamsAreDistinct) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t stream : {kTrainSession, kTrainUser, kTestSession, kTestUser})
    for (std::uint64_t i = 0; i < 200; ++i) seen.insert(derive_seed(1, stream, i));
  EXPECT_EQ(seen.size(), 800u);
  EXPECT_EQ(derive_seed(3, 1, 4), derive_seed(3, 1, 4));
  EXPECT_NE(derive_seed(3, 1, 4), derive_seed(4, 1, 4));
}

TEST(Curve, MatchesNaiveSmoothing) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> y(rng() % 200);
    for (auto& v : y) v = std::uniform_real_distribution<double>(-10, 30)(rng);
    const std::size_t w = 1 + rng() % 30, s = 1 + rng() % 10;
    const auto got = smooth_curve(y, w, s);
    const auto want = oracle::naive_smooth(y, w, s);
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      EXPECT_EQ(got[i].first, want[i].first);
      EXPECT_NEAR(got[i].second, want[i].second, 1e-9);
    }
  }
  EXPECT_TRUE(smooth_curve({1, 2, 3}, 20, 5).empty());
  EXPECT_THROW(smooth_curve({1}, 0, 5), Error);
}

TEST(Metrics, FileRoundTrip) {
  const auto dir = testing_support::temp_dir("metrics");
  MetricsLog log;
  for (std::size_t i = 0; i < 5; ++i) log.rows.push_back({i, i % 2 == 0, -1.0 / 3.0 * i, i + 2, 1, 2, 3, 100 + i, 0.1 * i});
  write_metrics(log, dir / "m.csv", dir / "m.jsonl");
  EXPECT_EQ(read_metrics_jsonl(dir / "m.jsonl"), log);
  EXPECT_DOUBLE_EQ(log.success_rate(), 60.0);
  EXPECT_EQ(log.asks(), 25u);
  std::ifstream csv(dir / "m.csv");
  std::string head;
  std::getline(csv, head);
  EXPECT_EQ(head, "index,success,reward,n_turns,n_skip,n_ask_confirm,n_ask_annotation,kb_rows,epsilon");
}

TEST(Harness, ReproducibleMetrics) {
  const auto dir = testing_support::temp_dir("repro");
  for (auto p : {Protocol::BH, Protocol::RR}) {
    RunConfig c = small_run(p, dir / "a");
    const TrainingResult a = run_training(c);
    c.out = dir / "b";
    const TrainingResult b = run_training(c);
    EXPECT_EQ(a.log, b.log);
    EXPECT_EQ(evaluate(a.models, c), evaluate(b.models, c));
    c.seed = 2;
    c.out = dir / "c";
    EXPECT_NE(run_training(c).log, a.log);
  }
}

TEST(Harness, SaveLoadPreservesDecodingAndGreedyChoices) {
  const auto dir = testing_support::temp_dir("saveload");
  RunConfig c = small_run(Protocol::BR, dir);
  const TrainingResult r = run_training(c);
  const LoadedModel back = load_model(dir);
  EXPECT_EQ(back.protocol, Protocol::BR);
  EXPECT_TRUE(back.models.kb.same_content(r.models.kb));
  EXPECT_EQ(back.models.bandit, r.models.bandit);
  for (const auto& u : testing_support::random_utterances(*r.models.task, 100, 6, 77))
    EXPECT_EQ(to_json(decode(back.models.kb, u)), to_json(decode(r.models.kb, u)));
  std::mt19937_64 rng(5), r1(1), r2(1);
  for (int i = 0; i < 100; ++i) {
    const std::size_t s = rng() % SummaryState::kCount;
    std::vector<bool> mask(kNumSummaryActs);
    for (std::size_t a = 0; a < mask.size(); ++a) mask[a] = rng() % 2;
    mask[static_cast<std::size_t>(SummaryAct::Bye)] = true;
    EXPECT_EQ(select_action(back.models.q, s, mask, 0.0, r1), select_action(r.models.q, s, mask, 0.0, r2));
  }
  EXPECT_EQ(evaluate(back.models, c), evaluate(r.models, c));
}

TEST(Harness, ZeroShotArtifactsEqualInitialOnes) {
  const auto dir = testing_support::temp_dir("zh");
  RunConfig c = small_run(Protocol::ZH, dir / "run");
  run_training(c);
  save_model(dir / "init", build_initial_models(c), Protocol::ZH);
  for (const char* f : {"kb.jsonl", "model.json", "task.jsonl", "vectors.txt"}) {
    std::ifstream a(dir / "run" / f), b(dir / "init" / f);
    std::stringstream sa, sb;
    sa << a.rdbuf();
    sb << b.rdbuf();
    EXPECT_EQ(sa.str(), sb.str()) << f;
  }
}

TEST(Harness, TaskFileAndVectorsFileAreUsed) {
  const auto dir = testing_support::temp_dir("taskfile");
  const TaskSpec t = generate_task(42);
  save_task(t, dir / "task.jsonl");
  save_vectors(synthesize_embeddings(t), dir / "vectors.txt");
  RunConfig c = small_run(Protocol::ZH, dir / "out");
  c.task_file = dir / "task.jsonl";
  c.vectors_file = dir / "vectors.txt";
  const Models m = build_initial_models(c);
  EXPECT_EQ(*m.task, t);
  EXPECT_EQ(m.embeddings->size(), synthesize_embeddings(t).size());
}

TEST(Harness, LoadModelErrors) {
  const auto dir = testing_support::temp_dir("load_err");
  EXPECT_EQ(error_kind([&] { load_model(dir / "absent"); }), Error::Kind::not_found);
  RunConfig c = small_run(Protocol::ZH, dir / "m");
  run_training(c);
  std::filesystem::remove(dir / "m" / "kb.jsonl");
  try {
    load_model(dir / "m");
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), Error::Kind::not_found);
    EXPECT_NE(std::string(e.what()).find("kb.jsonl"), std::string::npos);
  }
  run_training(c);
  std::ofstream(dir / "m" / "model.json") << "{\"format\": \"dialearn-model\", \"version\": 99}";
  EXPECT_EQ(error_kind([&] { load_model(dir / "m"); }), Error::Kind::format);
  std::ofstream(dir / "m" / "model.json") << "{broken";
  EXPECT_EQ(error_kind([&] { load_model(dir / "m"); }), Error::Kind::format);
}

TEST(Harness, UnwritableOutput) {
  const auto dir = testing_support::temp_dir("unwritable");
  std::ofstream(dir / "file") << "x";
  EXPECT_EQ(error_kind([&] { ensure_writable(dir / "file" / "sub"); }), Error::Kind::io);
}

TEST(Invariants, FuzzedTurns) {
  for (auto p : {Protocol::RR, Protocol::BR}) {
    const auto r = testing_support::fuzz_invariants(p, 2000, 3);
    EXPECT_GE(r.turns, 2000u);
    EXPECT_EQ(r.violations, 0u);
    if (p == Protocol::RR) {
      EXPECT_GT(r.asks, 0u);
    }
  }
}

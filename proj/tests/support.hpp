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

// Fixtures shared by the test binaries.

#pragma once

#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "dialearn/dialearn.hpp"

namespace testing_support {

using namespace dialearn;

inline Models make_models(std::uint64_t task_seed = 1, const SynthesisOptions& so = {}) {
  auto task = std::make_shared<const TaskSpec>(generate_task(task_seed));
  auto emb = std::make_shared<const EmbeddingTable>(synthesize_embeddings(*task, so));
  return initial_models(task, emb, BanditConfig{}, KtdConfig{});
}

// Random utterances of 1..max_len tokens over the task's surface forms,
// fillers and out-of-vocabulary strings.
inline std::vector<std::vector<std::string>> random_utterances(const TaskSpec& task, std::size_t count,
                                                               std::size_t max_len, std::uint64_t seed) {
  std::vector<std::string> vocab(task.fillers.begin(), task.fillers.end());
  for (const auto& [p, forms] : task.ontology.lexicon)
    for (const auto& f : forms)
      for (const auto& w : tokenize(f)) vocab.push_back(w);
  for (const auto& [p, ws] : task.paraphrases) vocab.insert(vocab.end(), ws.begin(), ws.end());
  for (const auto& [s, vs] : task.ontology.values_per_slot) vocab.insert(vocab.end(), vs.begin(), vs.end());
  std::mt19937_64 rng(seed);
  std::vector<std::vector<std::string>> out;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(1, max_len)(rng);
    std::vector<std::string> u;
    for (std::size_t j = 0; j < n; ++j) {
      if (std::uniform_int_distribution<int>(0, 19)(rng) == 0)
        u.push_back("zq" + std::to_string(std::uniform_int_distribution<int>(100, 999)(rng)));
      else
        u.push_back(vocab[std::uniform_int_distribution<std::size_t>(0, vocab.size() - 1)(rng)]);
    }
    out.push_back(std::move(u));
  }
  return out;
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("dialearn_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

// Checks the two engine invariants on every belief the session produced:
// every slot marginal is a distribution, and no two consecutive system turns
// are annotation requests. Returns the number of violations.
inline std::size_t invariant_violations(const DialogueSession& s) {
  std::size_t bad = 0;
  for (const auto& b : s.belief_snapshots())
    for (const auto& [slot, m] : b.marginals) {
      double total = 0.0;
      for (const auto& [v, p] : m) {
        if (!(p >= 0.0) || !std::isfinite(p)) ++bad;
        total += p;
      }
      if (std::abs(total - 1.0) > 1e-9) ++bad;
    }
  const auto& t = s.transcript();
  for (std::size_t i = 1; i < t.size(); ++i)
    if (is_ask(t[i].system_act) && is_ask(t[i - 1].system_act)) ++bad;
  return bad;
}

struct FuzzResult {
  std::size_t turns = 0;
  std::size_t violations = 0;
  std::size_t asks = 0;
};

// Plays simulated dialogues under `protocol` with exploration until at least
// `min_turns` system turns were produced, checking invariants after each.
inline FuzzResult fuzz_invariants(Protocol protocol, std::size_t min_turns, std::uint64_t seed) {
  Models models = make_models(1);
  EngineConfig ec;
  ec.protocol = protocol;
  ec.learning = true;
  ec.epsilon = 0.5;
  SimConfig sc;
  sc.paraphrase_noise = 0.2;
  sc.oov_rate = 0.1;
  FuzzResult out;
  for (std::uint64_t d = 0; out.turns < min_turns; ++d) {
    std::mt19937_64 user_rng(seed * 7919 + d);
    UserGoal goal = sample_goal(*models.task, user_rng, sc.patience);
    UserSimulator<std::mt19937_64> user(*models.task, goal, sc, user_rng);
    DialogueSession session(models, ec, seed * 104729 + d);
    TurnResult r = session.opening();
    while (true) {
      const auto& last = session.transcript().back();
      if (!is_ask(last.system_act)) session.feedback(expert_turn_feedback(last.state, last.system_act));
      auto u = user.respond(*r.system);
      if (!u || session.ended() || session.n_dialogue_turns() >= sc.patience) break;
      r = session.user_turn(u->text);
      while (r.prompt == Prompt::confirm_list || r.prompt == Prompt::annotation_form)
        r = session.submit_annotation(r.prompt == Prompt::confirm_list ? expert_confirm(r.hypothesis, u->truth)
                                                                       : expert_annotate(r.hypothesis, u->truth));
    }
    out.violations += invariant_violations(session);
    out.turns += session.n_system_turns();
    for (const auto& t : session.transcript()) out.asks += is_ask(t.system_act);
    session.finalize(judge_success(*models.task, user.offered(), goal));
  }
  return out;
}

}  // namespace testing_support

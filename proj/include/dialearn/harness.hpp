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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dialearn/protocol.hpp"

namespace dialearn {

//------------------------------------------------------------------------------
// Run configuration

struct RunConfig {
  Protocol protocol = Protocol::BR;
  std::optional<std::size_t> n_train;  // defaults per protocol, see train_budget()
  std::optional<std::size_t> n_test;
  std::uint64_t seed = 1;
  std::uint64_t task_seed = 1;
  std::optional<std::filesystem::path> task_file;
  std::optional<std::filesystem::path> vectors_file;
  std::optional<std::filesystem::path> templates_file;
  std::filesystem::path out = "run";

  TaskSizes task;
  SynthesisOptions embeddings;
  ParserConfig parser;
  BanditConfig bandit;
  KtdConfig ktd;
  RewardConfig reward;
  BucketConfig buckets;
  SimConfig sim;
  double epsilon_start = 0.3;
  double epsilon_end = 0.05;
  std::size_t epsilon_span = 100;
  bool per_turn_policy_updates = false;

  std::size_t train_budget() const {
    if (n_train) return *n_train;
    switch (protocol) {
      case Protocol::ZH: return 0;
      case Protocol::BH: return 80;
      default: return 140;
    }
  }
  std::size_t test_budget() const {
    if (n_test) return *n_test;
    return protocol == Protocol::ZH ? 94 : 48;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  std::istringstream in(v);
  T x{};
  in >> x;
  if (!in || !in.eof()) fail(Error::Kind::invalid_argument, "config key '", key, "': bad number '", v, "'");
  return x;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  fail(Error::Kind::invalid_argument, "config key '", key, "': expected a boolean, got '", v, "'");
}

}  // namespace detail

// Applies one key = value setting; unknown keys are errors.
inline void set_config_value(RunConfig& c, const std::string& key, const std::string& v) {
  using detail::parse_bool;
  using detail::parse_number;
  using Setter = std::function<void(const std::string&)>;
  auto sz = [&](std::size_t& f) -> Setter { return [&, key](const std::string& s) { f = parse_number<std::size_t>(key, s); }; };
  auto dbl = [&](double& f) -> Setter { return [&, key](const std::string& s) { f = parse_number<double>(key, s); }; };
  const std::map<std::string, Setter> table{
      {"protocol", [&](const std::string& s) { c.protocol = parse_protocol(s); }},
      {"n_train", [&](const std::string& s) { c.n_train = parse_number<std::size_t>(key, s); }},
      {"n_test", [&](const std::string& s) { c.n_test = parse_number<std::size_t>(key, s); }},
      {"seed", [&](const std::string& s) { c.seed = parse_number<std::uint64_t>(key, s); }},
      {"task_seed", [&](const std::string& s) { c.task_seed = parse_number<std::uint64_t>(key, s); }},
      {"task_file", [&](const std::string& s) { c.task_file = s; }},
      {"vectors_file", [&](const std::string& s) { c.vectors_file = s; }},
      {"templates_file", [&](const std::string& s) { c.templates_file = s; }},
      {"out", [&](const std::string& s) { c.out = s; }},
      {"n_acttypes", sz(c.task.n_acttypes)},
      {"n_slots", sz(c.task.n_slots)},
      {"n_values", sz(c.task.n_values)},
      {"n_lexical_forms", sz(c.task.n_lexical_forms)},
      {"n_entities", sz(c.task.n_entities)},
      {"n_paraphrases", sz(c.task.n_paraphrases)},
      {"n_fillers", sz(c.task.n_fillers)},
      {"value_distribution",
       [&](const std::string& s) {
         if (s == "round_robin") c.task.distribution = ValueDistribution::round_robin;
         else if (s == "random") c.task.distribution = ValueDistribution::random;
         else fail(Error::Kind::invalid_argument, "value_distribution must be round_robin or random");
       }},
      {"embedding_dim", sz(c.embeddings.dim)},
      {"embedding_filler_dims", sz(c.embeddings.filler_dims)},
      {"embedding_lexicon_noise", dbl(c.embeddings.lexicon_noise)},
      {"embedding_paraphrase_noise", dbl(c.embeddings.paraphrase_noise)},
      {"oov_policy",
       [&](const std::string& s) {
         if (s == "zero") c.embeddings.oov = OovPolicy::zero;
         else if (s == "hash_random") c.embeddings.oov = OovPolicy::hash_random;
         else fail(Error::Kind::invalid_argument, "oov_policy must be zero or hash_random");
       }},
      {"similarity",
       [&](const std::string& s) {
         if (s == "cosine") c.parser.similarity = SimilarityKind::cosine;
         else if (s == "dot") c.parser.similarity = SimilarityKind::dot;
         else fail(Error::Kind::invalid_argument, "similarity must be cosine or dot");
       }},
      {"k", sz(c.parser.k)},
      {"max_chunk", sz(c.parser.max_chunk)},
      {"null_score", dbl(c.parser.null_score)},
      {"reject_decay", dbl(c.parser.reject_decay)},
      {"eta", dbl(c.bandit.eta)},
      {"gamma_mix", dbl(c.bandit.gamma_mix)},
      {"phi_max", [&](const std::string& s) { c.bandit.phi_max = parse_number<int>(key, s); }},
      {"gamma_loss", dbl(c.bandit.gamma_loss)},
      {"prior_var", dbl(c.ktd.prior_var)},
      {"process_noise", dbl(c.ktd.process_noise)},
      {"observation_noise", dbl(c.ktd.observation_noise)},
      {"discount", dbl(c.ktd.discount)},
      {"ut_kappa", dbl(c.ktd.ut_kappa)},
      {"theta", dbl(c.reward.theta)},
      {"success_bonus", dbl(c.reward.success_bonus)},
      {"top_low", dbl(c.buckets.top_low)},
      {"top_high", dbl(c.buckets.top_high)},
      {"few_max", sz(c.buckets.few_max)},
      {"epsilon_start", dbl(c.epsilon_start)},
      {"epsilon_end", dbl(c.epsilon_end)},
      {"epsilon_span", sz(c.epsilon_span)},
      {"per_turn_policy_updates", [&](const std::string& s) { c.per_turn_policy_updates = parse_bool(key, s); }},
      {"sim_paraphrase_noise", dbl(c.sim.paraphrase_noise)},
      {"sim_oov_rate", dbl(c.sim.oov_rate)},
      {"sim_filler_rate", dbl(c.sim.filler_rate)},
      {"sim_request_after_offer", dbl(c.sim.request_after_offer)},
      {"patience", sz(c.sim.patience)},
      {"feedback_strategy", [&](const std::string& s) { c.sim.feedback = parse_feedback_strategy(s); }},
  };
  auto it = table.find(key);
  if (it == table.end()) fail(Error::Kind::invalid_argument, "unknown config key '", key, "'");
  it->second(v);
}

// "key = value" lines; '#' starts a comment.
inline void apply_config_text(RunConfig& c, const std::string& text, const std::string& origin = "config") {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(Error::Kind::format, origin, ":", lineno, ": expected 'key = value'");
    try {
      set_config_value(c, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    } catch (const Error& e) {
      fail(Error::Kind::format, origin, ":", lineno, ": ", e.what());
    }
  }
}

inline RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {}) {
  std::ifstream in(path);
  if (!in) fail(Error::Kind::not_found, "cannot open config file '", path.string(), "'");
  std::stringstream ss;
  ss << in.rdbuf();
  apply_config_text(base, ss.str(), path.string());
  return base;
}

inline EngineConfig engine_config(const RunConfig& c, bool learning) {
  EngineConfig e;
  e.protocol = c.protocol;
  e.parser = c.parser;
  e.buckets = c.buckets;
  e.reward = c.reward;
  e.templates = c.templates_file ? load_templates(*c.templates_file) : default_templates();
  e.learning = learning;
  e.per_turn_policy_updates = c.per_turn_policy_updates;
  return e;
}

//------------------------------------------------------------------------------
// Seeds

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Independent streams per (run seed, purpose, dialogue index).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  return splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ index);
}

enum SeedStream : std::uint64_t { kTrainSession = 1, kTrainUser = 2, kTestSession = 3, kTestUser = 4 };

//------------------------------------------------------------------------------
// One simulated dialogue

struct SimulatedDialogue {
  DialogueRecord record;
  UserGoal goal;
  std::size_t exp3_updates = 0;
};

// Plays a full dialogue between the session and a simulated user; the
// simulated expert answers annotation prompts and, when `expert_feedback`,
// scores every system dialogue act. Patience counts dialogue moves only:
// annotation exchanges are the expert's teaching time under every protocol.
inline SimulatedDialogue simulate_dialogue(Models& models, const EngineConfig& ec, const SimConfig& sc,
                                           bool expert_feedback, std::uint64_t session_seed,
                                           std::uint64_t user_seed) {
  std::mt19937_64 user_rng(user_seed);
  UserGoal goal = sample_goal(*models.task, user_rng, sc.patience);
  UserSimulator<std::mt19937_64> user(*models.task, goal, sc, user_rng);
  DialogueSession session(models, ec, session_seed);
  TurnResult r = session.opening();
  while (true) {
    const TurnTranscript& last = session.transcript().back();
    if (expert_feedback && !is_ask(last.system_act))
      session.feedback(expert_turn_feedback(last.state, last.system_act, sc.feedback));
    std::optional<Utterance> u = user.respond(*r.system);  // also notes offers made on the last turn
    if (!u || session.ended() || session.n_dialogue_turns() >= sc.patience) break;
    r = session.user_turn(u->text);
    while (r.prompt == Prompt::confirm_list || r.prompt == Prompt::annotation_form) {
      const ExpertResult e = r.prompt == Prompt::confirm_list ? expert_confirm(r.hypothesis, u->truth)
                                                              : expert_annotate(r.hypothesis, u->truth);
      r = session.submit_annotation(e);
    }
  }
  const bool success = judge_success(*models.task, user.offered(), goal);
  SimulatedDialogue out;
  out.exp3_updates = session.exp3_updates();
  out.record = session.finalize(success);
  out.goal = std::move(goal);
  return out;
}

//------------------------------------------------------------------------------
// Metrics

struct MetricsRow {
  std::size_t index = 0;
  bool success = false;
  double reward = 0.0;
  std::size_t n_turns = 0;
  std::size_t n_skip = 0;
  std::size_t n_ask_confirm = 0;
  std::size_t n_ask_annotation = 0;
  std::size_t kb_rows = 0;
  double epsilon = 0.0;

  bool operator==(const MetricsRow&) const = default;
};

inline MetricsRow metrics_row(std::size_t index, const DialogueRecord& r, double epsilon) {
  MetricsRow m;
  m.index = index;
  m.success = r.success;
  m.reward = r.reward;
  m.n_turns = r.turns.size();
  m.kb_rows = r.kb_rows_after;
  m.epsilon = epsilon;
  for (const auto& t : r.turns) {
    if (!t.adapt_action) continue;
    switch (*t.adapt_action) {
      case AdaptAction::Skip: ++m.n_skip; break;
      case AdaptAction::AskConfirm: ++m.n_ask_confirm; break;
      case AdaptAction::AskAnnotation: ++m.n_ask_annotation; break;
    }
  }
  return m;
}

struct MetricsLog {
  std::vector<MetricsRow> rows;

  double success_rate() const {
    if (rows.empty()) return 0.0;
    std::size_t n = 0;
    for (const auto& r : rows) n += r.success;
    return 100.0 * static_cast<double>(n) / static_cast<double>(rows.size());
  }
  double avg_reward() const {
    if (rows.empty()) return 0.0;
    double s = 0.0;
    for (const auto& r : rows) s += r.reward;
    return s / static_cast<double>(rows.size());
  }
  std::size_t asks() const {
    std::size_t n = 0;
    for (const auto& r : rows) n += r.n_ask_confirm + r.n_ask_annotation;
    return n;
  }
  std::vector<double> series(bool success) const {
    std::vector<double> v;
    for (const auto& r : rows) v.push_back(success ? (r.success ? 100.0 : 0.0) : r.reward);
    return v;
  }

  bool operator==(const MetricsLog&) const = default;
};

inline nlohmann::json to_json(const MetricsRow& r) {
  return {{"index", r.index},     {"success", r.success},         {"reward", r.reward},
          {"n_turns", r.n_turns}, {"n_skip", r.n_skip},           {"n_ask_confirm", r.n_ask_confirm},
          {"n_ask_annotation", r.n_ask_annotation}, {"kb_rows", r.kb_rows}, {"epsilon", r.epsilon}};
}

inline MetricsRow metrics_row_from_json(const nlohmann::json& j) {
  MetricsRow r;
  r.index = j.at("index").get<std::size_t>();
  r.success = j.at("success").get<bool>();
  r.reward = j.at("reward").get<double>();
  r.n_turns = j.at("n_turns").get<std::size_t>();
  r.n_skip = j.at("n_skip").get<std::size_t>();
  r.n_ask_confirm = j.at("n_ask_confirm").get<std::size_t>();
  r.n_ask_annotation = j.at("n_ask_annotation").get<std::size_t>();
  r.kb_rows = j.at("kb_rows").get<std::size_t>();
  r.epsilon = j.at("epsilon").get<double>();
  return r;
}

inline void write_metrics(const MetricsLog& log, const std::filesystem::path& csv,
                          const std::filesystem::path& jsonl) {
  std::ofstream c(csv), j(jsonl);
  if (!c) fail(Error::Kind::io, "cannot write '", csv.string(), "'");
  if (!j) fail(Error::Kind::io, "cannot write '", jsonl.string(), "'");
  c.precision(17);
  c << "index,success,reward,n_turns,n_skip,n_ask_confirm,n_ask_annotation,kb_rows,epsilon\n";
  for (const auto& r : log.rows) {
    c << r.index << ',' << r.success << ',' << r.reward << ',' << r.n_turns << ',' << r.n_skip << ','
      << r.n_ask_confirm << ',' << r.n_ask_annotation << ',' << r.kb_rows << ',' << r.epsilon << '\n';
    j << to_json(r).dump() << '\n';
  }
}

inline MetricsLog read_metrics_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Error::Kind::not_found, "cannot open metrics file '", path.string(), "'");
  MetricsLog log;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    try {
      log.rows.push_back(metrics_row_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      fail(Error::Kind::format, path.string(), ":", lineno, ": ", e.what());
    }
  }
  return log;
}

// Means over `window` points, windows starting every `shift` points; the
// x coordinate is the window centre. Partial trailing windows are dropped.
inline std::vector<std::pair<double, double>> smooth_curve(const std::vector<double>& series,
                                                           std::size_t window = 20, std::size_t shift = 5) {
  if (window == 0 || shift == 0) fail(Error::Kind::invalid_argument, "window and shift must be >= 1");
  std::vector<std::pair<double, double>> out;
  for (std::size_t start = 0; start + window <= series.size(); start += shift) {
    double s = 0.0;
    for (std::size_t i = start; i < start + window; ++i) s += series[i];
    out.emplace_back(static_cast<double>(start) + static_cast<double>(window - 1) / 2.0,
                     s / static_cast<double>(window));
  }
  return out;
}

//------------------------------------------------------------------------------
// Artifacts

inline constexpr int kModelFormatVersion = 1;

struct ModelFiles {
  std::filesystem::path task, vectors, kb, model;
  explicit ModelFiles(const std::filesystem::path& dir)
      : task(dir / "task.jsonl"), vectors(dir / "vectors.txt"), kb(dir / "kb.jsonl"), model(dir / "model.json") {}
};

inline void save_model(const std::filesystem::path& dir, const Models& m, Protocol protocol) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(Error::Kind::io, "cannot create model directory '", dir.string(), "': ", ec.message());
  const ModelFiles f(dir);
  save_task(*m.task, f.task);
  save_vectors(*m.embeddings, f.vectors);
  save_kb(m.kb, f.kb);
  std::ofstream out(f.model);
  if (!out) fail(Error::Kind::io, "cannot write '", f.model.string(), "'");
  nlohmann::json j{{"format", "dialearn-model"},
                   {"version", kModelFormatVersion},
                   {"protocol", to_string(protocol)},
                   {"oov_policy", m.embeddings->oov_policy() == OovPolicy::zero ? "zero" : "hash_random"},
                   {"bandit", to_json(m.bandit)},
                   {"qparams", to_json(m.q)}};
  out << j.dump() << '\n';
}

struct LoadedModel {
  Models models;
  Protocol protocol;
};

inline LoadedModel load_model(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) fail(Error::Kind::not_found, "model directory '", dir.string(), "' not found");
  const ModelFiles f(dir);
  std::string missing;
  for (const auto* p : {&f.task, &f.vectors, &f.kb, &f.model})
    if (!std::filesystem::exists(*p)) missing += (missing.empty() ? "" : ", ") + p->string();
  if (!missing.empty()) fail(Error::Kind::not_found, "incomplete model in '", dir.string(), "', missing: ", missing);

  std::ifstream in(f.model);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(Error::Kind::format, "corrupt model file '", f.model.string(), "': ", e.what());
  }
  if (j.value("format", "") != "dialearn-model")
    fail(Error::Kind::format, "'", f.model.string(), "' is not a model file");
  if (j.value("version", -1) != kModelFormatVersion)
    fail(Error::Kind::format, "model file '", f.model.string(), "' has version ", j.value("version", -1),
         ", expected ", kModelFormatVersion);
  try {
    const OovPolicy oov = j.at("oov_policy").get<std::string>() == "zero" ? OovPolicy::zero : OovPolicy::hash_random;
    auto task = std::make_shared<const TaskSpec>(load_task(f.task));
    auto emb = std::make_shared<const EmbeddingTable>(load_vectors(f.vectors, oov));
    KnowledgeBase kb = load_kb(f.kb, emb);
    return LoadedModel{Models{task, emb, std::move(kb), bandit_from_json(j.at("bandit")),
                              qparams_from_json(j.at("qparams"))},
                       parse_protocol(j.at("protocol").get<std::string>())};
  } catch (const nlohmann::json::exception& e) {
    fail(Error::Kind::format, "corrupt model file '", f.model.string(), "': ", e.what());
  }
}

//------------------------------------------------------------------------------
// Training and evaluation

inline void ensure_writable(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(Error::Kind::io, "cannot create output directory '", dir.string(), "': ", ec.message());
  const auto probe = dir / ".write-probe";
  {
    std::ofstream out(probe);
    if (!out || !(out << "ok")) fail(Error::Kind::io, "output directory '", dir.string(), "' is not writable");
  }
  std::filesystem::remove(probe, ec);
}

inline Models build_initial_models(const RunConfig& c) {
  auto task = std::make_shared<const TaskSpec>(c.task_file ? load_task(*c.task_file)
                                                           : generate_task(c.task_seed, c.task));
  auto emb = std::make_shared<const EmbeddingTable>(c.vectors_file ? load_vectors(*c.vectors_file, c.embeddings.oov)
                                                                   : synthesize_embeddings(*task, c.embeddings));
  return initial_models(std::move(task), std::move(emb), c.bandit, c.ktd);
}

struct TrainingResult {
  MetricsLog log;
  Models models;
};

// Runs the training dialogues on `models`, learning on. With an output
// directory the log and artifacts are written there.
inline MetricsLog train_models(Models& models, const RunConfig& c, std::ostream* dialogue_log = nullptr) {
  EngineConfig ec = engine_config(c, true);
  MetricsLog log;
  for (std::size_t i = 0; i < c.train_budget(); ++i) {
    ec.epsilon = epsilon_schedule(i, c.epsilon_start, c.epsilon_end, c.epsilon_span);
    auto d = simulate_dialogue(models, ec, c.sim, true, derive_seed(c.seed, kTrainSession, i),
                               derive_seed(c.seed, kTrainUser, i));
    log.rows.push_back(metrics_row(i, d.record, ec.epsilon));
    if (dialogue_log)
      for (const auto& line : to_log(d.record)) *dialogue_log << line.dump() << '\n';
  }
  return log;
}

inline TrainingResult run_training(const RunConfig& c) {
  ensure_writable(c.out);
  Models models = build_initial_models(c);
  std::ofstream dlog(c.out / "dialogues.jsonl");
  if (!dlog) fail(Error::Kind::io, "cannot write '", (c.out / "dialogues.jsonl").string(), "'");
  MetricsLog log = train_models(models, c, &dlog);
  write_metrics(log, c.out / "metrics.csv", c.out / "metrics.jsonl");
  save_model(c.out, models, c.protocol);
  return {std::move(log), std::move(models)};
}

// Learning off: greedy policy, Skip-only adaptation, no expert scoring. The
// models are copied, so the caller's artifacts cannot change.
inline MetricsLog evaluate(const Models& trained, const RunConfig& c, std::ostream* dialogue_log = nullptr) {
  Models models = trained;
  const EngineConfig ec = engine_config(c, false);
  MetricsLog log;
  for (std::size_t i = 0; i < c.test_budget(); ++i) {
    auto d = simulate_dialogue(models, ec, c.sim, false, derive_seed(c.seed, kTestSession, i),
                               derive_seed(c.seed, kTestUser, i));
    log.rows.push_back(metrics_row(i, d.record, 0.0));
    if (dialogue_log)
      for (const auto& line : to_log(d.record)) *dialogue_log << line.dump() << '\n';
  }
  return log;
}

}  // namespace dialearn

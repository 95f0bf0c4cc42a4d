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
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "dialearn/bandit.hpp"
#include "dialearn/dialogue.hpp"
#include "dialearn/embedding.hpp"
#include "dialearn/error.hpp"
#include "dialearn/ktdq.hpp"
#include "dialearn/parser.hpp"
#include "dialearn/simulator.hpp"
#include "dialearn/task.hpp"

namespace dialearn {

// Everything a protocol can learn, plus the read-only task and vectors.
struct Models {
  std::shared_ptr<const TaskSpec> task;
  std::shared_ptr<const EmbeddingTable> embeddings;
  KnowledgeBase kb;
  BanditState bandit;
  QParams q;
};

inline Models initial_models(std::shared_ptr<const TaskSpec> task, std::shared_ptr<const EmbeddingTable> emb,
                             const BanditConfig& bc = {}, const KtdConfig& kc = {}) {
  if (!task || !emb) fail("models need a task and an embedding table");
  KnowledgeBase kb = KnowledgeBase::from_task(*task, emb);
  BanditState bandit;
  bandit.config = bc;
  return Models{std::move(task), std::move(emb), std::move(kb), bandit,
                QParams(SummaryState::kCount, kNumSummaryActs, kc)};
}

struct EngineConfig {
  Protocol protocol = Protocol::ZH;
  ParserConfig parser;
  BucketConfig buckets;
  RewardConfig reward;
  Templates templates = default_templates();
  bool learning = true;   // off: greedy policy, Skip-only adaptation, no Ask acts
  double epsilon = 0.0;   // exploration rate of the learned policy while learning
  bool per_turn_policy_updates = false;
};

enum class Prompt { user_turn, confirm_list, annotation_form, none };

inline std::string_view to_string(Prompt p) {
  switch (p) {
    case Prompt::user_turn: return "user_turn";
    case Prompt::confirm_list: return "confirm_list";
    case Prompt::annotation_form: return "annotation_form";
    case Prompt::none: return "none";
  }
  return "?";
}

// One system turn and the user input it answered (empty for the opening).
struct TurnTranscript {
  std::size_t index = 0;
  std::string user_text;
  std::vector<std::string> words;
  SemanticHypothesis hypothesis;                  // before any adaptation
  std::optional<SemanticHypothesis> adapted;      // re-decoded after a KB update
  std::optional<AdaptAction> adapt_action;
  std::optional<AdaptOutcome> adapt_outcome;
  std::optional<int> effort;
  std::optional<double> loss;
  SummaryState state;
  SummaryAct system_act = SummaryAct::Greet;
  std::string system_text;
  double f = -1.0;
  double a = 0.0;
  std::size_t belief_snapshot_id = 0;
};

struct DialogueRecord {
  Protocol protocol = Protocol::ZH;
  std::vector<TurnTranscript> turns;
  bool success = false;
  bool finalized = false;
  double theta = 0.95;
  double success_bonus = 20.0;
  double reward = 0.0;  // accumulated on-line
  std::size_t kb_rows_before = 0;
  std::size_t kb_rows_after = 0;
};

inline double cumulated_reward(const DialogueRecord& r) {
  if (!r.finalized) fail(Error::Kind::conflict, "cumulated reward of an unfinalized dialogue");
  double total = 0.0, a_prev = 0.0;
  for (const auto& t : r.turns) {
    total += shaped_reward(t.f, t.a, a_prev, r.theta);
    a_prev = t.a;
  }
  return total + (r.success ? r.success_bonus : 0.0);
}

//------------------------------------------------------------------------------
// Log serialisation

inline nlohmann::json to_json(const DialogueAct& a) {
  nlohmann::json j{{"acttype", a.acttype}};
  if (a.slot) j["slot"] = *a.slot;
  if (a.value) j["value"] = *a.value;
  return j;
}

inline DialogueAct act_from_json(const nlohmann::json& j) {
  DialogueAct a;
  if (j.is_string()) return parse_act(j.get<std::string>());
  a.acttype = j.at("acttype").get<std::string>();
  if (j.contains("slot")) a.slot = j.at("slot").get<std::string>();
  if (j.contains("value")) a.value = j.at("value").get<std::string>();
  if (a.value && !a.slot) fail(Error::Kind::format, "dialogue act with a value but no slot");
  return a;
}

inline nlohmann::json to_json(const SemanticHypothesis& h) {
  nlohmann::json das = nlohmann::json::array();
  for (const auto& d : h.das)
    das.push_back({{"act", d.act.str()}, {"span", {d.span.start, d.span.end}}, {"score", d.score}});
  return {{"das", das}, {"confidence", h.confidence}, {"path_score", h.path_score}};
}

inline nlohmann::json to_json(const AdaptOutcome& o) {
  nlohmann::json c = nlohmann::json::array();
  for (const auto& x : o.corrections)
    c.push_back({{"boundaries_given", x.boundaries_given}, {"n_interim_questions", x.n_interim_questions}});
  return {{"action", to_string(o.action)}, {"accepted_whole", o.accepted_whole}, {"n_das", o.n_das},
          {"corrections", c}};
}

inline nlohmann::json to_json(const TurnTranscript& t) {
  nlohmann::json j{{"type", "turn"},
                   {"index", t.index},
                   {"user_text", t.user_text},
                   {"hypothesis", to_json(t.hypothesis)},
                   {"state", t.state.index()},
                   {"system_act", to_string(t.system_act)},
                   {"system_text", t.system_text},
                   {"f", t.f},
                   {"a", t.a},
                   {"belief_snapshot_id", t.belief_snapshot_id}};
  if (t.adapted) j["adapted_hypothesis"] = to_json(*t.adapted);
  if (t.adapt_action) j["adapt_action"] = to_string(*t.adapt_action);
  if (t.adapt_outcome) j["adapt_outcome"] = to_json(*t.adapt_outcome);
  if (t.effort) j["effort"] = *t.effort;
  if (t.loss) j["loss"] = *t.loss;
  return j;
}

inline nlohmann::json summary_json(const DialogueRecord& r) {
  return {{"type", "summary"},          {"protocol", to_string(r.protocol)},
          {"success", r.success},       {"n_turns", r.turns.size()},
          {"reward", r.reward},         {"theta", r.theta},
          {"success_bonus", r.success_bonus}, {"kb_rows_before", r.kb_rows_before},
          {"kb_rows_after", r.kb_rows_after}};
}

// One object per turn, then the summary.
inline std::vector<nlohmann::json> to_log(const DialogueRecord& r) {
  std::vector<nlohmann::json> out;
  for (const auto& t : r.turns) out.push_back(to_json(t));
  out.push_back(summary_json(r));
  return out;
}

// Rebuilds the reward-relevant part of a record from its log lines.
inline DialogueRecord record_from_log(const std::vector<nlohmann::json>& lines) {
  DialogueRecord r;
  bool have_summary = false;
  for (const auto& j : lines) {
    const auto type = j.at("type").get<std::string>();
    if (type == "turn") {
      TurnTranscript t;
      t.index = j.at("index").get<std::size_t>();
      t.user_text = j.at("user_text").get<std::string>();
      t.system_act = parse_summary_act(j.at("system_act").get<std::string>());
      t.state = SummaryState::from_index(j.at("state").get<std::size_t>());
      t.f = j.at("f").get<double>();
      t.a = j.at("a").get<double>();
      r.turns.push_back(std::move(t));
    } else if (type == "summary") {
      r.protocol = parse_protocol(j.at("protocol").get<std::string>());
      r.success = j.at("success").get<bool>();
      r.reward = j.at("reward").get<double>();
      r.theta = j.at("theta").get<double>();
      r.success_bonus = j.at("success_bonus").get<double>();
      r.kb_rows_before = j.at("kb_rows_before").get<std::size_t>();
      r.kb_rows_after = j.at("kb_rows_after").get<std::size_t>();
      have_summary = true;
    } else {
      fail(Error::Kind::format, "unknown dialogue log record type '", type, "'");
    }
  }
  if (!have_summary) fail(Error::Kind::format, "dialogue log has no summary record");
  r.finalized = true;
  return r;
}

//------------------------------------------------------------------------------
// Session engine

// What the session did with the last input and what it waits for next.
struct TurnResult {
  Prompt prompt = Prompt::user_turn;
  std::optional<SystemAction> system;      // absent while an annotation is pending under BH/BR
  std::vector<std::string> words;          // the utterance under annotation
  SemanticHypothesis hypothesis;           // its hypothesis, for the confirm list
  std::optional<int> effort;               // of the annotation just applied
  std::optional<double> loss;
};

// A single dialogue under one protocol. Learning sessions mutate the shared
// models and must have exclusive access to them.
class DialogueSession {
 public:
  DialogueSession(Models& models, EngineConfig cfg, std::uint64_t seed)
      : models_(models), cfg_(std::move(cfg)), rng_(seed), belief_(initial_belief(*models.task)) {
    kb_rows_before_ = models_.kb.size();
    TurnTranscript t;
    t.belief_snapshot_id = snapshot();
    opening_ = step(std::move(t), nullptr);
  }

  const TurnResult& opening() const { return opening_; }
  const EngineConfig& config() const { return cfg_; }
  Prompt pending() const { return finalized_ ? Prompt::none : pending_; }
  bool ended() const { return pending_ == Prompt::none; }
  bool finalized() const { return finalized_; }
  const Belief& belief() const { return belief_; }
  const std::vector<Belief>& belief_snapshots() const { return snapshots_; }
  const std::vector<TurnTranscript>& transcript() const { return transcript_; }
  const std::vector<TurnRecord>& records() const { return records_; }
  std::size_t n_system_turns() const { return transcript_.size(); }
  // System turns that were dialogue moves rather than annotation requests.
  std::size_t n_dialogue_turns() const {
    return static_cast<std::size_t>(std::count_if(transcript_.begin(), transcript_.end(),
                                                  [](const TurnTranscript& t) { return !is_ask(t.system_act); }));
  }
  std::size_t exp3_updates() const { return exp3_updates_; }
  const std::vector<std::string>& pending_words() const { return pending_.words; }
  const SemanticHypothesis& pending_hypothesis() const { return pending_.hypothesis; }

  TurnResult user_turn(const std::string& text) {
    require_open();
    if (pending_ != Prompt::user_turn)
      fail(Error::Kind::conflict, "session expects ", to_string(pending()), ", not a user utterance");
    TurnTranscript t;
    t.user_text = text;
    t.words = tokenize(text);
    t.hypothesis = decode(models_.kb, t.words, cfg_.parser);

    if (!uses_bandit(cfg_.protocol)) {
      const SemanticHypothesis h = t.hypothesis;
      return step(std::move(t), &h);
    }

    auto [action, p] = cfg_.learning ? exp3_sample(models_.bandit, rng_) : std::pair{AdaptAction::Skip, 1.0};
    if (action == AdaptAction::Skip) {
      AdaptOutcome o{AdaptAction::Skip, false, t.hypothesis.das.size(), {}};
      const double l = loss(1.0, 0, models_.bandit.config.gamma_loss, models_.bandit.config.phi_max);
      if (cfg_.learning) bandit_update(action, l, p);
      t.adapt_action = action;
      t.adapt_outcome = o;
      t.effort = 0;
      t.loss = l;
      const SemanticHypothesis h = t.hypothesis;
      return step(std::move(t), &h);
    }
    pending_prob_ = p;
    pending_action_ = action;
    return hold(std::move(t), action == AdaptAction::AskConfirm ? Prompt::confirm_list : Prompt::annotation_form);
  }

  // Applies the expert's answer to the pending confirm list or annotation form.
  TurnResult submit_annotation(const ExpertResult& answer) {
    require_open();
    if (pending_ != Prompt::confirm_list && pending_ != Prompt::annotation_form)
      fail(Error::Kind::conflict, "session expects ", to_string(pending()), ", not an annotation");
    const AnnotationMode mode = pending_ == Prompt::confirm_list ? AnnotationMode::confirm : AnnotationMode::full;
    if (answer.mode != mode) fail(Error::Kind::invalid_argument, "annotation mode does not match the prompt");
    const auto& words = pending_.words;
    validate_annotation(models_.kb, words, answer.items);  // before anything changes

    KnowledgeBase after = apply_annotation(models_.kb, words, answer.items, mode, cfg_.parser);
    const int phi = effort(answer.outcome);
    const double g = gain_estimate(models_.kb, after, pending_.hypothesis);
    const double l = loss(g, phi, models_.bandit.config.gamma_loss, models_.bandit.config.phi_max);
    models_.kb = std::move(after);

    TurnTranscript t = std::move(pending_.turn);
    TurnResult r;
    if (uses_bandit(cfg_.protocol)) {
      bandit_update(*pending_action_, l, pending_prob_);
      t.adapt_action = pending_action_;
      t.adapt_outcome = answer.outcome;
      t.effort = phi;
      t.loss = l;
      t.adapted = decode(models_.kb, t.words, cfg_.parser);
      const SemanticHypothesis h = *t.adapted;
      pending_ = Prompt::user_turn;
      r = step(std::move(t), &h);
    } else {
      // RR: the annotation took the place of the user's answer. Score the Ask
      // turn, then hand the same utterance back to the dialogue manager.
      TurnTranscript& ask = transcript_.back();
      ask.adapt_action = pending_ == Prompt::confirm_list ? AdaptAction::AskConfirm : AdaptAction::AskAnnotation;
      ask.adapt_outcome = answer.outcome;
      ask.effort = phi;
      ask.loss = l;
      ask.f = ask_feedback(l);
      open_->f = ask.f;
      TurnTranscript again;
      again.user_text = t.user_text;
      again.words = t.words;
      again.hypothesis = decode(models_.kb, again.words, cfg_.parser);
      const SemanticHypothesis h = again.hypothesis;
      pending_ = Prompt::user_turn;
      r = step(std::move(again), &h);
    }
    r.effort = phi;
    r.loss = l;
    return r;
  }

  // Additional feedback on the latest system act.
  void feedback(double a) {
    if (!is_feedback_level(a))
      fail(Error::Kind::invalid_argument, "additional feedback must be one of -1, -0.5, 0, 0.5, 1; got ", a);
    require_open();
    if (!open_ || is_ask(summary_act_at(open_->action)))
      fail(Error::Kind::conflict, "no system dialogue act awaiting feedback");
    open_->a = a;
    transcript_.back().a = a;
  }

  // Closes the dialogue; learned policies update from the buffered turns.
  DialogueRecord finalize(bool success) {
    if (finalized_) fail(Error::Kind::conflict, "dialogue already finalized");
    if (open_) {
      open_->next_state = open_->state;
      open_->next_actions.clear();
      open_->terminal = true;
      records_.push_back(*open_);
      open_.reset();
    }
    if (cfg_.learning && uses_learned_policy(cfg_.protocol)) {
      if (cfg_.per_turn_policy_updates) {
        const auto rewards = episode_rewards(records_, success, cfg_.reward);
        ktdq_update_in_place(models_.q, records_.back(), rewards.back());
      } else {
        episode_update_in_place(models_.q, records_, success, cfg_.reward);
      }
    }
    finalized_ = true;
    pending_ = Prompt::none;
    DialogueRecord r;
    r.protocol = cfg_.protocol;
    r.turns = transcript_;
    r.success = success;
    r.finalized = true;
    r.theta = cfg_.reward.theta;
    r.success_bonus = cfg_.reward.success_bonus;
    r.kb_rows_before = kb_rows_before_;
    r.kb_rows_after = models_.kb.size();
    double a_prev = 0.0;
    for (const auto& t : transcript_) {
      r.reward += shaped_reward(t.f, t.a, a_prev, r.theta);
      a_prev = t.a;
    }
    if (success) r.reward += r.success_bonus;
    return r;
  }

 private:
  // Pending state: the prompt kind plus the utterance held for annotation.
  struct PendingSlot {
    Prompt kind = Prompt::user_turn;
    TurnTranscript turn;
    std::vector<std::string> words;
    SemanticHypothesis hypothesis;
    bool operator==(Prompt p) const { return kind == p; }
    PendingSlot& operator=(Prompt p) {
      kind = p;
      return *this;
    }
    operator Prompt() const { return kind; }
  };

  void require_open() const {
    if (finalized_) fail(Error::Kind::conflict, "dialogue is closed");
  }

  std::size_t snapshot() {
    snapshots_.push_back(belief_);
    return snapshots_.size() - 1;
  }

  void bandit_update(AdaptAction action, double l, double p) {
    models_.bandit = exp3_update(models_.bandit, action, l, p);
    ++exp3_updates_;
  }

  TurnResult hold(TurnTranscript t, Prompt kind) {
    TurnResult r;
    r.prompt = kind;
    r.words = t.words;
    r.hypothesis = t.hypothesis;
    pending_.words = t.words;
    pending_.hypothesis = t.hypothesis;
    pending_.turn = std::move(t);
    pending_ = kind;
    return r;
  }

  ActMask mask_now() const {
    ActMask m = feasible_actions(belief_, cfg_.protocol, last_was_ask_);
    if (!cfg_.learning) {
      m[static_cast<std::size_t>(SummaryAct::AskConfirmZ)] = false;
      m[static_cast<std::size_t>(SummaryAct::AskAnnotateZ)] = false;
    }
    return m;
  }

  SummaryAct choose(const SummaryState& s, const ActMask& mask) {
    if (!uses_learned_policy(cfg_.protocol)) return handcrafted_act(s, mask);
    const double eps = cfg_.learning ? cfg_.epsilon : 0.0;
    return summary_act_at(select_action(models_.q, s.index(), std::vector<bool>(mask.begin(), mask.end()), eps, rng_));
  }

  void close_open(const SummaryState& next, const ActMask& mask) {
    if (!open_) return;
    open_->next_state = next.index();
    open_->next_actions.clear();
    for (std::size_t i = 0; i < mask.size(); ++i)
      if (mask[i]) open_->next_actions.push_back(i);
    records_.push_back(*open_);
    open_.reset();
    if (cfg_.learning && cfg_.per_turn_policy_updates && uses_learned_policy(cfg_.protocol)) {
      const double a_prev = records_.size() > 1 ? records_[records_.size() - 2].a : 0.0;
      const auto& rec = records_.back();
      ktdq_update_in_place(models_.q, rec, shaped_reward(rec.f, rec.a, a_prev, cfg_.reward.theta));
    }
  }

  // Belief update with `h` (none for the opening), then the system's move.
  TurnResult step(TurnTranscript t, const SemanticHypothesis* h) {
    const Belief before = belief_;
    QualityFeatures qf;
    if (h) {
      belief_ = update_belief(*models_.task, belief_, *h);
      qf = quality_features(*h, t.words.size());
    }
    const SummaryState s = summarize(belief_, qf, cfg_.protocol, cfg_.buckets);
    const ActMask mask = mask_now();
    close_open(s, mask);
    const SummaryAct act = choose(s, mask);

    t.index = transcript_.size();
    t.state = s;
    t.system_act = act;
    SystemAction sys = expand_action(*models_.task, act, belief_, cfg_.templates, cfg_.buckets);
    t.system_text = sys.text;

    TurnResult r;
    r.system = sys;
    if (is_ask(act)) {
      belief_ = before;  // the utterance is interpreted again after the annotation
      t.f = 0.0;
      t.belief_snapshot_id = snapshot();
      last_was_ask_ = true;
      open_ = TurnRecord{s.index(), static_cast<std::size_t>(act), 0.0, 0.0, 0, {}, false};
      TurnTranscript held;
      held.user_text = t.user_text;
      held.words = t.words;
      held.hypothesis = t.hypothesis;
      transcript_.push_back(std::move(t));
      TurnResult hr = hold(std::move(held), act == SummaryAct::AskConfirmZ ? Prompt::confirm_list
                                                                           : Prompt::annotation_form);
      hr.system = sys;
      return hr;
    }
    last_was_ask_ = false;
    record_system_action(*models_.task, belief_, sys);
    t.belief_snapshot_id = snapshot();
    open_ = TurnRecord{s.index(), static_cast<std::size_t>(act), -1.0, 0.0, 0, {}, false};
    transcript_.push_back(std::move(t));
    pending_ = act == SummaryAct::Bye ? Prompt::none : Prompt::user_turn;
    r.prompt = pending_;
    return r;
  }

  Models& models_;
  EngineConfig cfg_;
  std::mt19937_64 rng_;
  Belief belief_;
  std::vector<Belief> snapshots_;
  std::vector<TurnTranscript> transcript_;
  std::vector<TurnRecord> records_;
  std::optional<TurnRecord> open_;
  PendingSlot pending_;
  std::optional<AdaptAction> pending_action_;
  double pending_prob_ = 1.0;
  bool last_was_ask_ = false;
  bool finalized_ = false;
  std::size_t exp3_updates_ = 0;
  std::size_t kb_rows_before_ = 0;
  TurnResult opening_;
};

}  // namespace dialearn

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
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "dialearn/bandit.hpp"
#include "dialearn/dialogue.hpp"
#include "dialearn/error.hpp"
#include "dialearn/parser.hpp"
#include "dialearn/task.hpp"

namespace dialearn {

enum class FeedbackStrategy { both, good_only, bad_only };

inline FeedbackStrategy parse_feedback_strategy(std::string_view s) {
  if (s == "both") return FeedbackStrategy::both;
  if (s == "good_only") return FeedbackStrategy::good_only;
  if (s == "bad_only") return FeedbackStrategy::bad_only;
  fail("unknown feedback strategy '", s, "' (expected both, good_only or bad_only)");
}

inline std::string_view to_string(FeedbackStrategy s) {
  switch (s) {
    case FeedbackStrategy::both: return "both";
    case FeedbackStrategy::good_only: return "good_only";
    case FeedbackStrategy::bad_only: return "bad_only";
  }
  return "?";
}

struct SimConfig {
  double paraphrase_noise = 0.05;  // per-word chance of substituting another vocabulary word
  double oov_rate = 0.05;          // per-word chance of an unknown token
  double filler_rate = 0.5;        // chance a content word is preceded by a filler word
  double request_after_offer = 0.3;
  std::size_t patience = 15;       // system turns before the user gives up
  FeedbackStrategy feedback = FeedbackStrategy::both;

  void validate() const {
    for (double p : {paraphrase_noise, oov_rate, filler_rate, request_after_offer})
      if (p < 0.0 || p > 1.0) fail("simulator probabilities must lie in [0,1], got ", p);
    if (patience == 0) fail("patience must be >= 1");
  }
};

struct UserGoal {
  Entity target;
  std::vector<DialogueAct> agenda;
  std::size_t patience = 15;
};

struct TruthDA {
  DialogueAct act;
  Span span;
};

struct Utterance {
  std::string text;
  std::vector<std::string> words;
  std::vector<TruthDA> truth;
};

// Uniform target; the agenda informs a shuffled attribute subset that singles
// the target out of the database, at least three attributes long.
template <typename Rng>
UserGoal sample_goal(const TaskSpec& task, Rng& rng, std::size_t patience = 15) {
  if (task.database.empty()) fail("cannot sample a goal from an empty database");
  UserGoal g;
  g.patience = patience;
  g.target = task.database[std::uniform_int_distribution<std::size_t>(0, task.database.size() - 1)(rng)];
  std::vector<std::string> slots = task.ontology.slots;
  std::shuffle(slots.begin(), slots.end(), rng);
  Constraints c;
  for (const auto& s : slots) {
    c[s] = g.target.attributes.at(s);
    g.agenda.push_back(make_act(std::string(kValueActtype), s, c[s]));
    if (g.agenda.size() >= 3 && lookup_entities(task, c).size() == 1) break;
  }
  return g;
}

//------------------------------------------------------------------------------
// Simulated user

template <typename Rng>
class UserSimulator {
 public:
  UserSimulator(const TaskSpec& task, UserGoal goal, SimConfig cfg, Rng& rng)
      : task_(task), goal_(std::move(goal)), cfg_(cfg), rng_(rng) {
    cfg_.validate();
    // Substitutions come from content words only, like a recogniser swapping
    // one meaningful word for another.
    for (const auto& [p, ws] : task.paraphrases) vocabulary_.insert(vocabulary_.end(), ws.begin(), ws.end());
    std::sort(vocabulary_.begin(), vocabulary_.end());
  }

  const UserGoal& goal() const { return goal_; }
  const std::vector<std::string>& offered() const { return offered_; }
  bool target_offered() const {
    return std::find(offered_.begin(), offered_.end(), goal_.target.id) != offered_.end();
  }

  // Answers one system action; Bye and annotation requests get no utterance.
  std::optional<Utterance> respond(const SystemAction& sys) {
    if (sys.kind == SummaryAct::Bye || is_ask(sys.kind)) return std::nullopt;
    if (sys.kind == SummaryAct::Repeat && last_) return realize(last_acts_);
    std::vector<DialogueAct> acts = reply_acts(sys);
    last_acts_ = acts;
    last_ = realize(acts);
    return last_;
  }

  // Surface realisation from held-out paraphrases, with noise.
  Utterance realize(const std::vector<DialogueAct>& acts) {
    Utterance u;
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    auto pick = [&](const std::vector<std::string>& v) {
      return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng_)];
    };
    auto noisy = [&](std::string w) {
      const double r = coin(rng_);
      if (r < cfg_.oov_rate)
        return "zq" + std::to_string(std::uniform_int_distribution<int>(100, 999)(rng_));
      if (r < cfg_.oov_rate + cfg_.paraphrase_noise && !vocabulary_.empty()) return pick(vocabulary_);
      return w;
    };
    for (const auto& a : acts) {
      auto it = task_.paraphrases.find(a.str());
      if (it == task_.paraphrases.end() || it->second.empty())
        fail("no paraphrase for dialogue act ", a.str());
      if (!task_.fillers.empty() && coin(rng_) < cfg_.filler_rate) u.words.push_back(noisy(pick(task_.fillers)));
      u.truth.push_back({a, {u.words.size(), u.words.size() + 1}});
      u.words.push_back(noisy(pick(it->second)));
    }
    u.text = join(u.words);
    return u;
  }

 private:
  std::optional<DialogueAct> next_agenda_item() {
    for (std::size_t i = 0; i < goal_.agenda.size(); ++i)
      if (!conveyed_[i]) {
        conveyed_[i] = true;
        return goal_.agenda[i];
      }
    return std::nullopt;
  }

  DialogueAct tell(const std::string& slot) {
    for (std::size_t i = 0; i < goal_.agenda.size(); ++i)
      if (goal_.agenda[i].slot == slot) conveyed_[i] = true;
    return make_act(std::string(kValueActtype), slot, goal_.target.attributes.at(slot));
  }

  DialogueAct volunteer() {
    if (auto a = next_agenda_item()) return *a;
    return goal_.agenda[std::uniform_int_distribution<std::size_t>(0, goal_.agenda.size() - 1)(rng_)];
  }

  bool truthful(const DialogueAct& check) const {
    return check.slot && check.value && goal_.target.attributes.count(*check.slot) &&
           goal_.target.attributes.at(*check.slot) == *check.value;
  }

  std::vector<DialogueAct> reply_acts(const SystemAction& sys) {
    conveyed_.resize(goal_.agenda.size(), false);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    switch (sys.kind) {
      case SummaryAct::Greet:
        return {make_act("hello"), volunteer()};
      case SummaryAct::BoldRQ:
        return {tell(*sys.act.slot)};
      case SummaryAct::TentRQ:
        if (!truthful(sys.act)) return {make_act("deny"), tell(*sys.act.slot)};
        if (sys.requested_slot) return {tell(*sys.requested_slot)};
        return {make_act("affirm")};
      case SummaryAct::Confirm:
        if (!truthful(sys.act)) return {make_act("deny"), tell(*sys.act.slot)};
        if (auto a = next_agenda_item()) return {make_act("affirm"), *a};
        return {make_act("affirm")};
      case SummaryAct::Split:
        return {tell(*sys.act.slot)};
      case SummaryAct::Offer:
      case SummaryAct::FindAlt: {
        offered_.push_back(*sys.entity);
        if (*sys.entity == goal_.target.id) {
          if (coin(rng_) < cfg_.request_after_offer) {
            const auto& slots = task_.ontology.slots;
            return {make_act(std::string(kSlotActtype),
                             slots[std::uniform_int_distribution<std::size_t>(0, slots.size() - 1)(rng_)])};
          }
          return {make_act("thankyou"), make_act("bye")};
        }
        if (auto a = next_agenda_item()) return {make_act("reqalts"), *a};
        return {make_act("reqalts")};
      }
      case SummaryAct::Inform:
      case SummaryAct::QMore:
        if (sys.entity && *sys.entity == goal_.target.id) return {make_act("thankyou"), make_act("bye")};
        return {make_act("reqalts")};
      case SummaryAct::Repeat:
        return {volunteer()};
      default:
        return {volunteer()};
    }
  }

  const TaskSpec& task_;
  UserGoal goal_;
  SimConfig cfg_;
  Rng& rng_;
  std::vector<std::string> vocabulary_;
  std::vector<bool> conveyed_;
  std::vector<std::string> offered_;
  std::optional<Utterance> last_;
  std::vector<DialogueAct> last_acts_;
};

//------------------------------------------------------------------------------
// Simulated expert for annotation sub-dialogues

struct ExpertResult {
  AdaptOutcome outcome;
  std::vector<AnnotationItem> items;
  AnnotationMode mode = AnnotationMode::confirm;
};

inline bool same_multiset(std::vector<DialogueAct> a, std::vector<DialogueAct> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  return a == b;
}

// Per-DA yes/no answers: hypothesis DAs present in the truth are confirmed,
// the others rejected.
inline ExpertResult confirm_outcome(const SemanticHypothesis& h, const std::vector<bool>& answers) {
  if (answers.size() != h.das.size())
    fail("expected ", h.das.size(), " yes/no answers, got ", answers.size());
  ExpertResult r;
  r.mode = AnnotationMode::confirm;
  r.outcome.action = AdaptAction::AskConfirm;
  r.outcome.n_das = h.das.size();
  r.outcome.accepted_whole = std::all_of(answers.begin(), answers.end(), [](bool b) { return b; });
  for (std::size_t i = 0; i < h.das.size(); ++i) r.items.push_back({h.das[i].span, h.das[i].act, answers[i]});
  return r;
}

// The expert sees each DA against its words: a DA is right when the truth has
// the same act over an overlapping span.
inline ExpertResult expert_confirm(const SemanticHypothesis& h, const std::vector<TruthDA>& truth) {
  std::vector<bool> used(truth.size(), false);
  std::vector<bool> answers;
  for (const auto& d : h.das) {
    bool ok = false;
    for (std::size_t i = 0; i < truth.size() && !ok; ++i)
      if (!used[i] && truth[i].act == d.act && truth[i].span.overlaps(d.span)) used[i] = ok = true;
    answers.push_back(ok);
  }
  ExpertResult r = confirm_outcome(h, answers);
  std::vector<DialogueAct> truth_acts;
  for (const auto& t : truth) truth_acts.push_back(t.act);
  r.outcome.accepted_whole = same_multiset(h.acts(), truth_acts);
  return r;
}

// Full re-annotation: the given annotation replaces the hypothesis. Each
// annotated DA the hypothesis did not already contain costs a boundary
// exchange plus one question per field (acttype, slot, value) not already
// right in the hypothesis DA overlapping it.
inline ExpertResult annotation_outcome(const SemanticHypothesis& h, const std::vector<TruthDA>& truth) {
  ExpertResult r;
  r.mode = AnnotationMode::full;
  r.outcome.action = AdaptAction::AskAnnotation;
  r.outcome.n_das = h.das.size();
  std::vector<DialogueAct> truth_acts;
  for (const auto& t : truth) truth_acts.push_back(t.act);
  r.outcome.accepted_whole = same_multiset(h.acts(), truth_acts);

  std::vector<DialogueAct> unmatched = h.acts();
  for (const auto& t : truth) {
    r.items.push_back({t.span, t.act, true});
    if (r.outcome.accepted_whole) continue;
    auto it = std::find(unmatched.begin(), unmatched.end(), t.act);
    if (it != unmatched.end()) {
      unmatched.erase(it);
      continue;
    }
    const HypothesisDA* overlap = nullptr;
    for (const auto& d : h.das)
      if (d.span.overlaps(t.span)) {
        overlap = &d;
        break;
      }
    int questions = 0;
    questions += !overlap || overlap->act.acttype != t.act.acttype;
    if (t.act.slot) questions += !overlap || overlap->act.slot != t.act.slot;
    if (t.act.value) questions += !overlap || overlap->act.value != t.act.value;
    r.outcome.corrections.push_back({true, questions});
  }
  if (!r.outcome.accepted_whole) {
    // Hypothesis DAs missing from the annotation are rejected.
    std::vector<DialogueAct> pool = truth_acts;
    for (const auto& d : h.das) {
      auto it = std::find(pool.begin(), pool.end(), d.act);
      if (it != pool.end()) {
        pool.erase(it);
        continue;
      }
      r.items.push_back({d.span, d.act, false});
    }
  }
  return r;
}

inline ExpertResult expert_annotate(const SemanticHypothesis& h, const std::vector<TruthDA>& truth) {
  return annotation_outcome(h, truth);
}

//------------------------------------------------------------------------------
// Per-turn additional feedback

// +1 for the reference act, +0.5 for an act of the same family (grounding
// checks, offers, post-offer information), -1 for closing an unsolved
// dialogue, -0.5 for a pointless greeting or repeat.
inline double expert_turn_feedback(const SummaryState& s, SummaryAct chosen,
                                   FeedbackStrategy strategy = FeedbackStrategy::both) {
  if (is_ask(chosen)) return 0.0;
  const SummaryAct ref = handcrafted_policy(s);
  auto family = [](SummaryAct a) {
    switch (a) {
      case SummaryAct::TentRQ:
      case SummaryAct::Confirm:
      case SummaryAct::Split: return 1;
      case SummaryAct::Offer:
      case SummaryAct::FindAlt: return 2;
      case SummaryAct::Inform:
      case SummaryAct::QMore: return 3;
      default: return 0;
    }
  };
  double a = 0.0;
  if (chosen == ref) a = 1.0;
  else if (chosen == SummaryAct::Bye && !s.offered) a = -1.0;
  else if (chosen == SummaryAct::Greet || chosen == SummaryAct::Repeat) a = -0.5;
  else if (family(chosen) != 0 && family(chosen) == family(ref)) a = 0.5;
  if (strategy == FeedbackStrategy::good_only) a = std::max(a, 0.0);
  if (strategy == FeedbackStrategy::bad_only) a = std::min(a, 0.0);
  return a;
}

// Success: the goal entity (by message) was offered before patience ran out.
inline bool judge_success(const TaskSpec& task, const std::vector<std::string>& offered, const UserGoal& goal) {
  for (const auto& id : offered) {
    const Entity* e = task.find_entity(id);
    if (e && e->message == goal.target.message) return true;
  }
  return false;
}

}  // namespace dialearn

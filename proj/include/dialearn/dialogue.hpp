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
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dialearn/error.hpp"
#include "dialearn/parser.hpp"
#include "dialearn/task.hpp"

namespace dialearn {

enum class Protocol { ZH, BH, BR, RR };

inline std::string_view to_string(Protocol p) {
  switch (p) {
    case Protocol::ZH: return "zh";
    case Protocol::BH: return "bh";
    case Protocol::BR: return "br";
    case Protocol::RR: return "rr";
  }
  return "?";
}

inline Protocol parse_protocol(std::string_view s) {
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(), ::tolower);
  for (auto p : {Protocol::ZH, Protocol::BH, Protocol::BR, Protocol::RR})
    if (to_string(p) == lower) return p;
  fail("unknown protocol '", s, "' (expected zh, bh, br or rr)");
}

inline bool uses_bandit(Protocol p) { return p == Protocol::BH || p == Protocol::BR; }
inline bool uses_learned_policy(Protocol p) { return p == Protocol::BR || p == Protocol::RR; }

//------------------------------------------------------------------------------
// Summary acts

enum class SummaryAct {
  Greet, Bye, BoldRQ, TentRQ, Confirm, FindAlt, Split, Repeat, Offer, Inform, QMore,
  AskConfirmZ, AskAnnotateZ
};

inline constexpr std::size_t kNumSummaryActs = 13;
inline constexpr std::size_t kNumDialogueSummaryActs = 11;

inline constexpr std::array<std::string_view, kNumSummaryActs> kSummaryActNames{
    "Greet", "Bye",   "BoldRQ", "TentRQ", "Confirm", "FindAlt",    "Split",
    "Repeat", "Offer", "Inform", "QMore",  "AskConfirmZ", "AskAnnotateZ"};

inline std::string_view to_string(SummaryAct a) { return kSummaryActNames[static_cast<std::size_t>(a)]; }

inline SummaryAct summary_act_at(std::size_t i) {
  if (i >= kNumSummaryActs) fail("summary act index ", i, " out of range");
  return static_cast<SummaryAct>(i);
}

inline SummaryAct parse_summary_act(std::string_view s) {
  for (std::size_t i = 0; i < kNumSummaryActs; ++i)
    if (kSummaryActNames[i] == s) return summary_act_at(i);
  fail("unknown summary act '", s, "'");
}

inline bool is_ask(SummaryAct a) { return a == SummaryAct::AskConfirmZ || a == SummaryAct::AskAnnotateZ; }

using ActMask = std::array<bool, kNumSummaryActs>;

//------------------------------------------------------------------------------
// Belief

enum class Grounding { unknown, hypothesized, confirmed };

// The system act as realised: summary kind, main full act, and extras.
struct SystemAction {
  SummaryAct kind = SummaryAct::Greet;
  DialogueAct act;
  std::optional<std::string> requested_slot;  // TentRQ's request part
  std::optional<std::string> entity;          // Offer / FindAlt / Inform
  std::string text;
};

struct Belief {
  std::map<std::string, std::map<std::string, double>> marginals;
  std::map<std::string, Grounding> grounding;
  std::vector<std::string> candidates;
  std::optional<std::string> offered;
  std::vector<DialogueAct> last_user_acts;
  std::optional<SummaryAct> last_system_act;
  std::optional<DialogueAct> pending_check;  // slot=value the last system act asked about
  std::set<std::string> excluded;            // offers the user turned down
  std::set<std::string> revealed;            // attributes informed about the offer

  bool operator==(const Belief&) const = default;
};

inline void normalize(std::map<std::string, double>& m) {
  double total = 0.0;
  for (const auto& [v, p] : m) total += p;
  if (total <= 0.0) {
    for (auto& [v, p] : m) p = 1.0 / static_cast<double>(m.size());
    return;
  }
  for (auto& [v, p] : m) p /= total;
}

inline std::pair<std::string, double> top_value(const std::map<std::string, double>& m) {
  std::pair<std::string, double> best{"", -1.0};
  for (const auto& [v, p] : m)
    if (p > best.second) best = {v, p};
  return best;
}

inline double entropy(const std::map<std::string, double>& m) {
  double h = 0.0;
  for (const auto& [v, p] : m)
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

namespace detail {

inline void refresh_candidates(const TaskSpec& task, Belief& b) {
  Constraints c;
  for (const auto& [slot, g] : b.grounding)
    if (g == Grounding::confirmed) c[slot] = top_value(b.marginals.at(slot)).first;
  b.candidates.clear();
  for (const Entity* e : lookup_entities(task, c))
    if (!b.excluded.count(e->id)) b.candidates.push_back(e->id);
  if (b.offered && std::find(b.candidates.begin(), b.candidates.end(), *b.offered) == b.candidates.end())
    b.offered.reset();
}

}  // namespace detail

inline Belief initial_belief(const TaskSpec& task) {
  Belief b;
  for (const auto& s : task.ontology.slots) {
    auto& m = b.marginals[s];
    const auto& vs = task.ontology.values_per_slot.at(s);
    for (const auto& v : vs) m[v] = 1.0 / static_cast<double>(vs.size());
    b.grounding[s] = Grounding::unknown;
  }
  detail::refresh_candidates(task, b);
  return b;
}

// Highest-entropy hypothesised slot, the one the system is least sure about.
inline std::optional<std::string> focus_slot(const Belief& b) {
  std::optional<std::string> best;
  double best_h = -1.0;
  for (const auto& [slot, g] : b.grounding) {
    if (g != Grounding::hypothesized) continue;
    const double h = entropy(b.marginals.at(slot));
    if (h > best_h) {
      best_h = h;
      best = slot;
    }
  }
  return best;
}

// Additive evidence then renormalisation. affirm/deny resolve the slot the
// previous system act asked about; an unchallenged TentRQ grounds it too.
inline Belief update_belief(const TaskSpec& task, Belief b, const SemanticHypothesis& h) {
  if (h.das.empty()) return b;
  auto has = [&](std::initializer_list<std::string_view> types) {
    return std::any_of(h.das.begin(), h.das.end(), [&](const HypothesisDA& d) {
      return std::find(types.begin(), types.end(), d.act.acttype) != types.end();
    });
  };
  const bool denied = has({"deny", "negate"});
  double affirm_score = 0.0;
  for (const auto& d : h.das)
    if (d.act.acttype == "affirm") affirm_score = std::max(affirm_score, d.score);

  if (b.pending_check && b.pending_check->acttype == "confirm" && b.pending_check->slot &&
      b.pending_check->value && b.marginals.count(*b.pending_check->slot)) {
    const std::string& slot = *b.pending_check->slot;
    const std::string& value = *b.pending_check->value;
    auto& m = b.marginals[slot];
    if (denied) {
      b.grounding[slot] = Grounding::unknown;
      m[value] = 0.0;
      normalize(m);
    } else if (affirm_score > 0.0) {
      m[value] += affirm_score;
      normalize(m);
      b.grounding[slot] = Grounding::confirmed;
    } else if (b.last_system_act == SummaryAct::TentRQ) {
      b.grounding[slot] = Grounding::confirmed;
    }
  }

  if (b.offered && (has({"reqalts"}) ||
                    (denied && (b.last_system_act == SummaryAct::Offer ||
                                b.last_system_act == SummaryAct::FindAlt)))) {
    b.excluded.insert(*b.offered);
    b.offered.reset();
  }

  for (const auto& d : h.das) {
    if (d.act.acttype != kValueActtype || !d.act.slot || !d.act.value) continue;
    auto it = b.marginals.find(*d.act.slot);
    if (it == b.marginals.end() || !it->second.count(*d.act.value)) continue;
    const std::string before = top_value(it->second).first;
    it->second[*d.act.value] += d.score;
    normalize(it->second);
    auto& g = b.grounding[*d.act.slot];
    if (g == Grounding::unknown || (g == Grounding::confirmed && *d.act.value != before))
      g = Grounding::hypothesized;
  }

  // Picking one side of a Split grounds the slot.
  if (b.pending_check && b.pending_check->acttype == "select" && b.pending_check->slot &&
      b.pending_check->value) {
    const std::string& slot = *b.pending_check->slot;
    const std::string& options = *b.pending_check->value;
    const auto bar = options.find('|');
    for (const auto& d : h.das)
      if (d.act.acttype == kValueActtype && d.act.slot == slot && d.act.value &&
          (*d.act.value == options.substr(0, bar) || *d.act.value == options.substr(bar + 1)) &&
          top_value(b.marginals.at(slot)).first == *d.act.value)
        b.grounding[slot] = Grounding::confirmed;
  }

  detail::refresh_candidates(task, b);
  b.last_user_acts = h.acts();
  return b;
}

// Records what the system just did so the next user turn can be interpreted.
inline void record_system_action(const TaskSpec& task, Belief& b, const SystemAction& a) {
  b.last_system_act = a.kind;
  b.pending_check.reset();
  switch (a.kind) {
    case SummaryAct::Confirm:
    case SummaryAct::TentRQ:
      b.pending_check = make_act("confirm", *a.act.slot, *a.act.value);
      break;
    case SummaryAct::Split:
      b.pending_check = a.act;
      break;
    case SummaryAct::Offer:
    case SummaryAct::FindAlt:
      if (a.kind == SummaryAct::FindAlt && b.offered) b.excluded.insert(*b.offered);
      b.offered = a.entity;
      b.revealed.clear();
      break;
    case SummaryAct::Inform:
      if (a.act.slot) b.revealed.insert(*a.act.slot);
      break;
    default:
      break;
  }
  detail::refresh_candidates(task, b);
}

//------------------------------------------------------------------------------
// Summary state

enum class UserClass { provide, confirm_deny, request, social, empty };

inline UserClass classify_user_acts(const std::vector<DialogueAct>& acts) {
  if (acts.empty()) return UserClass::empty;
  auto any = [&](std::initializer_list<std::string_view> types) {
    return std::any_of(acts.begin(), acts.end(), [&](const DialogueAct& a) {
      return std::find(types.begin(), types.end(), a.acttype) != types.end();
    });
  };
  if (any({"request", "reqalts", "reqmore", "repeat", "help", "restart"})) return UserClass::request;
  if (any({"inform"})) return UserClass::provide;
  if (any({"affirm", "deny", "negate", "confirm"})) return UserClass::confirm_deny;
  return UserClass::social;
}

struct SummaryState {
  int top_belief = 0;      // 0 low, 1 med, 2 high
  int candidates = 3;      // 0 none, 1 one, 2 few (2-5), 3 many
  int grounded = 0;        // 0, 1 (1-2), 2 (3+)
  bool offered = false;
  UserClass last_user = UserClass::empty;
  int inform_zssp = 0;     // 0..2, always 0 outside RR

  static constexpr std::size_t kCount = 3 * 4 * 3 * 2 * 5 * 3;

  auto operator<=>(const SummaryState&) const = default;

  std::size_t index() const {
    std::size_t i = static_cast<std::size_t>(top_belief);
    i = i * 4 + static_cast<std::size_t>(candidates);
    i = i * 3 + static_cast<std::size_t>(grounded);
    i = i * 2 + (offered ? 1 : 0);
    i = i * 5 + static_cast<std::size_t>(last_user);
    i = i * 3 + static_cast<std::size_t>(inform_zssp);
    return i;
  }

  static SummaryState from_index(std::size_t i) {
    if (i >= kCount) fail("summary state index ", i, " out of range");
    SummaryState s;
    s.inform_zssp = static_cast<int>(i % 3);
    i /= 3;
    s.last_user = static_cast<UserClass>(i % 5);
    i /= 5;
    s.offered = i % 2;
    i /= 2;
    s.grounded = static_cast<int>(i % 3);
    i /= 3;
    s.candidates = static_cast<int>(i % 4);
    i /= 4;
    s.top_belief = static_cast<int>(i);
    return s;
  }
};

struct BucketConfig {
  double top_low = 0.4;   // below: low
  double top_high = 0.8;  // at or above: high
  std::size_t few_max = 5;
};

inline SummaryState summarize(const Belief& b, const QualityFeatures& qf, Protocol protocol,
                              const BucketConfig& bc = {}) {
  SummaryState s;
  if (auto f = focus_slot(b)) {
    const double top = top_value(b.marginals.at(*f)).second;
    s.top_belief = top < bc.top_low ? 0 : top < bc.top_high ? 1 : 2;
  }
  const std::size_t n = b.candidates.size();
  s.candidates = n == 0 ? 0 : n == 1 ? 1 : n <= bc.few_max ? 2 : 3;
  std::size_t g = 0;
  for (const auto& [slot, st] : b.grounding) g += st == Grounding::confirmed;
  s.grounded = g == 0 ? 0 : g <= 2 ? 1 : 2;
  s.offered = b.offered.has_value();
  s.last_user = classify_user_acts(b.last_user_acts);
  s.inform_zssp = protocol == Protocol::RR ? inform_zssp(qf) : 0;
  return s;
}

//------------------------------------------------------------------------------
// Feasibility

namespace detail {

inline bool any_slot(const Belief& b, Grounding g) {
  return std::any_of(b.grounding.begin(), b.grounding.end(), [&](const auto& kv) { return kv.second == g; });
}

inline bool any_unconfirmed(const Belief& b) {
  return std::any_of(b.grounding.begin(), b.grounding.end(),
                     [](const auto& kv) { return kv.second != Grounding::confirmed; });
}

}  // namespace detail

inline ActMask feasible_actions(const Belief& b, Protocol protocol, bool last_was_ask) {
  ActMask m{};
  auto set = [&](SummaryAct a, bool v) { m[static_cast<std::size_t>(a)] = v; };
  const auto focus = focus_slot(b);
  set(SummaryAct::Greet, true);
  set(SummaryAct::Bye, true);
  set(SummaryAct::BoldRQ, detail::any_unconfirmed(b));
  set(SummaryAct::TentRQ, focus.has_value());
  set(SummaryAct::Confirm, focus.has_value());
  set(SummaryAct::FindAlt, b.offered && b.candidates.size() > 1);
  if (focus) {
    std::size_t live = 0;
    for (const auto& [v, p] : b.marginals.at(*focus)) live += p > 0.0;
    set(SummaryAct::Split, live >= 2);
  }
  set(SummaryAct::Repeat, b.last_system_act.has_value());
  set(SummaryAct::Offer, !b.candidates.empty());
  set(SummaryAct::Inform, b.offered.has_value());
  set(SummaryAct::QMore, b.offered.has_value());
  // Annotation acts need an utterance to annotate, i.e. the user has spoken.
  const bool ask = protocol == Protocol::RR && !last_was_ask && b.last_system_act.has_value();
  set(SummaryAct::AskConfirmZ, ask);
  set(SummaryAct::AskAnnotateZ, ask);
  return m;
}

inline bool feasible(const ActMask& m, SummaryAct a) { return m[static_cast<std::size_t>(a)]; }

//------------------------------------------------------------------------------
// NLG templates and summary-to-full expansion

using Templates = std::map<SummaryAct, std::string>;

inline Templates default_templates() {
  return {{SummaryAct::Greet, "Hello, what can you see in the picture?"},
          {SummaryAct::Bye, "Thank you, goodbye."},
          {SummaryAct::BoldRQ, "What about the {slot}?"},
          {SummaryAct::TentRQ, "So the {slot} is {value}. And the {slot2}?"},
          {SummaryAct::Confirm, "Is the {slot} {value}?"},
          {SummaryAct::FindAlt, "Then maybe it is {entity}."},
          {SummaryAct::Split, "Is the {slot} {value} or {value2}?"},
          {SummaryAct::Repeat, "I said: {previous}"},
          {SummaryAct::Offer, "I think it is {entity}."},
          {SummaryAct::Inform, "In {entity}, the {slot} is {value}."},
          {SummaryAct::QMore, "Would you like to know more about {entity}?"},
          {SummaryAct::AskConfirmZ, "Did I understand you correctly?"},
          {SummaryAct::AskAnnotateZ, "Could you annotate what you just said?"}};
}

inline Templates load_templates(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Error::Kind::not_found, "cannot open template file '", path.string(), "'");
  Templates t = default_templates();
  try {
    auto j = nlohmann::json::parse(in);
    for (const auto& [key, text] : j.items()) t[parse_summary_act(key)] = text.get<std::string>();
  } catch (const nlohmann::json::exception& ex) {
    fail(Error::Kind::format, "corrupt template file '", path.string(), "': ", ex.what());
  }
  return t;
}

inline std::string render(std::string text, const std::map<std::string, std::string>& fields) {
  for (const auto& [k, v] : fields) {
    const std::string key = "{" + k + "}";
    for (auto pos = text.find(key); pos != std::string::npos; pos = text.find(key, pos + v.size()))
      text.replace(pos, key.size(), v);
  }
  return text;
}

namespace detail {

// Slot for a bold request: a hypothesis too weak to confirm is re-asked
// first, otherwise the first unknown slot in ontology order.
inline std::optional<std::string> request_target(const TaskSpec& task, const Belief& b,
                                                  const BucketConfig& bc) {
  if (auto f = focus_slot(b); f && top_value(b.marginals.at(*f)).second < bc.top_low) return f;
  for (const auto& s : task.ontology.slots)
    if (b.grounding.at(s) == Grounding::unknown) return s;
  for (const auto& s : task.ontology.slots)
    if (b.grounding.at(s) != Grounding::confirmed) return s;
  return std::nullopt;
}

}  // namespace detail

inline SystemAction expand_action(const TaskSpec& task, SummaryAct a, const Belief& b,
                                  const Templates& templates = default_templates(),
                                  const BucketConfig& bc = {}) {
  // Ask acts are always expandable when asked for explicitly; the caller masks them.
  if (!is_ask(a) && !feasible(feasible_actions(b, Protocol::RR, false), a))
    fail("summary act ", to_string(a), " is not feasible in the current belief");
  SystemAction out;
  out.kind = a;
  std::map<std::string, std::string> f;
  auto offer_next = [&](const std::optional<std::string>& skip) {
    for (const auto& id : b.candidates)
      if (!skip || id != *skip) return id;
    fail("no alternative entity to offer");
  };
  switch (a) {
    case SummaryAct::Greet: out.act = make_act("hello"); break;
    case SummaryAct::Bye: out.act = make_act("bye"); break;
    case SummaryAct::BoldRQ: {
      auto slot = detail::request_target(task, b, bc);
      out.act = make_act("request", *slot);
      f["slot"] = *slot;
      break;
    }
    case SummaryAct::TentRQ: {
      auto slot = *focus_slot(b);
      auto value = top_value(b.marginals.at(slot)).first;
      out.act = make_act("confirm", slot, value);
      for (const auto& s : task.ontology.slots)
        if (s != slot && b.grounding.at(s) == Grounding::unknown) {
          out.requested_slot = s;
          break;
        }
      f["slot"] = slot;
      f["value"] = value;
      f["slot2"] = out.requested_slot.value_or("rest");
      break;
    }
    case SummaryAct::Confirm: {
      auto slot = *focus_slot(b);
      auto value = top_value(b.marginals.at(slot)).first;
      out.act = make_act("confirm", slot, value);
      f["slot"] = slot;
      f["value"] = value;
      break;
    }
    case SummaryAct::FindAlt:
    case SummaryAct::Offer: {
      out.entity = a == SummaryAct::FindAlt ? offer_next(b.offered) : offer_next(std::nullopt);
      out.act = make_act("offer", "entity", *out.entity);
      f["entity"] = *out.entity;
      break;
    }
    case SummaryAct::Split: {
      auto slot = *focus_slot(b);
      std::vector<std::pair<double, std::string>> ranked;
      for (const auto& [v, p] : b.marginals.at(slot)) ranked.emplace_back(-p, v);
      std::sort(ranked.begin(), ranked.end());
      out.act = make_act("select", slot, ranked[0].second + "|" + ranked[1].second);
      f["slot"] = slot;
      f["value"] = ranked[0].second;
      f["value2"] = ranked[1].second;
      break;
    }
    case SummaryAct::Repeat:
      out.act = make_act("repeat");
      f["previous"] = std::string(to_string(*b.last_system_act));
      break;
    case SummaryAct::Inform: {
      const Entity* e = task.find_entity(*b.offered);
      out.entity = e->id;
      f["entity"] = e->id;
      for (const auto& s : task.ontology.slots)
        if (!b.revealed.count(s)) {
          out.act = make_act("inform", s, e->attributes.at(s));
          f["slot"] = s;
          f["value"] = e->attributes.at(s);
          break;
        }
      if (out.act.acttype.empty()) {
        out.act = make_act("inform", "message", e->message);
        f["slot"] = "message";
        f["value"] = e->message;
      }
      break;
    }
    case SummaryAct::QMore:
      out.act = make_act("reqmore");
      out.entity = b.offered;
      f["entity"] = b.offered.value_or("");
      break;
    case SummaryAct::AskConfirmZ: out.act = make_act("askconfirm"); break;
    case SummaryAct::AskAnnotateZ: out.act = make_act("askannotate"); break;
  }
  auto it = templates.find(a);
  out.text = render(it != templates.end() ? it->second : default_templates().at(a), f);
  return out;
}

//------------------------------------------------------------------------------
// Handcrafted policy

inline SummaryAct handcrafted_policy(const SummaryState& s) {
  if (s.last_user == UserClass::empty && s.grounded == 0 && !s.offered && s.top_belief == 0 &&
      s.candidates == 3)
    return SummaryAct::Greet;
  if (s.offered && s.last_user == UserClass::social) return SummaryAct::Bye;
  if (s.offered && s.last_user == UserClass::request) return SummaryAct::Inform;
  if (!s.offered && (s.candidates == 1 || s.candidates == 2)) return SummaryAct::Offer;
  if (s.top_belief == 1) return SummaryAct::Confirm;
  if (s.top_belief == 2) return SummaryAct::TentRQ;
  if (s.offered) return SummaryAct::QMore;
  return SummaryAct::BoldRQ;
}

// The rule cascade, falling back through a fixed order when its pick is masked.
inline SummaryAct handcrafted_act(const SummaryState& s, const ActMask& mask) {
  SummaryAct a = handcrafted_policy(s);
  if (feasible(mask, a)) return a;
  for (auto alt : {SummaryAct::Offer, SummaryAct::Confirm, SummaryAct::BoldRQ, SummaryAct::QMore})
    if (feasible(mask, alt)) return alt;
  return SummaryAct::Bye;
}

}  // namespace dialearn

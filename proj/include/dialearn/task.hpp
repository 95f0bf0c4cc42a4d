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
#include <compare>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dialearn/error.hpp"

namespace dialearn {

//------------------------------------------------------------------------------
// Dialogue acts

// acttype(slot=value); `value` implies `slot`.
struct DialogueAct {
  std::string acttype;
  std::optional<std::string> slot;
  std::optional<std::string> value;

  auto operator<=>(const DialogueAct&) const = default;
  bool operator==(const DialogueAct&) const = default;

  std::string str() const {
    std::string out = acttype + "(";
    if (slot) {
      out += *slot;
      if (value) out += "=" + *value;
    }
    return out + ")";
  }
};

inline DialogueAct make_act(std::string acttype) { return {std::move(acttype), {}, {}}; }
inline DialogueAct make_act(std::string acttype, std::string slot) {
  return {std::move(acttype), std::move(slot), {}};
}
inline DialogueAct make_act(std::string acttype, std::string slot, std::string value) {
  return {std::move(acttype), std::move(slot), std::move(value)};
}

// Parses "acttype(slot=value)", "request(slot)" and "hello()".
inline DialogueAct parse_act(std::string_view text) {
  auto open = text.find('(');
  if (open == std::string_view::npos || open == 0 || text.back() != ')')
    fail("malformed dialogue act '", text, "'");
  DialogueAct act;
  act.acttype = std::string(text.substr(0, open));
  auto inner = text.substr(open + 1, text.size() - open - 2);
  if (!inner.empty()) {
    auto eq = inner.find('=');
    if (eq == std::string_view::npos) {
      act.slot = std::string(inner);
    } else {
      if (eq == 0 || eq + 1 == inner.size()) fail("malformed dialogue act '", text, "'");
      act.slot = std::string(inner.substr(0, eq));
      act.value = std::string(inner.substr(eq + 1));
    }
  }
  return act;
}

// Acttypes the parser is known to get wrong; their presence raises an alarm.
inline const std::set<std::string>& rare_acttypes() {
  static const std::set<std::string> rare{"help",    "repeat", "restart", "reqalts",
                                          "reqmore", "ack",    "thankyou"};
  return rare;
}

// Acttype carrying slot=value, and acttype carrying a bare slot.
inline constexpr std::string_view kValueActtype = "inform";
inline constexpr std::string_view kSlotActtype = "request";

//------------------------------------------------------------------------------
// Ontology and database

struct Ontology {
  std::vector<std::string> acttypes;
  std::vector<std::string> slots;
  std::map<std::string, std::vector<std::string>> values_per_slot;
  // DA pattern (DialogueAct::str()) -> seed lexical chunks, words separated by spaces.
  std::map<std::string, std::vector<std::string>> lexicon;

  bool has_acttype(std::string_view a) const {
    return std::find(acttypes.begin(), acttypes.end(), a) != acttypes.end();
  }
  bool has_slot(std::string_view s) const {
    return std::find(slots.begin(), slots.end(), s) != slots.end();
  }
  bool has_value(const std::string& slot, std::string_view v) const {
    auto it = values_per_slot.find(slot);
    return it != values_per_slot.end() &&
           std::find(it->second.begin(), it->second.end(), v) != it->second.end();
  }

  // True when the act is expressible in this ontology.
  bool admits(const DialogueAct& act) const {
    if (!has_acttype(act.acttype)) return false;
    if (act.value && !act.slot) return false;
    if (act.acttype == kValueActtype)
      return act.slot && act.value && has_value(*act.slot, *act.value);
    if (act.acttype == kSlotActtype) return act.slot && !act.value && has_slot(*act.slot);
    return !act.slot && !act.value;
  }

  // Every DA pattern the parser can emit, in a stable order.
  std::vector<DialogueAct> patterns() const {
    std::vector<DialogueAct> out;
    for (const auto& a : acttypes) {
      if (a == kValueActtype) {
        for (const auto& s : slots)
          for (const auto& v : values_per_slot.at(s)) out.push_back(make_act(a, s, v));
      } else if (a == kSlotActtype) {
        for (const auto& s : slots) out.push_back(make_act(a, s));
      } else {
        out.push_back(make_act(a));
      }
    }
    return out;
  }

  std::size_t n_values() const {
    std::size_t n = 0;
    for (const auto& [s, vs] : values_per_slot) n += vs.size();
    return n;
  }

  std::size_t n_lexical_forms() const {
    std::size_t n = 0;
    for (const auto& [p, forms] : lexicon) n += forms.size();
    return n;
  }
};

struct Entity {
  std::string id;
  std::map<std::string, std::string> attributes;
  std::string message;

  bool operator==(const Entity&) const = default;
};

struct TaskSpec {
  Ontology ontology;
  std::vector<Entity> database;  // sorted by id
  std::uint64_t seed = 0;
  // Held-out surface forms reserved for the simulated user: one content word
  // per entry, disjoint from every lexicon word.
  std::map<std::string, std::vector<std::string>> paraphrases;
  // Semantically empty words the simulated user wraps content words with.
  std::vector<std::string> fillers;

  bool operator==(const TaskSpec& o) const {
    return seed == o.seed && database == o.database && paraphrases == o.paraphrases &&
           fillers == o.fillers && ontology.acttypes == o.ontology.acttypes &&
           ontology.slots == o.ontology.slots &&
           ontology.values_per_slot == o.ontology.values_per_slot &&
           ontology.lexicon == o.ontology.lexicon;
  }

  const Entity* find_entity(std::string_view id) const {
    auto it = std::lower_bound(database.begin(), database.end(), id,
                               [](const Entity& e, std::string_view k) { return e.id < k; });
    return it != database.end() && it->id == id ? &*it : nullptr;
  }
};

//------------------------------------------------------------------------------
// Validation

inline std::vector<std::string> validate_ontology(const Ontology& o) {
  std::vector<std::string> violations;
  if (o.acttypes.empty()) violations.push_back("ontology has no acttypes");
  std::set<std::string> seen;
  for (const auto& a : o.acttypes)
    if (!seen.insert(a).second) violations.push_back("duplicate acttype '" + a + "'");
  for (const auto& s : o.slots) {
    auto it = o.values_per_slot.find(s);
    if (it == o.values_per_slot.end() || it->second.empty())
      violations.push_back("slot '" + s + "' has no values");
  }
  for (const auto& [s, vs] : o.values_per_slot)
    if (!o.has_slot(s)) violations.push_back("values given for unknown slot '" + s + "'");
  for (const auto& [pattern, forms] : o.lexicon) {
    DialogueAct act;
    try {
      act = parse_act(pattern);
    } catch (const Error&) {
      violations.push_back("malformed lexicon pattern '" + pattern + "'");
      continue;
    }
    if (!o.admits(act)) violations.push_back("lexicon pattern '" + pattern + "' not in ontology");
    for (const auto& f : forms)
      if (f.find_first_not_of(' ') == std::string::npos)
        violations.push_back("empty lexical chunk for '" + pattern + "'");
  }
  return violations;
}

// Attribute-level check of one entity against the ontology.
inline std::vector<std::string> validate_entity(const Ontology& o, const Entity& e) {
  std::vector<std::string> violations;
  for (const auto& [s, v] : e.attributes)
    if (!o.has_value(s, v))
      violations.push_back("entity '" + e.id + "' has unknown pair " + s + "=" + v);
  return violations;
}

//------------------------------------------------------------------------------
// Database lookup

using Constraints = std::map<std::string, std::string>;

// Entities satisfying every constraint, in id order.
inline std::vector<const Entity*> lookup_entities(const TaskSpec& task, const Constraints& c) {
  for (const auto& [s, v] : c) {
    if (!task.ontology.has_slot(s)) fail("unknown slot '", s, "' in constraints");
    if (!task.ontology.has_value(s, v)) fail("unknown value '", v, "' for slot '", s, "'");
  }
  std::vector<const Entity*> out;
  for (const auto& e : task.database) {
    bool ok = std::all_of(c.begin(), c.end(), [&](const auto& kv) {
      auto it = e.attributes.find(kv.first);
      return it != e.attributes.end() && it->second == kv.second;
    });
    if (ok) out.push_back(&e);
  }
  return out;
}

//------------------------------------------------------------------------------
// Synthetic task generation

enum class ValueDistribution { round_robin, random };

struct TaskSizes {
  std::size_t n_acttypes = 16;
  std::size_t n_slots = 9;
  std::size_t n_values = 51;
  std::size_t n_lexical_forms = 53;
  std::size_t n_entities = 300;
  std::size_t n_paraphrases = 3;  // held-out content words per DA pattern
  std::size_t n_fillers = 24;
  ValueDistribution distribution = ValueDistribution::round_robin;
};

namespace detail {

inline const std::vector<std::string>& canonical_acttypes() {
  // Value/slot-bearing acts first so small ontologies stay usable.
  static const std::vector<std::string> names{
      "inform", "affirm",  "deny", "hello",   "bye",     "request", "negate", "confirm",
      "select", "help",    "repeat", "restart", "reqalts", "reqmore", "ack",  "thankyou"};
  return names;
}

inline const std::vector<std::string>& canonical_slots() {
  static const std::vector<std::string> names{"colour",  "shape",  "setting", "mood",  "person",
                                              "animal", "object", "action",  "style"};
  return names;
}

class WordForge {
 public:
  explicit WordForge(std::mt19937_64& rng) : rng_(rng) {}

  std::string fresh(int min_syll = 2, int max_syll = 3) {
    static constexpr std::string_view cons = "bdfgklmnprstvz";
    static constexpr std::string_view vow = "aeiou";
    std::uniform_int_distribution<int> nsyl(min_syll, max_syll);
    std::uniform_int_distribution<std::size_t> c(0, cons.size() - 1), v(0, vow.size() - 1);
    for (;;) {
      std::string w;
      for (int i = nsyl(rng_); i > 0; --i) {
        w += cons[c(rng_)];
        w += vow[v(rng_)];
      }
      if (used_.insert(w).second) return w;
    }
  }

 private:
  std::mt19937_64& rng_;
  std::set<std::string> used_;
};

}  // namespace detail

inline TaskSpec generate_task(std::uint64_t seed, const TaskSizes& sz = {}) {
  if (sz.n_acttypes < 1 || sz.n_slots < 1 || sz.n_values < 1 || sz.n_lexical_forms < 1 ||
      sz.n_entities < 1)
    fail("task sizes must all be >= 1 (acttypes=", sz.n_acttypes, " slots=", sz.n_slots,
         " values=", sz.n_values, " lexical_forms=", sz.n_lexical_forms,
         " entities=", sz.n_entities, ")");
  if (sz.n_values < sz.n_slots)
    fail("cannot spread ", sz.n_values, " values over ", sz.n_slots,
         " slots: every slot needs at least one value");

  std::mt19937_64 rng(seed);
  detail::WordForge forge(rng);
  TaskSpec task;
  task.seed = seed;
  Ontology& o = task.ontology;

  const auto& acts = detail::canonical_acttypes();
  for (std::size_t i = 0; i < sz.n_acttypes; ++i)
    o.acttypes.push_back(i < acts.size() ? acts[i] : "act" + std::to_string(i));
  const auto& slots = detail::canonical_slots();
  for (std::size_t i = 0; i < sz.n_slots; ++i)
    o.slots.push_back(i < slots.size() ? slots[i] : "slot" + std::to_string(i));

  std::vector<std::size_t> owner(sz.n_values);
  if (sz.distribution == ValueDistribution::round_robin) {
    for (std::size_t i = 0; i < sz.n_values; ++i) owner[i] = i % sz.n_slots;
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, sz.n_slots - 1);
    for (std::size_t i = 0; i < sz.n_values; ++i) owner[i] = i < sz.n_slots ? i : pick(rng);
  }
  for (std::size_t i = 0; i < sz.n_values; ++i)
    o.values_per_slot[o.slots[owner[i]]].push_back(forge.fresh());

  // Lexical forms model the act types; values are named by their own symbol.
  std::vector<std::string> act_patterns;
  for (const auto& p : o.patterns())
    if (p.acttype != kValueActtype) act_patterns.push_back(p.str());
  if (act_patterns.empty())
    for (const auto& p : o.patterns()) act_patterns.push_back(p.str());
  std::uniform_int_distribution<int> form_len(1, 2);
  for (std::size_t i = 0; i < sz.n_lexical_forms; ++i) {
    std::string form = forge.fresh();
    for (int extra = form_len(rng) - 1; extra > 0; --extra) form += " " + forge.fresh();
    o.lexicon[act_patterns[i % act_patterns.size()]].push_back(form);
  }

  for (const auto& p : o.patterns())
    for (std::size_t i = 0; i < sz.n_paraphrases; ++i) task.paraphrases[p.str()].push_back(forge.fresh());
  for (std::size_t i = 0; i < sz.n_fillers; ++i) task.fillers.push_back(forge.fresh(1, 2));

  const int width = static_cast<int>(std::to_string(sz.n_entities - 1).size());
  std::set<std::map<std::string, std::string>> combos;
  for (std::size_t i = 0; i < sz.n_entities; ++i) {
    Entity e;
    std::string num = std::to_string(i);
    e.id = "e" + std::string(std::max(0, width - static_cast<int>(num.size())), '0') + num;
    // Distinct attribute combinations keep every entity identifiable; give up
    // on distinctness only when the combination space is exhausted.
    for (int attempt = 0; attempt < 64; ++attempt) {
      e.attributes.clear();
      for (const auto& s : o.slots) {
        const auto& vs = o.values_per_slot.at(s);
        e.attributes[s] = vs[std::uniform_int_distribution<std::size_t>(0, vs.size() - 1)(rng)];
      }
      if (!combos.count(e.attributes)) break;
    }
    combos.insert(e.attributes);
    e.message = "message-" + e.id;
    task.database.push_back(std::move(e));
  }
  return task;
}

//------------------------------------------------------------------------------
// Line-delimited JSON persistence

inline constexpr int kTaskFormatVersion = 1;

inline void save_task(const TaskSpec& task, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(Error::Kind::io, "cannot write task file '", path.string(), "'");
  nlohmann::json head{{"type", "ontology"},
                      {"version", kTaskFormatVersion},
                      {"seed", task.seed},
                      {"acttypes", task.ontology.acttypes},
                      {"slots", task.ontology.slots},
                      {"values", task.ontology.values_per_slot},
                      {"lexicon", task.ontology.lexicon},
                      {"paraphrases", task.paraphrases},
                      {"fillers", task.fillers}};
  out << head.dump() << '\n';
  for (const auto& e : task.database) {
    nlohmann::json row{{"type", "entity"}, {"id", e.id}, {"attributes", e.attributes},
                       {"message", e.message}};
    out << row.dump() << '\n';
  }
}

inline TaskSpec load_task(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Error::Kind::not_found, "cannot open task file '", path.string(), "'");
  TaskSpec task;
  std::string line;
  bool have_head = false;
  std::size_t lineno = 0;
  try {
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      auto j = nlohmann::json::parse(line);
      const auto type = j.at("type").get<std::string>();
      if (type == "ontology") {
        if (j.at("version").get<int>() != kTaskFormatVersion)
          fail(Error::Kind::format, "task file '", path.string(), "' has version ",
               j.at("version").dump(), ", expected ", kTaskFormatVersion);
        task.seed = j.at("seed").get<std::uint64_t>();
        j.at("acttypes").get_to(task.ontology.acttypes);
        j.at("slots").get_to(task.ontology.slots);
        j.at("values").get_to(task.ontology.values_per_slot);
        j.at("lexicon").get_to(task.ontology.lexicon);
        j.at("paraphrases").get_to(task.paraphrases);
        j.at("fillers").get_to(task.fillers);
        have_head = true;
      } else if (type == "entity") {
        Entity e;
        j.at("id").get_to(e.id);
        j.at("attributes").get_to(e.attributes);
        j.at("message").get_to(e.message);
        task.database.push_back(std::move(e));
      } else {
        fail(Error::Kind::format, "unknown record type '", type, "'");
      }
    }
  } catch (const nlohmann::json::exception& ex) {
    fail(Error::Kind::format, "corrupt task file '", path.string(), "' at line ", lineno, ": ",
         ex.what());
  }
  if (!have_head) fail(Error::Kind::format, "task file '", path.string(), "' has no ontology record");
  std::sort(task.database.begin(), task.database.end(),
            [](const Entity& a, const Entity& b) { return a.id < b.id; });
  return task;
}

}  // namespace dialearn

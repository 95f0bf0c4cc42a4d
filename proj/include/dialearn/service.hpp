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

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "dialearn/harness.hpp"
#include "dialearn/protocol.hpp"

// After Eigen: <resolv.h>, pulled in by httplib, defines a _res macro.
#include <httplib.h>

namespace dialearn {

inline constexpr int kApiVersion = 1;

// Live dialogue sessions over shared models. A model serves any number of
// evaluation sessions (each on its own snapshot) but one learning session at
// a time, since learner updates do not commute.
class SessionService {
 public:
  using json = nlohmann::json;

  // `persist_dir`: where a model is saved after each learning session ends.
  void add_model(const std::string& ref, Models models, Protocol protocol,
                 std::optional<std::filesystem::path> persist_dir = std::nullopt) {
    std::lock_guard lock(mu_);
    models_[ref] = std::make_shared<ModelEntry>(std::move(models), protocol, std::move(persist_dir));
  }

  // Copy of a model's current state, taken under its lock.
  Models model_snapshot(const std::string& ref) {
    auto m = model(ref);
    std::lock_guard lock(m->mu);
    return m->models;
  }

  json create_session(const json& req) {
    check_version(req);
    const std::string ref = req.value("model", std::string("default"));
    auto m = model(ref);
    const Protocol protocol =
        req.contains("protocol") ? parse_protocol(req.at("protocol").get<std::string>()) : m->protocol;
    const bool learning = req.value("learning", true);
    const std::uint64_t seed = req.contains("seed") ? req.at("seed").get<std::uint64_t>() : fresh_seed();

    EngineConfig ec;
    ec.protocol = protocol;
    ec.learning = learning;
    ec.epsilon = req.value("epsilon", 0.0);
    if (ec.epsilon < 0.0 || ec.epsilon > 1.0) fail("epsilon must lie in [0,1]");
    if (req.contains("templates")) {
      for (const auto& [k, v] : req.at("templates").items()) ec.templates[parse_summary_act(k)] = v.get<std::string>();
    }

    auto s = std::make_shared<SessionEntry>();
    s->model = m;
    s->learning = learning;
    {
      std::lock_guard lock(m->mu);
      if (learning) {
        if (m->learning_session) fail(Error::Kind::conflict, "model '", ref, "' already has a learning session");
        m->learning_session = true;
        s->session = std::make_unique<DialogueSession>(m->models, ec, seed);
      } else {
        s->snapshot = std::make_unique<Models>(m->models);
        s->session = std::make_unique<DialogueSession>(*s->snapshot, ec, seed);
      }
    }
    std::string id;
    {
      std::lock_guard lock(mu_);
      do id = token(); while (sessions_.count(id));
      sessions_[id] = s;
    }
    json out = turn_json(*s, s->session->opening());
    out["session"] = id;
    out["protocol"] = to_string(protocol);
    out["learning"] = learning;
    return out;
  }

  json post_utterance(const std::string& id, const json& req) {
    check_version(req);
    auto s = session(id);
    std::lock_guard lock(s->mu);
    const std::string text = req.contains("text") ? req.at("text").get<std::string>() : std::string();
    return with_model(*s, [&] { return turn_json(*s, s->session->user_turn(text)); });
  }

  // Confirm list: {"answers": [bool...], "accepted_whole"?: bool}.
  // Annotation form: {"spans": [{"start", "end", "act"}...]}.
  json post_annotation(const std::string& id, const json& req) {
    check_version(req);
    auto s = session(id);
    std::lock_guard lock(s->mu);
    DialogueSession& d = *s->session;
    const Prompt p = d.pending();
    ExpertResult answer;
    if (req.contains("answers")) {
      if (p != Prompt::confirm_list) fail(Error::Kind::conflict, "session expects ", to_string(p), ", not confirm answers");
      answer = confirm_outcome(d.pending_hypothesis(), req.at("answers").get<std::vector<bool>>());
      if (req.contains("accepted_whole")) answer.outcome.accepted_whole = req.at("accepted_whole").get<bool>();
    } else if (req.contains("spans")) {
      if (p != Prompt::annotation_form) fail(Error::Kind::conflict, "session expects ", to_string(p), ", not an annotation");
      std::vector<TruthDA> spans;
      for (const auto& j : req.at("spans")) {
        const auto start = j.at("start").get<std::size_t>();
        const auto end = j.at("end").get<std::size_t>();
        spans.push_back({act_from_json(j.at("act")), {start, end}});
      }
      answer = annotation_outcome(d.pending_hypothesis(), spans);
    } else {
      fail("annotation payload needs 'answers' or 'spans'");
    }
    return with_model(*s, [&] {
      const TurnResult r = d.submit_annotation(answer);
      json out = turn_json(*s, r);
      out["effort"] = *r.effort;
      out["loss"] = *r.loss;
      out["kb_rows"] = s->models().kb.size();
      return out;
    });
  }

  json post_feedback(const std::string& id, const json& req) {
    check_version(req);
    auto s = session(id);
    std::lock_guard lock(s->mu);
    const double a = req.at("a").get<double>();
    s->session->feedback(a);
    return {{"version", kApiVersion}, {"ok", true}, {"turn", s->session->transcript().back().index}, {"a", a}};
  }

  json end_session(const std::string& id, const json& req) {
    check_version(req);
    auto s = session(id);
    std::lock_guard lock(s->mu);
    const bool success = req.at("success").get<bool>();
    DialogueRecord r = with_model(*s, [&] { return s->session->finalize(success); });
    release(*s);
    json turns = json::array();
    double a_prev = 0.0;
    for (const auto& t : r.turns) {
      turns.push_back({{"index", t.index}, {"f", t.f}, {"a", t.a},
                       {"shaped", shaped_reward(t.f, t.a, a_prev, r.theta)}});
      a_prev = t.a;
    }
    s->record = r;
    return {{"version", kApiVersion},
            {"success", r.success},
            {"reward", r.reward},
            {"breakdown", {{"turns", turns}, {"success_bonus", r.success ? r.success_bonus : 0.0}}},
            {"n_turns", r.turns.size()},
            {"kb_rows_before", r.kb_rows_before},
            {"kb_rows_after", r.kb_rows_after}};
  }

  json transcript(const std::string& id) {
    auto s = session(id);
    std::lock_guard lock(s->mu);
    json turns = json::array();
    for (const auto& t : s->session->transcript()) turns.push_back(to_json(t));
    json out{{"version", kApiVersion},
             {"session", id},
             {"protocol", to_string(s->session->config().protocol)},
             {"pending", to_string(s->session->pending())},
             {"finalized", s->session->finalized()},
             {"turns", turns}};
    if (s->record) out["summary"] = summary_json(*s->record);
    return out;
  }

 private:
  struct ModelEntry {
    ModelEntry(Models m, Protocol p, std::optional<std::filesystem::path> dir)
        : models(std::move(m)), protocol(p), persist_dir(std::move(dir)) {}
    Models models;
    Protocol protocol;
    std::optional<std::filesystem::path> persist_dir;
    std::mutex mu;
    bool learning_session = false;
  };

  struct SessionEntry {
    std::mutex mu;
    std::shared_ptr<ModelEntry> model;
    std::unique_ptr<Models> snapshot;  // evaluation sessions only
    std::unique_ptr<DialogueSession> session;
    std::optional<DialogueRecord> record;
    bool learning = false;
    bool released = false;
    const Models& models() const { return snapshot ? *snapshot : model->models; }
  };

  static void check_version(const json& req) {
    if (!req.is_object()) fail("request body must be a JSON object");
    if (!req.contains("version")) fail("request is missing 'version'");
    if (req.at("version") != kApiVersion)
      fail("unsupported API version ", req.at("version").dump(), ", expected ", kApiVersion);
  }

  std::shared_ptr<ModelEntry> model(const std::string& ref) {
    std::lock_guard lock(mu_);
    auto it = models_.find(ref);
    if (it == models_.end()) fail(Error::Kind::not_found, "unknown model '", ref, "'");
    return it->second;
  }

  std::shared_ptr<SessionEntry> session(const std::string& id) {
    std::lock_guard lock(mu_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) fail(Error::Kind::not_found, "unknown session '", id, "'");
    return it->second;
  }

  // Learning sessions touch the shared model, so they hold its lock.
  template <typename F>
  std::invoke_result_t<F&> with_model(SessionEntry& s, F&& f) {
    if (!s.learning) return f();
    std::lock_guard lock(s.model->mu);
    return f();
  }

  void release(SessionEntry& s) {
    if (!s.learning || s.released) return;
    std::lock_guard lock(s.model->mu);
    s.model->learning_session = false;
    s.released = true;
    if (s.model->persist_dir) save_model(*s.model->persist_dir, s.model->models, s.model->protocol);
  }

  json turn_json(const SessionEntry& s, const TurnResult& r) const {
    json out{{"version", kApiVersion}, {"pending", to_string(r.prompt)}};
    if (r.system) {
      const auto& t = s.session->transcript().back();
      out["system"] = {{"kind", to_string(r.system->kind)},
                       {"act", r.system->act.str()},
                       {"text", r.system->text},
                       {"state", t.state.index()},
                       {"turn", t.index}};
      if (r.system->requested_slot) out["system"]["requested_slot"] = *r.system->requested_slot;
      if (r.system->entity) out["system"]["entity"] = *r.system->entity;
    }
    if (r.prompt == Prompt::confirm_list || r.prompt == Prompt::annotation_form) {
      json das = json::array();
      for (std::size_t i = 0; i < r.hypothesis.das.size(); ++i) {
        const auto& d = r.hypothesis.das[i];
        std::vector<std::string> chunk(r.words.begin() + static_cast<std::ptrdiff_t>(d.span.start),
                                       r.words.begin() + static_cast<std::ptrdiff_t>(d.span.end));
        das.push_back({{"index", i}, {"act", d.act.str()}, {"span", {d.span.start, d.span.end}},
                       {"chunk", join(chunk)}, {"score", d.score}});
      }
      json prompt{{"kind", to_string(r.prompt)}, {"das", das}, {"tokens", r.words}};
      if (r.prompt == Prompt::annotation_form) {
        const Ontology& o = s.models().task->ontology;
        prompt["acttypes"] = o.acttypes;
        prompt["values_per_slot"] = o.values_per_slot;
      }
      out["prompt"] = prompt;
    }
    return out;
  }

  std::uint64_t fresh_seed() {
    std::lock_guard lock(mu_);
    return ids_();
  }

  std::string token() {
    static const char* hex = "0123456789abcdef";
    std::string t;
    for (int i = 0; i < 2; ++i) {
      std::uint64_t x = ids_();
      for (int k = 0; k < 16; ++k, x >>= 4) t += hex[x & 15];
    }
    return t;
  }

  std::mutex mu_;
  std::map<std::string, std::shared_ptr<ModelEntry>> models_;
  std::map<std::string, std::shared_ptr<SessionEntry>> sessions_;
  std::mt19937_64 ids_{std::random_device{}()};
};

//------------------------------------------------------------------------------
// HTTP binding

inline int http_status(const Error& e) {
  switch (e.kind()) {
    case Error::Kind::invalid_argument:
    case Error::Kind::format: return 400;
    case Error::Kind::not_found: return 404;
    case Error::Kind::conflict: return 409;
    case Error::Kind::io: return 500;
  }
  return 500;
}

inline void install_routes(httplib::Server& srv, SessionService& svc) {
  using json = nlohmann::json;
  auto handle = [](httplib::Response& res, auto&& body) {
    try {
      res.set_content(body().dump(), "application/json");
    } catch (const Error& e) {
      res.status = http_status(e);
      res.set_content(json{{"version", kApiVersion}, {"error", e.what()}}.dump(), "application/json");
    } catch (const json::exception& e) {
      res.status = 400;
      res.set_content(json{{"version", kApiVersion}, {"error", std::string("malformed request: ") + e.what()}}.dump(),
                      "application/json");
    }
  };
  auto body = [](const httplib::Request& req) { return json::parse(req.body.empty() ? "{}" : req.body); };

  srv.Post("/sessions", [=, &svc](const httplib::Request& req, httplib::Response& res) {
    handle(res, [&] { return svc.create_session(body(req)); });
  });
  srv.Post(R"(/sessions/([^/]+)/utterance)", [=, &svc](const httplib::Request& req, httplib::Response& res) {
    handle(res, [&] { return svc.post_utterance(req.matches[1], body(req)); });
  });
  srv.Post(R"(/sessions/([^/]+)/annotation)", [=, &svc](const httplib::Request& req, httplib::Response& res) {
    handle(res, [&] { return svc.post_annotation(req.matches[1], body(req)); });
  });
  srv.Post(R"(/sessions/([^/]+)/feedback)", [=, &svc](const httplib::Request& req, httplib::Response& res) {
    handle(res, [&] { return svc.post_feedback(req.matches[1], body(req)); });
  });
  srv.Post(R"(/sessions/([^/]+)/end)", [=, &svc](const httplib::Request& req, httplib::Response& res) {
    handle(res, [&] { return svc.end_session(req.matches[1], body(req)); });
  });
  srv.Get(R"(/sessions/([^/]+)/transcript)", [=, &svc](const httplib::Request& req, httplib::Response& res) {
    handle(res, [&] { return svc.transcript(req.matches[1]); });
  });
}

}  // namespace dialearn

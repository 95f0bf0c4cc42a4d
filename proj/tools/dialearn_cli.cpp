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

// Command-line front end: gen-task, train, eval, curve, serve.

#include <csignal>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "dialearn/dialearn.hpp"

namespace {

using namespace dialearn;

struct CommonOptions {
  std::optional<std::string> config;
  std::optional<std::string> protocol;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> task_file;
  std::optional<std::string> vectors_file;
  std::optional<std::size_t> n_train;
  std::optional<std::size_t> n_test;
  std::vector<std::string> set;  // extra key=value overrides
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "key = value configuration file");
  cmd->add_option("--protocol", o.protocol, "zh, bh, br or rr");
  cmd->add_option("--seed", o.seed, "run seed");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--task-file", o.task_file, "task file written by gen-task");
  cmd->add_option("--vectors-file", o.vectors_file, "word vector file");
  cmd->add_option("--n-train", o.n_train, "training dialogues");
  cmd->add_option("--n-test", o.n_test, "test dialogues");
  cmd->add_option("--set", o.set, "override a config key, e.g. --set patience=10");
}

// Defaults, then the config file, then explicit flags.
RunConfig resolve(const CommonOptions& o) {
  RunConfig c = o.config ? load_run_config(*o.config) : RunConfig{};
  for (const auto& kv : o.set) apply_config_text(c, kv, "--set");
  if (o.protocol) c.protocol = parse_protocol(*o.protocol);
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.out = *o.out;
  if (o.task_file) c.task_file = *o.task_file;
  if (o.vectors_file) c.vectors_file = *o.vectors_file;
  if (o.n_train) c.n_train = *o.n_train;
  if (o.n_test) c.n_test = *o.n_test;
  return c;
}

void print_summary(const std::string& label, const MetricsLog& log) {
  std::cout << label << ": " << log.rows.size() << " dialogues, success " << log.success_rate()
            << "%, avg reward " << log.avg_reward() << "\n";
}

int exit_code(const Error& e) {
  switch (e.kind()) {
    case Error::Kind::invalid_argument:
    case Error::Kind::format: return 2;
    case Error::Kind::not_found: return 3;
    case Error::Kind::conflict: return 4;
    case Error::Kind::io: return 5;
  }
  return 1;
}

httplib::Server* g_server = nullptr;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dialearn: on-line joint learning of a zero-shot semantic parser and a dialogue policy"};
  app.require_subcommand(1);

  CommonOptions gen_o, train_o, eval_o;
  auto* gen = app.add_subcommand("gen-task", "generate a task and its word vectors");
  add_common(gen, gen_o);

  auto* train = app.add_subcommand("train", "train under a protocol, then evaluate");
  add_common(train, train_o);
  bool skip_eval = false;
  train->add_flag("--no-eval", skip_eval, "skip the test dialogues");

  auto* eval = app.add_subcommand("eval", "evaluate saved artifacts");
  add_common(eval, eval_o);
  std::string eval_model;
  eval->add_option("--model", eval_model, "artifact directory")->required();

  auto* curve = app.add_subcommand("curve", "smooth a learning curve");
  std::string metrics_path, curve_out;
  std::size_t window = 20, shift = 5;
  curve->add_option("--metrics", metrics_path, "metrics.jsonl from train or eval")->required();
  curve->add_option("--window", window, "window length")->capture_default_str();
  curve->add_option("--shift", shift, "window shift")->capture_default_str();
  curve->add_option("--out", curve_out, "CSV output (stdout when omitted)");

  auto* serve = app.add_subcommand("serve", "serve live sessions over HTTP");
  std::string serve_model, host = "127.0.0.1";
  int port = 8080;
  bool persist = false;
  serve->add_option("--model", serve_model, "artifact directory")->required();
  serve->add_option("--host", host)->capture_default_str();
  serve->add_option("--port", port)->capture_default_str();
  serve->add_flag("--persist", persist, "save the model after every learning session");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      RunConfig c = resolve(gen_o);
      ensure_writable(c.out);
      TaskSpec task = generate_task(gen_o.seed ? *gen_o.seed : c.task_seed, c.task);
      save_task(task, c.out / "task.jsonl");
      save_vectors(synthesize_embeddings(task, c.embeddings), c.out / "vectors.txt");
      std::cout << "wrote " << (c.out / "task.jsonl").string() << " (" << task.ontology.acttypes.size()
                << " acttypes, " << task.ontology.slots.size() << " slots, " << task.ontology.n_values()
                << " values, " << task.ontology.n_lexical_forms() << " lexical forms, " << task.database.size()
                << " entities) and " << (c.out / "vectors.txt").string() << "\n";
    } else if (*train) {
      RunConfig c = resolve(train_o);
      TrainingResult r = run_training(c);
      print_summary(std::string("train ") + std::string(to_string(c.protocol)), r.log);
      if (!skip_eval) {
        std::ofstream dlog(c.out / "eval_dialogues.jsonl");
        MetricsLog ev = evaluate(r.models, c, &dlog);
        write_metrics(ev, c.out / "eval_metrics.csv", c.out / "eval_metrics.jsonl");
        print_summary("test", ev);
      }
    } else if (*eval) {
      RunConfig c = resolve(eval_o);
      LoadedModel m = load_model(eval_model);
      if (!eval_o.protocol) c.protocol = m.protocol;
      ensure_writable(c.out);
      std::ofstream dlog(c.out / "eval_dialogues.jsonl");
      MetricsLog ev = evaluate(m.models, c, &dlog);
      write_metrics(ev, c.out / "eval_metrics.csv", c.out / "eval_metrics.jsonl");
      print_summary(std::string("test ") + std::string(to_string(c.protocol)), ev);
    } else if (*curve) {
      MetricsLog log = read_metrics_jsonl(metrics_path);
      const auto success = smooth_curve(log.series(true), window, shift);
      const auto reward = smooth_curve(log.series(false), window, shift);
      std::ofstream file;
      if (!curve_out.empty()) {
        file.open(curve_out);
        if (!file) fail(Error::Kind::io, "cannot write '", curve_out, "'");
      }
      std::ostream& out = curve_out.empty() ? std::cout : file;
      out << "center,success,reward\n";
      for (std::size_t i = 0; i < success.size(); ++i)
        out << success[i].first << ',' << success[i].second << ',' << reward[i].second << '\n';
    } else if (*serve) {
      LoadedModel m = load_model(serve_model);
      SessionService svc;
      svc.add_model("default", std::move(m.models), m.protocol,
                    persist ? std::optional<std::filesystem::path>(serve_model) : std::nullopt);
      httplib::Server srv;
      install_routes(srv, svc);
      g_server = &srv;
      std::signal(SIGINT, [](int) { if (g_server) g_server->stop(); });
      std::signal(SIGTERM, [](int) { if (g_server) g_server->stop(); });
      std::cout << "serving " << serve_model << " on http://" << host << ":" << port << std::endl;
      if (!srv.listen(host, port)) fail(Error::Kind::io, "cannot listen on ", host, ":", port);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e);
  }
  return 0;
}

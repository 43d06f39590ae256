#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <pthread.h>
#include <thread>

#include "CLI11.hpp"
#include "exprof/artifact.hpp"
#include "exprof/profiler.hpp"
#include "exprof/service.hpp"
#include "exprof/simulation.hpp"
#include "httplib.h"
#include "json.hpp"

using namespace exprof;
using nlohmann::json;

namespace {

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return json::parse(in);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

struct FitArgs {
  std::string data, model = "ls", out, schema;
  std::vector<std::string> responses, exclude, ordinal;
  bool informative_missing = false;
  std::size_t holdout = 0;
  std::uint64_t seed = 1;
  std::size_t stages = 20;
  std::string leverage_rule = "max";
};

int run_fit(const FitArgs& a, bool as_json) {
  std::optional<FactorSpace> schema;
  if (!a.schema.empty()) schema = factor_space_from_json(read_json(a.schema));
  const Dataset data = load_csv(a.data, schema);
  for (const auto& r : a.responses)
    if (!data.find(r)) throw std::invalid_argument("response column '" + r + "' not found in " + a.data);

  Dataset train = data, validation;
  if (a.holdout > 0) std::tie(train, validation) = holdout_split(data, a.holdout, a.seed);

  FactorSpace space;
  if (schema) {
    std::vector<FactorDef> defs;
    for (const auto& f : schema->factors())
      if (std::find(a.responses.begin(), a.responses.end(), f.name) == a.responses.end()) defs.push_back(f);
    space = FactorSpace(std::move(defs));
  } else {
    InferOptions opts;
    opts.exclude = a.responses;
    opts.exclude.insert(opts.exclude.end(), a.exclude.begin(), a.exclude.end());
    opts.ordinal = a.ordinal;
    space = infer_factor_space(train, opts);
  }

  FitOptions opts;
  opts.responses = a.responses;
  opts.informative_missing = a.informative_missing;
  opts.boost.stages = a.stages;
  opts.boost.seed = a.seed;
  if (a.model == "ls")
    opts.kind = ModelKind::LeastSquares;
  else if (a.model == "boosted")
    opts.kind = ModelKind::Boosted;
  else
    throw std::invalid_argument("--model must be ls or boosted");
  if (a.leverage_rule == "average") opts.leverage_rule = AverageLeverage{};

  const ModelArtifact artifact = fit_artifact(train, space, opts);
  artifact.save(a.out);

  json summary{{"v", 1}, {"command", "fit"}, {"out", a.out}, {"model", a.model}, {"rows", train.rows()}};
  json train_r2 = json::object(), val_r2 = json::object();
  for (const auto& r : a.responses) {
    train_r2[r] = r_squared(*artifact.predictor, train, r);
    if (a.holdout > 0) val_r2[r] = r_squared(*artifact.predictor, validation, r);
  }
  summary["train_r2"] = train_r2;
  if (a.holdout > 0) summary["validation_r2"] = val_r2;
  summary["threshold"] = artifact.extrapolation->threshold();
  if (as_json) {
    std::cout << summary.dump() << '\n';
  } else {
    std::cout << "wrote " << a.out << " (" << train.rows() << " training rows, threshold "
              << artifact.extrapolation->threshold() << ")\n";
    for (const auto& r : a.responses) {
      std::cout << r << ": train R^2 " << train_r2[r].get<double>();
      if (a.holdout > 0) std::cout << ", validation R^2 " << val_r2[r].get<double>();
      std::cout << '\n';
    }
  }
  return 0;
}

struct OptimizeArgs {
  std::string model, mode = "constrain", goals, ga, out;
};

int run_optimize(const OptimizeArgs& a, bool as_json) {
  const auto artifact = ModelArtifact::load(a.model);
  auto goals = goals_from_json(read_json(a.goals));
  GAConfig config;
  if (!a.ga.empty()) config = ga_config_from_json(read_json(a.ga));
  Profiler profiler = init_state(artifact, std::move(goals), mode_from_string(a.mode));
  const auto report = profiler.optimize_desirability(config);
  json j = to_json(profiler.space(), report);
  j["mode"] = a.mode;
  j["predictions"] = artifact.predictor->predict(report.best);
  j["responses"] = artifact.predictor->responses();
  if (!a.out.empty()) write_text(a.out, j.dump(2) + "\n");
  if (as_json) {
    json line{{"v", 1}, {"command", "optimize"},  {"out", a.out},
              {"mode", a.mode}, {"desirability", report.objective}, {"feasible", report.feasible}};
    line["metric"] = report.metric ? json(*report.metric) : json(nullptr);
    line["threshold"] = report.threshold ? json(*report.threshold) : json(nullptr);
    std::cout << line.dump() << '\n';
  } else {
    std::cout << "desirability " << report.objective << ", metric " << report.metric.value_or(NAN) << " (threshold "
              << report.threshold.value_or(NAN) << "), " << (report.feasible ? "feasible" : "extrapolated") << '\n';
    if (a.out.empty()) std::cout << j.dump(2) << '\n';
  }
  return 0;
}

struct SimulateArgs {
  std::string scenario, out;
  std::optional<std::size_t> threads;
};

int run_simulate(const SimulateArgs& a, bool as_json) {
  SimulationScenario sc = scenario_from_json(read_json(a.scenario));
  if (a.threads) sc.threads = *a.threads;
  const auto result = run_study(sc);
  std::filesystem::create_directories(a.out);
  const std::filesystem::path dir(a.out);
  write_text(dir / "results.csv", result.records_csv());
  write_text(dir / "summary.json", result.summary_json().dump(2) + "\n");
  write_text(dir / "tpr.svg", result.tpr_svg());
  if (as_json) {
    json line{{"v", 1}, {"command", "simulate"}, {"out", a.out}, {"fpr", result.fpr.rate}};
    line["tpr_last"] = std::isnan(result.tpr.back().rate) ? json(nullptr) : json(result.tpr.back().rate);
    std::cout << line.dump() << '\n';
  } else {
    std::cout << "wrote " << (dir / "results.csv").string() << ", summary.json, tpr.svg; FPR " << result.fpr.rate
              << ", TPR at last rank " << result.tpr.back().rate << '\n';
  }
  return 0;
}

struct ServeArgs {
  std::string data_dir, host = "127.0.0.1";
  int port = 8080;
};

int run_serve(ServeArgs a) {
  if (a.data_dir.empty())
    if (const char* env = std::getenv("PROFILER_DATA_DIR")) a.data_dir = env;
  if (a.data_dir.empty()) throw std::invalid_argument("--data-dir or PROFILER_DATA_DIR is required");
  if (!std::filesystem::is_directory(a.data_dir))
    throw std::invalid_argument("data directory '" + a.data_dir + "' does not exist");

  // SIGINT/SIGTERM are handled by a dedicated thread so the server can be
  // stopped outside signal context.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  ProfilerService service({a.data_dir});
  httplib::Server server;
  // httplib's default adds SO_REUSEPORT, which would let a second server
  // share an occupied port silently.
  server.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  service.mount(server);
  int port = a.port;
  if (port == 0) {
    port = server.bind_to_any_port(a.host);
    if (port < 0) throw std::runtime_error("cannot bind to " + a.host);
  } else if (!server.bind_to_port(a.host, port)) {
    std::cerr << "error: cannot bind to " << a.host << ':' << port << " (port in use?)\n";
    return 1;
  }
  std::thread watcher([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    server.stop();
  });
  std::cout << "listening on " << a.host << ':' << port << std::endl;
  const bool ok = server.listen_after_bind();
  if (watcher.joinable()) {
    // listen returned without a signal (error path): wake the watcher.
    if (server.is_running() || !ok) pthread_kill(watcher.native_handle(), SIGTERM);
    watcher.join();
  }
  std::cout << "stopped" << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prediction profiler with extrapolation control"};
  app.require_subcommand(1);
  bool as_json = false;
  app.add_flag("--json", as_json, "Machine-readable JSON line on stdout");

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit a model artifact from a CSV file");
  fit_cmd->add_option("--data", fit.data, "Training CSV")->required()->check(CLI::ExistingFile);
  fit_cmd->add_option("--response", fit.responses, "Response column (repeatable)")->required();
  fit_cmd->add_option("--model", fit.model, "ls or boosted")->check(CLI::IsMember({"ls", "boosted"}));
  fit_cmd->add_option("--out", fit.out, "Artifact path")->required();
  fit_cmd->add_flag("--informative-missing", fit.informative_missing, "Add missing-value indicator factors");
  fit_cmd->add_option("--holdout", fit.holdout, "Rows held out for validation R^2");
  fit_cmd->add_option("--seed", fit.seed, "Seed for the holdout split and boosting");
  fit_cmd->add_option("--stages", fit.stages, "Boosting stages");
  fit_cmd->add_option("--schema", fit.schema, "Factor space JSON")->check(CLI::ExistingFile);
  fit_cmd->add_option("--exclude", fit.exclude, "Columns that are not factors");
  fit_cmd->add_option("--ordinal", fit.ordinal, "Text columns to treat as ordinal");
  fit_cmd->add_option("--leverage-rule", fit.leverage_rule, "max or average")
      ->check(CLI::IsMember({"max", "average"}));

  OptimizeArgs opt;
  auto* opt_cmd = app.add_subcommand("optimize", "Maximize desirability over a fitted model");
  opt_cmd->add_option("--model", opt.model, "Artifact path")->required()->check(CLI::ExistingFile);
  opt_cmd->add_option("--mode", opt.mode, "off, warn or constrain")
      ->check(CLI::IsMember({"off", "warn", "constrain"}));
  opt_cmd->add_option("--goals", opt.goals, "Goals JSON")->required()->check(CLI::ExistingFile);
  opt_cmd->add_option("--ga", opt.ga, "GA config JSON")->check(CLI::ExistingFile);
  opt_cmd->add_option("--out", opt.out, "Report path");

  SimulateArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "Run an extrapolation detection study");
  sim_cmd->add_option("--scenario", sim.scenario, "Scenario JSON")->required()->check(CLI::ExistingFile);
  sim_cmd->add_option("--out", sim.out, "Output directory")->required();
  sim_cmd->add_option("--threads", sim.threads, "Worker threads (0 = all cores)");

  ServeArgs serve;
  auto* serve_cmd = app.add_subcommand("serve", "Serve the profiler HTTP API");
  serve_cmd->add_option("--data-dir", serve.data_dir, "Directory of model artifacts");
  serve_cmd->add_option("--host", serve.host, "Bind address");
  serve_cmd->add_option("--port", serve.port, "Port (0 picks a free one)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*fit_cmd) return run_fit(fit, as_json);
    if (*opt_cmd) return run_optimize(opt, as_json);
    if (*sim_cmd) return run_simulate(sim, as_json);
    if (*serve_cmd) return run_serve(serve);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

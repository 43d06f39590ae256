#include <csignal>
#include <fstream>
#include <spawn.h>
#include <sstream>
#include <sys/wait.h>
#include <thread>
#include <unistd.h>

#include "doctest.h"
#include "exprof/artifact.hpp"
#include "httplib.h"
#include "json.hpp"
#include "temp_dir.hpp"

extern char** environ;

using nlohmann::json;

namespace {

struct Run {
  int code = -1;
  std::string out, err;
};

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

Run profiler(const std::string& args, const TempDir& dir) {
  const auto out = dir.path / "stdout.txt", err = dir.path / "stderr.txt";
  const std::string cmd = std::string(EXPROF_PROFILER_BIN) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

void write(const std::filesystem::path& p, const std::string& text) { std::ofstream(p) << text; }

const std::string kDiabetes = std::string(EXPROF_DATA_DIR) + "/diabetes.csv";

std::string fit_diabetes(const TempDir& dir) {
  const auto model = (dir.path / "diabetes.json").string();
  const auto r = profiler("--json fit --data " + kDiabetes + " --response Y --holdout 133 --seed 18 --out " + model, dir);
  REQUIRE(r.code == 0);
  return model;
}

}  // namespace

TEST_CASE("cli fit reports train and validation fit") {
  TempDir dir;
  const auto model = (dir.path / "m.json").string();
  const auto r = profiler("--json fit --data " + kDiabetes + " --response Y --holdout 133 --seed 18 --out " + model, dir);
  REQUIRE(r.code == 0);
  const auto line = json::parse(r.out);
  CHECK(line["command"] == "fit");
  CHECK(line["rows"] == 309);
  CHECK(line["train_r2"]["Y"].get<double>() > 0.4);
  CHECK(line["validation_r2"]["Y"].get<double>() > 0.3);
  const auto a = exprof::ModelArtifact::load(model);
  CHECK(a.space().size() == 10);
}

TEST_CASE("cli fit rejects a missing response") {
  TempDir dir;
  const auto r = profiler("fit --data " + kDiabetes + " --response NOPE --out " + (dir.path / "m.json").string(), dir);
  CHECK(r.code != 0);
  CHECK(r.err.find("NOPE") != std::string::npos);
  CHECK_FALSE(std::filesystem::exists(dir.path / "m.json"));
}

TEST_CASE("cli optimize: constrain stays inside the threshold, off does not") {
  TempDir dir;
  const auto model = fit_diabetes(dir);
  write(dir.path / "goals.json", R"([{"goal":"maximize","low":25,"high":346}])");
  write(dir.path / "ga.json", R"({"seed":2,"generations":120})");
  const std::string common = "--json optimize --model " + model + " --goals " + (dir.path / "goals.json").string() +
                             " --ga " + (dir.path / "ga.json").string();
  const auto off = profiler(common + " --mode off --out " + (dir.path / "off.json").string(), dir);
  REQUIRE(off.code == 0);
  const auto con = profiler(common + " --mode constrain --out " + (dir.path / "con.json").string(), dir);
  REQUIRE(con.code == 0);
  const auto lo = json::parse(off.out), lc = json::parse(con.out);
  CHECK(lc["feasible"] == true);
  CHECK(lc["metric"].get<double>() <= lc["threshold"].get<double>());
  CHECK(lo["metric"].get<double>() > lo["threshold"].get<double>());
  const auto report = json::parse(slurp(dir.path / "con.json"));
  CHECK(report["mode"] == "constrain");
  CHECK(report["responses"] == json{"Y"});
  CHECK(report["settings"].contains("BMI"));
}

TEST_CASE("cli simulate writes its outputs") {
  TempDir dir;
  write(dir.path / "sc.json", R"({"n":40,"p":6,"r":3,"replicates":4,"n_grid":6,"seed":3})");
  const auto out = dir.path / "sim";
  const auto r = profiler("--json simulate --scenario " + (dir.path / "sc.json").string() + " --out " + out.string(), dir);
  REQUIRE(r.code == 0);
  CHECK(std::filesystem::exists(out / "results.csv"));
  CHECK(std::filesystem::exists(out / "tpr.svg"));
  const auto summary = json::parse(slurp(out / "summary.json"));
  CHECK(summary["tpr"].size() == 6);
  CHECK(json::parse(r.out)["command"] == "simulate");

  write(dir.path / "bad.json", R"({"p":5,"r":9})");
  const auto bad = profiler("simulate --scenario " + (dir.path / "bad.json").string() + " --out " + out.string(), dir);
  CHECK(bad.code != 0);
  CHECK(bad.err.find("error:") != std::string::npos);
}

TEST_CASE("cli serve answers, refuses an occupied port and stops on SIGINT") {
  TempDir dir;
  fit_diabetes(dir);
  httplib::Server blocker;
  const int port = blocker.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);

  const auto busy = profiler("serve --data-dir " + dir.path.string() + " --port " + std::to_string(port), dir);
  CHECK(busy.code == 1);
  CHECK(busy.err.find("cannot bind") != std::string::npos);

  const std::string bin = EXPROF_PROFILER_BIN, data_dir = dir.path.string();
  const auto log = (dir.path / "serve.log").string();
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_addopen(&actions, 1, log.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  std::vector<std::string> args{bin, "serve", "--data-dir", data_dir, "--port", "0"};
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);
  pid_t pid = 0;
  REQUIRE(posix_spawn(&pid, bin.c_str(), &actions, nullptr, argv.data(), environ) == 0);
  posix_spawn_file_actions_destroy(&actions);

  // the chosen port is announced as "listening on host:port"
  int free_port = 0;
  for (int attempt = 0; attempt < 200 && free_port == 0; ++attempt) {
    std::this_thread::sleep_for(std::chrono::milliseconds(25));
    const auto text = slurp(log);
    if (const auto at = text.find("listening on 127.0.0.1:"); at != std::string::npos)
      free_port = std::stoi(text.substr(at + 23));
  }
  if (free_port == 0) kill(pid, SIGKILL);
  REQUIRE(free_port > 0);

  httplib::Client client("127.0.0.1", free_port);
  client.set_read_timeout(10, 0);
  auto res = client.Get("/api/models");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(json::parse(res->body)["models"][0]["id"] == "diabetes");

  kill(pid, SIGINT);
  int status = 0;
  waitpid(pid, &status, 0);
  CHECK(WIFEXITED(status));
  CHECK(WEXITSTATUS(status) == 0);
  CHECK(slurp(log).find("stopped") != std::string::npos);
}

#include <thread>

#include "doctest.h"
#include "exprof/service.hpp"
#include "fixtures.hpp"
#include "httplib.h"
#include "temp_dir.hpp"

using namespace exprof;
using nlohmann::json;

namespace {

struct ServiceFixture {
  TempDir dir;
  ModelArtifact artifact;
  ProfilerService service;

  ServiceFixture() : artifact(make()), service({dir.path}) { artifact.save(dir.path / "mixed.json"); }

  static ModelArtifact make() {
    const auto data = fixtures::mixed_dataset(80, 41);
    FitOptions opts;
    opts.responses = {"y", "y2"};
    return fit_artifact(data, fixtures::factors_of(data), opts);
  }

  std::string open(const std::string& mode = "warn") {
    const auto r = service.create_session(json{{"model_id", "mixed"}, {"mode", mode}}.dump());
    REQUIRE(r.status == 201);
    return r.body["session"];
  }
};

const json kGoals = json::array({{{"goal", "maximize"}, {"low", -2}, {"high", 4}},
                                 {{"goal", "maximize"}, {"low", -2}, {"high", 3}}});

}  // namespace

TEST_CASE_FIXTURE(ServiceFixture, "models are listed from the data directory") {
  std::ofstream(dir.path / "broken.json") << "{";
  const auto r = service.list_models();
  CHECK(r.status == 200);
  REQUIRE(r.body["models"].size() == 2);
  CHECK(r.body["models"][0]["id"] == "broken");
  CHECK(r.body["models"][0].contains("error"));
  CHECK(r.body["models"][1]["id"] == "mixed");
  CHECK(r.body["models"][1]["metric"] == "leverage");
}

TEST_CASE_FIXTURE(ServiceFixture, "session lifecycle") {
  const auto id = open();
  auto r = service.get_session(id);
  CHECK(r.status == 200);
  CHECK(r.body["state"]["mode"] == "warn");
  CHECK(r.body["traces"].size() == 5);

  r = service.set_factor(id, json{{"name", "g"}, {"value", "b"}}.dump());
  CHECK(r.status == 200);
  CHECK(r.body["stored"] == "b");
  CHECK(r.body["state"]["settings"]["g"] == "b");

  r = service.set_mode(id, R"({"mode":"constrain"})");
  CHECK(r.body["state"]["mode"] == "constrain");
  r = service.set_factor(id, json{{"name", "x1"}, {"value", std::get<Continuous>(artifact.space()[0].kind).high}}.dump());
  CHECK(r.status == 200);
  CHECK(r.body["status"]["extrapolated"] == false);

  r = service.set_goals(id, json{{"goals", kGoals}}.dump());
  CHECK(r.status == 200);
  r = service.optimize(id, R"({"ga":{"seed":4,"generations":40}})");
  CHECK(r.status == 200);
  CHECK(r.body["report"]["feasible"] == true);
  CHECK(service.session_count() == 1);
}

TEST_CASE_FIXTURE(ServiceFixture, "error codes") {
  CHECK(service.get_session("missing").status == 404);
  CHECK(service.create_session(R"({"model_id":"nope"})").status == 404);
  CHECK(service.create_session(R"({"model_id":"../etc/passwd"})").status == 404);
  CHECK(service.create_session("{not json").status == 400);
  CHECK(service.create_session("[]").status == 400);
  CHECK(service.create_session("{}").status == 400);
  CHECK(service.create_session(R"({"model_id":"mixed","mode":"loud"})").status == 400);
  const auto id = open();
  const double hi = std::get<Continuous>(artifact.space()[0].kind).high;
  const auto r = service.set_factor(id, json{{"name", "x1"}, {"value", hi + 10}}.dump());
  CHECK(r.status == 422);
  CHECK(r.body["v"] == 1);
  CHECK(r.body["error"].is_string());
  CHECK(service.set_factor(id, R"({"name":"g","value":"zzz"})").status == 422);
  CHECK(service.set_factor(id, R"({"name":"nope","value":1})").status == 400);
  CHECK(service.optimize(id, "{}").status == 400);  // no goals yet
  CHECK(service.optimize(id, R"({"ga":{"popsize":3}})").status == 400);
}

TEST_CASE_FIXTURE(ServiceFixture, "a second optimize on the same session is refused") {
  const auto id = open();
  REQUIRE(service.set_goals(id, json{{"goals", kGoals}}.dump()).status == 200);
  ApiResponse nested;
  bool entered = false;
  service.optimize_hook = [&] {
    if (entered) return;
    entered = true;
    nested = service.optimize(id, R"({"generations":5})");
  };
  const auto outer = service.optimize(id, R"({"generations":5})");
  service.optimize_hook = nullptr;
  CHECK(outer.status == 200);
  CHECK(nested.status == 409);
  CHECK(service.optimize(id, R"({"generations":5})").status == 200);  // flag released
}

TEST_CASE_FIXTURE(ServiceFixture, "idle sessions are evicted") {
  open();
  open();
  CHECK(service.session_count() == 2);
  CHECK(service.evict_idle(ProfilerService::Clock::now()) == 0);
  CHECK(service.evict_idle(ProfilerService::Clock::now() + std::chrono::hours(2)) == 2);
  CHECK(service.session_count() == 0);
}

TEST_CASE_FIXTURE(ServiceFixture, "inline models round-trip byte for byte") {
  const auto r = service.create_session(json{{"model", artifact.to_json()}}.dump());
  REQUIRE(r.status == 201);
  const auto via_file = service.create_session(R"({"model_id":"mixed"})");
  CHECK(r.body["state"].dump() == via_file.body["state"].dump());
  CHECK(ModelArtifact::from_json(json::parse(artifact.to_json().dump())).to_json().dump() ==
        artifact.to_json().dump());
}

TEST_CASE_FIXTURE(ServiceFixture, "routes over HTTP") {
  httplib::Server server;
  service.mount(server);
  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  httplib::Client client("127.0.0.1", port);

  auto res = client.Get("/api/models");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(json::parse(res->body)["models"][0]["id"] == "mixed");

  res = client.Post("/api/sessions", R"({"model_id":"mixed"})", "application/json");
  REQUIRE(res);
  CHECK(res->status == 201);
  const std::string id = json::parse(res->body)["session"];

  res = client.Post("/api/sessions/" + id + "/factor", R"({"name":"x2","value":0.1})", "application/json");
  CHECK(res->status == 200);
  CHECK(json::parse(res->body)["stored"] == 0.1);
  res = client.Post("/api/sessions/" + id + "/mode", R"({"mode":"off"})", "application/json");
  CHECK(json::parse(res->body)["state"]["warning"] == false);
  res = client.Get("/api/sessions/" + id);
  CHECK(res->status == 200);
  CHECK(res->get_header_value("Content-Type") == "application/json");
  CHECK(client.Get("/api/sessions/unknown")->status == 404);
  CHECK(client.Post("/api/sessions/" + id + "/goals", "{", "application/json")->status == 400);

  server.stop();
  t.join();
}

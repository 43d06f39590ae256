#include "exprof/service.hpp"

#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "httplib.h"

namespace exprof {

using nlohmann::json;

namespace {

struct NotFound : std::runtime_error {
  using std::runtime_error::runtime_error;
};

ApiResponse error(int status, const std::string& message) { return {status, json{{"v", 1}, {"error", message}}}; }

json parse_body(const std::string& body) {
  if (body.empty()) return json::object();
  json j = json::parse(body);
  if (!j.is_object()) throw std::invalid_argument("request body must be a JSON object");
  return j;
}

// Maps exceptions from the handlers onto status codes.
template <class F>
ApiResponse guarded(F&& f) {
  try {
    return f();
  } catch (const NotFound& e) {
    return error(404, e.what());
  } catch (const OutOfBoxError& e) {
    return error(422, e.what());
  } catch (const json::exception& e) {
    return error(400, std::string("malformed request: ") + e.what());
  } catch (const std::invalid_argument& e) {
    return error(400, e.what());
  } catch (const std::out_of_range& e) {
    return error(400, e.what());
  } catch (const std::exception& e) {
    return error(500, e.what());
  }
}

bool valid_model_id(const std::string& id) {
  if (id.empty()) return false;
  for (char c : id)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) return false;
  return id.front() != '.';
}

}  // namespace

ProfilerService::ProfilerService(ServiceOptions options) : options_(std::move(options)) {}

std::string ProfilerService::new_id() {
  static thread_local std::mt19937_64 rng{std::random_device{}()};
  std::ostringstream out;
  out << std::hex << rng() << rng();
  return out.str();
}

std::shared_ptr<const ModelArtifact> ProfilerService::model(const std::string& id) const {
  if (!valid_model_id(id)) throw NotFound("unknown model '" + id + "'");
  std::lock_guard lock(model_mutex_);
  if (auto it = models_.find(id); it != models_.end()) return it->second;
  const auto path = options_.data_dir / (id + ".json");
  if (!std::filesystem::is_regular_file(path)) throw NotFound("unknown model '" + id + "'");
  auto artifact = std::make_shared<const ModelArtifact>(ModelArtifact::load(path));
  models_[id] = artifact;
  return artifact;
}

std::shared_ptr<ProfilerService::Session> ProfilerService::find(const std::string& id) {
  std::lock_guard lock(store_mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw NotFound("unknown session '" + id + "'");
  it->second->touched = Clock::now();
  return it->second;
}

std::size_t ProfilerService::evict_idle(Clock::time_point now) {
  std::lock_guard lock(store_mutex_);
  std::size_t dropped = 0;
  for (auto it = sessions_.begin(); it != sessions_.end();) {
    if (now - it->second->touched > options_.idle_timeout && !it->second->optimizing) {
      it = sessions_.erase(it);
      ++dropped;
    } else {
      ++it;
    }
  }
  return dropped;
}

std::size_t ProfilerService::session_count() const {
  std::lock_guard lock(store_mutex_);
  return sessions_.size();
}

ApiResponse ProfilerService::list_models() const {
  return guarded([&] {
    json models = json::array();
    std::vector<std::filesystem::path> files;
    if (std::filesystem::is_directory(options_.data_dir))
      for (const auto& e : std::filesystem::directory_iterator(options_.data_dir))
        if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      json entry{{"id", f.stem().string()}};
      try {
        const auto a = model(f.stem().string());
        entry["responses"] = a->predictor->responses();
        entry["factors"] = a->space().size();
        entry["metric"] = a->extrapolation->kind() == MetricKind::Leverage ? "leverage" : "regularized_t2";
      } catch (const std::exception& e) {
        entry["error"] = e.what();
      }
      models.push_back(entry);
    }
    return ApiResponse{200, json{{"v", 1}, {"models", models}}};
  });
}

ApiResponse ProfilerService::create_session(const std::string& body) {
  evict_idle();
  return guarded([&] {
    const json req = parse_body(body);
    std::shared_ptr<const ModelArtifact> artifact;
    if (req.contains("model_id"))
      artifact = model(req.at("model_id").get<std::string>());
    else if (req.contains("model"))
      artifact = std::make_shared<const ModelArtifact>(ModelArtifact::from_json(req.at("model")));
    else
      throw std::invalid_argument("request needs 'model_id' or an inline 'model'");
    const Mode mode = mode_from_string(req.value("mode", std::string("warn")));
    std::vector<Goal> goals;
    if (req.contains("goals")) goals = goals_from_json(req.at("goals"));
    const std::size_t resolution = req.value("resolution", std::size_t{101});

    auto session = std::make_shared<Session>("", init_state(*artifact, std::move(goals), mode, resolution));
    session->created = session->touched = Clock::now();
    {
      std::lock_guard lock(store_mutex_);
      do session->id = new_id();
      while (sessions_.count(session->id));
      sessions_[session->id] = session;
    }
    std::lock_guard lock(session->mutex);
    return ApiResponse{201, json{{"v", 1},
                                 {"session", session->id},
                                 {"state", session->profiler.state_json()},
                                 {"traces", session->profiler.traces_json()}}};
  });
}

ApiResponse ProfilerService::get_session(const std::string& id) {
  return guarded([&] {
    auto s = find(id);
    std::lock_guard lock(s->mutex);
    return ApiResponse{200, json{{"v", 1},
                                 {"session", s->id},
                                 {"state", s->profiler.state_json()},
                                 {"traces", s->profiler.traces_json()}}};
  });
}

ApiResponse ProfilerService::set_factor(const std::string& id, const std::string& body) {
  return guarded([&] {
    auto s = find(id);
    const json req = parse_body(body);
    const auto name = req.at("name").get<std::string>();
    const json value = req.at("value");
    std::lock_guard lock(s->mutex);
    const auto r = s->profiler.set_factor(name, value);
    const auto& def = s->profiler.space()[s->profiler.space().index_of(name)];
    json out{{"v", 1},
             {"session", s->id},
             {"state", s->profiler.state_json()},
             {"status", to_json(r.status)},
             {"traces", s->profiler.traces_json()},
             {"clamped", r.clamped}};
    out["stored"] = def.is_continuous() ? json(r.stored) : json(def.levels()[static_cast<std::size_t>(r.stored)]);
    out["diagnostic"] = r.diagnostic ? json(*r.diagnostic) : json(nullptr);
    return ApiResponse{200, out};
  });
}

ApiResponse ProfilerService::set_mode(const std::string& id, const std::string& body) {
  return guarded([&] {
    auto s = find(id);
    const json req = parse_body(body);
    const Mode mode = mode_from_string(req.at("mode").get<std::string>());
    std::lock_guard lock(s->mutex);
    s->profiler.set_mode(mode);
    return ApiResponse{200, json{{"v", 1},
                                 {"session", s->id},
                                 {"state", s->profiler.state_json()},
                                 {"traces", s->profiler.traces_json()}}};
  });
}

ApiResponse ProfilerService::set_goals(const std::string& id, const std::string& body) {
  return guarded([&] {
    auto s = find(id);
    const json req = parse_body(body);
    auto goals = goals_from_json(req.at("goals"));
    std::lock_guard lock(s->mutex);
    s->profiler.set_goals(std::move(goals));
    return ApiResponse{200, json{{"v", 1},
                                 {"session", s->id},
                                 {"state", s->profiler.state_json()},
                                 {"traces", s->profiler.traces_json()}}};
  });
}

ApiResponse ProfilerService::optimize(const std::string& id, const std::string& body) {
  return guarded([&]() -> ApiResponse {
    auto s = find(id);
    const json req = parse_body(body);
    const GAConfig config = ga_config_from_json(req.contains("ga") ? req.at("ga") : req);
    if (s->optimizing.exchange(true)) return error(409, "an optimization is already running for this session");
    struct Release {
      std::atomic<bool>& flag;
      ~Release() { flag = false; }
    } release{s->optimizing};
    if (optimize_hook) optimize_hook();
    std::lock_guard lock(s->mutex);
    const auto report = s->profiler.optimize_desirability(config);
    return ApiResponse{200, json{{"v", 1},
                                 {"session", s->id},
                                 {"report", to_json(s->profiler.space(), report)},
                                 {"state", s->profiler.state_json()},
                                 {"traces", s->profiler.traces_json()}}};
  });
}

void ProfilerService::mount(httplib::Server& server) {
  auto reply = [](httplib::Response& res, const ApiResponse& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  server.Get("/api/models", [this, reply](const httplib::Request&, httplib::Response& res) { reply(res, list_models()); });
  server.Post("/api/sessions", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, create_session(req.body));
  });
  server.Get(R"(/api/sessions/([^/]+))", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, get_session(req.matches[1]));
  });
  server.Post(R"(/api/sessions/([^/]+)/factor)", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, set_factor(req.matches[1], req.body));
  });
  server.Post(R"(/api/sessions/([^/]+)/mode)", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, set_mode(req.matches[1], req.body));
  });
  server.Post(R"(/api/sessions/([^/]+)/goals)", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, set_goals(req.matches[1], req.body));
  });
  server.Post(R"(/api/sessions/([^/]+)/optimize)", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, optimize(req.matches[1], req.body));
  });
}

}  // namespace exprof

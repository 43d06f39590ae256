#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include "exprof/artifact.hpp"
#include "exprof/profiler.hpp"
#include "json.hpp"

namespace httplib {
class Server;
}

namespace exprof {

struct ServiceOptions {
  /// Model artifacts live here as <id>.json.
  std::filesystem::path data_dir;
  std::chrono::seconds idle_timeout{3600};
};

struct ApiResponse {
  int status = 200;
  nlohmann::json body;
};

/// Session store plus the JSON handlers behind the HTTP routes. Handlers take
/// the raw request body so they can be exercised without a socket.
class ProfilerService {
 public:
  using Clock = std::chrono::steady_clock;

  explicit ProfilerService(ServiceOptions options);

  ApiResponse list_models() const;
  ApiResponse create_session(const std::string& body);
  ApiResponse get_session(const std::string& id);
  ApiResponse set_factor(const std::string& id, const std::string& body);
  ApiResponse set_mode(const std::string& id, const std::string& body);
  ApiResponse set_goals(const std::string& id, const std::string& body);
  ApiResponse optimize(const std::string& id, const std::string& body);

  /// Drops sessions untouched for longer than the idle timeout.
  std::size_t evict_idle(Clock::time_point now = Clock::now());
  std::size_t session_count() const;

  /// Registers every route on `server`.
  void mount(httplib::Server& server);

  /// Called inside optimize while the in-flight flag is held (tests).
  std::function<void()> optimize_hook;

 private:
  struct Session {
    Session(std::string id_, Profiler profiler_) : id(std::move(id_)), profiler(std::move(profiler_)) {}
    std::string id;
    Profiler profiler;
    std::mutex mutex;
    std::atomic<bool> optimizing{false};
    Clock::time_point created;
    Clock::time_point touched;
  };

  std::shared_ptr<Session> find(const std::string& id);
  std::shared_ptr<const ModelArtifact> model(const std::string& id) const;
  std::string new_id();

  ServiceOptions options_;
  mutable std::mutex store_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  mutable std::mutex model_mutex_;
  mutable std::map<std::string, std::shared_ptr<const ModelArtifact>> models_;
};

}  // namespace exprof

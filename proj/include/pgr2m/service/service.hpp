#pragma once

#include <chrono>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>

#include "json.hpp"
#include "pgr2m/editing/edit.hpp"
#include "pgr2m/pipeline/bundle.hpp"

namespace httplib {
class Server;
}

namespace pgr2m::service {

struct Response {
  int status = 200;
  nlohmann::json body;
};

// JSON API over a frozen bundle. handle() is the transport-independent core;
// serve() binds it to HTTP.
class Service {
 public:
  using Clock = std::chrono::steady_clock;

  explicit Service(std::shared_ptr<const Bundle> bundle, std::chrono::seconds session_ttl = std::chrono::minutes(30));
  ~Service();

  Response handle(const std::string& method, const std::string& path, const std::string& body);

  // Blocks until stop(). Port 0 binds an ephemeral port; see port().
  void serve(const std::string& host, int port);
  // Binds without serving; returns the bound port or throws IoError.
  int bind(const std::string& host, int port);
  void listen_after_bind();
  void stop();
  int port() const noexcept { return port_; }
  void wait_until_ready() const;

  std::size_t session_count();

 private:
  struct Session {
    motion::Motion motion;
    pose::PoseCodeSequence pose;  // current, after every applied script
    std::vector<edit::EditScript> history;
    Clock::time_point touched;
    std::mutex lock;
  };

  Response info() const;
  Response tokenize(const nlohmann::json& req) const;
  Response decode(const nlohmann::json& req) const;
  Response generate(const nlohmann::json& req) const;
  Response open_session(const nlohmann::json& req);
  Response edit(const nlohmann::json& req);
  Response undo(const nlohmann::json& req);
  std::shared_ptr<Session> find_session(const nlohmann::json& req);
  void evict_expired();

  std::shared_ptr<const Bundle> bundle_;
  std::chrono::seconds ttl_;
  std::mutex sessions_mutex_;
  std::unordered_map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t next_session_ = 1;
  std::unique_ptr<httplib::Server> server_;
  int port_ = 0;
};

}  // namespace pgr2m::service

#pragma once

#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "config.hpp"
#include "copaint/errors.hpp"
#include "copaint/session.hpp"

namespace httplib {
class Server;
}

namespace copaint::service {

inline constexpr const char* kVersion = "0.1.0";

class NotFound : public Error {
 public:
  using Error::Error;
};

/// Fixed-size worker pool. shutdown() lets running tasks finish and hands the
/// queued ones back to the caller.
class WorkerPool {
 public:
  explicit WorkerPool(int threads);
  ~WorkerPool();
  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  void submit(std::function<void()> task);
  std::vector<std::function<void()>> shutdown();

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::function<void()>> queue_;
  std::vector<std::thread> threads_;
  bool stopping_ = false;
};

enum class JobStatus { queued, running, succeeded, failed };

struct JobInfo {
  std::string id;
  std::string kind;  // robot_turn | dataset | metrics_gap
  std::string session_id;
  JobStatus status = JobStatus::queued;
  std::string error;
  std::string error_kind;
  nlohmann::json result;
};

nlohmann::json to_json(const JobInfo& job);

struct NewSessionRequest {
  std::optional<int> width;
  std::optional<int> height;
  std::optional<Media> media;
  std::optional<int> stroke_budget;
};

struct DatasetJobRequest {
  std::string corpus;  // relative to the data directory
  std::string out;
  std::string strategies = "all";
  std::uint64_t seed = 0;
  double threshold = 0.5;
  std::optional<int> width;
  std::optional<int> height;
};

/// Sessions, jobs and persistence behind the HTTP API. Mutations of one
/// session are serialized; different sessions proceed in parallel. Every
/// committed mutation is written to DATA/sessions/ID before it becomes
/// visible.
class Engine {
 public:
  /// Creates the data directory, checks it is writable and reloads persisted
  /// sessions (unloadable ones are logged and skipped).
  explicit Engine(EngineConfig cfg);
  ~Engine();
  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  const EngineConfig& config() const { return cfg_; }

  SessionState create_session(const NewSessionRequest& req);
  SessionState get_session(const std::string& id) const;
  std::vector<std::string> session_ids() const;
  SessionState add_human_strokes(const std::string& id, const std::vector<StrokeParams>& strokes);

  /// Queues a robot turn. `target` is "file:NAME" (NAME inside DATA/targets),
  /// an http:// URL, or empty for the configured default.
  std::string start_robot_turn(const std::string& id, const std::string& target,
                               const std::optional<std::string>& prompt);
  /// Same, with an uploaded PNG as the target.
  std::string start_robot_turn_upload(const std::string& id, const std::string& png,
                                      const std::optional<std::string>& prompt);
  std::string start_dataset_job(const DatasetJobRequest& req);
  /// `pairs` and `out` are relative to the data directory; `out` may be empty.
  std::string start_gap_job(const std::string& pairs, const std::string& out);

  JobInfo job(const std::string& id) const;

  /// Finishes running jobs and fails queued ones. Idempotent.
  void shutdown();

  std::filesystem::path session_dir(const std::string& id) const;
  /// Resolves a client-supplied relative path; throws ConstraintViolation if
  /// it escapes `root`.
  static std::filesystem::path resolve_inside(const std::filesystem::path& root, const std::string& rel);

 private:
  struct Entry {
    std::mutex mutate;
    mutable std::mutex state_mu;
    SessionState state;
  };

  std::shared_ptr<Entry> find(const std::string& id) const;
  SessionState commit(Entry& e, SessionState next);
  std::string enqueue(JobInfo info, std::function<nlohmann::json()> work);
  void update_job(const std::string& id, const std::function<void(JobInfo&)>& f);
  std::string queue_robot_turn(const std::string& id, TargetProviderConfig provider,
                               const std::optional<std::string>& prompt, std::string job_id,
                               std::filesystem::path upload = {});

  EngineConfig cfg_;
  mutable std::mutex sessions_mu_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  mutable std::mutex jobs_mu_;
  std::map<std::string, JobInfo> jobs_;
  WorkerPool pool_;
  bool shut_down_ = false;
};

/// HTTP front end for an Engine.
class HttpService {
 public:
  explicit HttpService(Engine& engine);
  ~HttpService();

  /// Binds host:port (port 0 picks a free one) and returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves until stop().
  void listen();
  void stop();

 private:
  void routes();

  Engine& engine_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace copaint::service

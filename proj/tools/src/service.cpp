#include "service.hpp"

#include <fstream>
#include <random>

#include <spdlog/spdlog.h>

#include "httplib.h"

#include "commands.hpp"
#include "copaint/dataset.hpp"
#include "copaint/io.hpp"

namespace copaint::service {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string random_hex(int chars) {
  static thread_local std::mt19937_64 gen{std::random_device{}()};
  static constexpr char kHex[] = "0123456789abcdef";
  std::string s;
  for (int i = 0; i < chars; ++i) s.push_back(kHex[gen() & 0xf]);
  return s;
}

std::string_view to_string(JobStatus s) {
  switch (s) {
    case JobStatus::queued: return "queued";
    case JobStatus::running: return "running";
    case JobStatus::succeeded: return "succeeded";
    case JobStatus::failed: return "failed";
  }
  return "?";
}

bool safe_id(const std::string& id) {
  return !id.empty() && id.size() <= 64 &&
         std::all_of(id.begin(), id.end(), [](unsigned char c) { return std::isalnum(c) || c == '-' || c == '_'; });
}

/// (HTTP status, kind) for an exception thrown by the engine.
std::pair<int, std::string> classify(const std::exception& e) {
  if (dynamic_cast<const NotFound*>(&e)) return {404, "not_found"};
  if (dynamic_cast<const ConstraintViolation*>(&e)) return {422, "constraint"};
  if (dynamic_cast<const FormatError*>(&e)) return {400, "format"};
  if (dynamic_cast<const DimensionMismatch*>(&e)) return {400, "dimension"};
  if (dynamic_cast<const ProviderError*>(&e)) return {502, "provider"};
  if (dynamic_cast<const IoError*>(&e)) return {500, "io"};
  return {500, "internal"};
}

json error_body(const std::exception& e) {
  json j{{"error", e.what()}, {"kind", classify(e).second}};
  if (const auto* cv = dynamic_cast<const ConstraintViolation*>(&e)) {
    j["fields"] = cv->fields();
    if (cv->stroke_index() >= 0) j["stroke_index"] = cv->stroke_index();
  }
  return j;
}

json parse_body(const std::string& body) {
  if (body.find_first_not_of(" \t\r\n") == std::string::npos) return json::object();
  try {
    json j = json::parse(body);
    if (!j.is_object()) throw FormatError("request body must be a JSON object");
    return j;
  } catch (const json::exception& e) {
    throw FormatError(std::string("request body: ") + e.what());
  }
}

template <typename T>
std::optional<T> opt_field(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  try {
    return j[key].get<T>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("field '") + key + "': " + e.what());
  }
}

void send_json(httplib::Response& res, const json& j, int status = 200) {
  res.status = status;
  res.set_content(j.dump(), "application/json");
}

}  // namespace

// ---------------------------------------------------------------------------

WorkerPool::WorkerPool(int threads) {
  for (int i = 0; i < threads; ++i)
    threads_.emplace_back([this] {
      for (;;) {
        std::function<void()> task;
        {
          std::unique_lock lk(mu_);
          cv_.wait(lk, [this] { return stopping_ || !queue_.empty(); });
          if (stopping_) return;
          task = std::move(queue_.front());
          queue_.pop_front();
        }
        task();
      }
    });
}

WorkerPool::~WorkerPool() { shutdown(); }

void WorkerPool::submit(std::function<void()> task) {
  {
    std::lock_guard lk(mu_);
    if (stopping_) throw Error("worker pool is shut down");
    queue_.push_back(std::move(task));
  }
  cv_.notify_one();
}

std::vector<std::function<void()>> WorkerPool::shutdown() {
  std::vector<std::function<void()>> dropped;
  {
    std::lock_guard lk(mu_);
    stopping_ = true;
    dropped.assign(std::make_move_iterator(queue_.begin()), std::make_move_iterator(queue_.end()));
    queue_.clear();
  }
  cv_.notify_all();
  for (auto& t : threads_)
    if (t.joinable()) t.join();
  return dropped;
}

json to_json(const JobInfo& job) {
  json j{{"id", job.id}, {"kind", job.kind}, {"status", std::string(to_string(job.status))}};
  j["session_id"] = job.session_id.empty() ? json(nullptr) : json(job.session_id);
  if (job.status == JobStatus::failed) {
    j["error"] = job.error;
    j["error_kind"] = job.error_kind;
  }
  if (job.status == JobStatus::succeeded) j["result"] = job.result;
  return j;
}

// ---------------------------------------------------------------------------

Engine::Engine(EngineConfig cfg) : cfg_(std::move(cfg)), pool_(cfg_.job_workers) {
  validate(cfg_);
  std::error_code ec;
  for (const char* sub : {"sessions", "targets", "uploads"}) {
    fs::create_directories(cfg_.data_dir / sub, ec);
    if (ec) throw IoError("cannot create " + (cfg_.data_dir / sub).string() + ": " + ec.message());
  }
  const fs::path probe = cfg_.data_dir / ".write-probe";
  write_file_atomic(probe, "ok");
  fs::remove(probe, ec);

  for (const auto& d : fs::directory_iterator(cfg_.data_dir / "sessions")) {
    if (!d.is_directory() || !safe_id(d.path().filename().string()) || !fs::exists(d.path() / "session.json"))
      continue;
    try {
      auto e = std::make_shared<Entry>();
      e->state = load_session(d.path());
      if (e->state.id != d.path().filename().string()) throw FormatError("session id does not match its directory");
      sessions_[e->state.id] = e;
    } catch (const std::exception& ex) {
      spdlog::warn("skipping session {}: {}", d.path().string(), ex.what());
    }
  }
  spdlog::info("data dir {}: {} sessions loaded", cfg_.data_dir.string(), sessions_.size());
}

Engine::~Engine() { shutdown(); }

void Engine::shutdown() {
  {
    std::lock_guard lk(jobs_mu_);
    if (shut_down_) return;
    shut_down_ = true;
  }
  pool_.shutdown();
  std::lock_guard lk(jobs_mu_);
  for (auto& [id, job] : jobs_)
    if (job.status == JobStatus::queued) {
      job.status = JobStatus::failed;
      job.error = "cancelled: service shutting down";
      job.error_kind = "cancelled";
    }
}

fs::path Engine::session_dir(const std::string& id) const { return cfg_.data_dir / "sessions" / id; }

fs::path Engine::resolve_inside(const fs::path& root, const std::string& rel) {
  const fs::path r(rel);
  if (rel.empty() || r.is_absolute()) throw ConstraintViolation("path must be relative to the data directory", {"path"});
  const fs::path base = fs::weakly_canonical(root);
  const fs::path full = fs::weakly_canonical(base / r);
  const fs::path inside = full.lexically_relative(base);
  if (inside.empty() || *inside.begin() == "..") throw ConstraintViolation("path escapes the data directory", {"path"});
  return full;
}

std::shared_ptr<Engine::Entry> Engine::find(const std::string& id) const {
  std::lock_guard lk(sessions_mu_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw NotFound("no session '" + id + "'");
  return it->second;
}

SessionState Engine::commit(Entry& e, SessionState next) {
  export_session(next, session_dir(next.id));
  std::lock_guard lk(e.state_mu);
  e.state = std::move(next);
  return e.state;
}

SessionState Engine::create_session(const NewSessionRequest& req) {
  PaintingSetting setting = req.media ? PaintingSetting::for_media(*req.media) : cfg_.setting;
  setting.stroke_budget = req.stroke_budget.value_or(cfg_.setting.stroke_budget);
  auto e = std::make_shared<Entry>();
  SessionState s = new_session(setting, req.width.value_or(cfg_.width), req.height.value_or(cfg_.height));
  commit(*e, s);
  std::lock_guard lk(sessions_mu_);
  sessions_[s.id] = e;
  return s;
}

SessionState Engine::get_session(const std::string& id) const {
  const auto e = find(id);
  std::lock_guard lk(e->state_mu);
  return e->state;
}

std::vector<std::string> Engine::session_ids() const {
  std::lock_guard lk(sessions_mu_);
  std::vector<std::string> ids;
  for (const auto& [id, e] : sessions_) ids.push_back(id);
  return ids;
}

SessionState Engine::add_human_strokes(const std::string& id, const std::vector<StrokeParams>& strokes) {
  const auto e = find(id);
  std::lock_guard lk(e->mutate);
  SessionState cur = get_session(id);
  return commit(*e, apply_human_strokes(cur, strokes));
}

std::string Engine::enqueue(JobInfo info, std::function<json()> work) {
  const std::string id = info.id;
  {
    std::lock_guard lk(jobs_mu_);
    if (shut_down_) throw Error("service is shutting down");
    jobs_[id] = std::move(info);
  }
  pool_.submit([this, id, work = std::move(work)] {
    update_job(id, [](JobInfo& j) { j.status = JobStatus::running; });
    try {
      json result = work();
      update_job(id, [&](JobInfo& j) {
        j.status = JobStatus::succeeded;
        j.result = std::move(result);
      });
      spdlog::info("job {} succeeded", id);
    } catch (const std::exception& ex) {
      const std::string kind = classify(ex).second;
      update_job(id, [&](JobInfo& j) {
        j.status = JobStatus::failed;
        j.error = ex.what();
        j.error_kind = kind;
      });
      spdlog::warn("job {} failed ({}): {}", id, kind, ex.what());
    }
  });
  return id;
}

void Engine::update_job(const std::string& id, const std::function<void(JobInfo&)>& f) {
  std::lock_guard lk(jobs_mu_);
  f(jobs_.at(id));
}

JobInfo Engine::job(const std::string& id) const {
  std::lock_guard lk(jobs_mu_);
  const auto it = jobs_.find(id);
  if (it == jobs_.end()) throw NotFound("no job '" + id + "'");
  return it->second;
}

std::string Engine::queue_robot_turn(const std::string& id, TargetProviderConfig provider,
                                     const std::optional<std::string>& prompt, std::string job_id,
                                     fs::path upload) {
  find(id);
  JobInfo info{job_id, "robot_turn", id, JobStatus::queued, "", "", nullptr};
  return enqueue(std::move(info), [this, id, provider, prompt, upload] {
    struct Cleanup {
      fs::path p;
      ~Cleanup() {
        std::error_code ec;
        if (!p.empty()) fs::remove(p, ec);
      }
    } cleanup{upload};
    const auto e = find(id);
    std::lock_guard lk(e->mutate);
    const SessionState cur = get_session(id);
    const RobotTurnResult r = robot_turn(cur, provider, prompt, {cfg_.planner, cfg_.loss, cfg_.embedding});
    const SessionState s = commit(*e, r.session);
    const std::size_t n = s.turns.size() - 1;
    json metrics = json::object();
    for (const auto& [k, v] : s.turns[n].metrics) metrics[k] = v;
    return json{{"turn", n},
                {"stroke_count", r.plan.strokes.size()},
                {"metrics", metrics},
                {"plan", "/sessions/" + id + "/turns/" + std::to_string(n) + "/plan.json"}};
  });
}

std::string Engine::start_robot_turn(const std::string& id, const std::string& target,
                                     const std::optional<std::string>& prompt) {
  const std::string spec = target.empty() ? cfg_.target_provider : target;
  if (spec.empty()) throw FormatError("no target given and no target_provider configured");
  TargetProviderConfig provider = parse_target_provider(spec, cfg_.target_timeout_s);
  if (provider.kind == TargetProviderConfig::Kind::file && !target.empty())
    provider.path = resolve_inside(cfg_.data_dir / "targets", provider.path.string());
  return queue_robot_turn(id, std::move(provider), prompt, random_hex(16));
}

std::string Engine::start_robot_turn_upload(const std::string& id, const std::string& png,
                                            const std::optional<std::string>& prompt) {
  find(id);
  decode_png(png);
  const std::string job_id = random_hex(16);
  const fs::path path = cfg_.data_dir / "uploads" / (job_id + ".png");
  write_file_atomic(path, png);
  return queue_robot_turn(id, TargetProviderConfig::file(path), prompt, job_id, path);
}

std::string Engine::start_dataset_job(const DatasetJobRequest& req) {
  PipelineConfig pc;
  pc.setting = cfg_.setting;
  pc.planner = cfg_.planner;
  pc.loss = cfg_.loss;
  pc.strategies = parse_strategy_list(req.strategies);
  pc.embedding = cfg_.embedding;
  pc.regions = http_region_providers(cfg_.saliency_url, cfg_.segmentation_url, cfg_.target_timeout_s);
  pc.filter_threshold = req.threshold;
  pc.width = req.width.value_or(cfg_.width);
  pc.height = req.height.value_or(cfg_.height);
  pc.seed = req.seed;
  pc.workers = cfg_.planner.workers;
  if (pc.width <= 0 || pc.height <= 0) throw ConstraintViolation("dataset size must be positive", {"width", "height"});
  const fs::path corpus = resolve_inside(cfg_.data_dir, req.corpus);
  const fs::path out = resolve_inside(cfg_.data_dir, req.out);
  JobInfo info{random_hex(16), "dataset", "", JobStatus::queued, "", "", nullptr};
  return enqueue(std::move(info), [corpus, out, pc] {
    const DatasetSummary s = generate_dataset(corpus, out, pc);
    return json{{"pairs", s.pairs}, {"kept", s.kept}, {"undecided", s.undecided}, {"log", s.log}};
  });
}

std::string Engine::start_gap_job(const std::string& pairs, const std::string& out) {
  const fs::path in = resolve_inside(cfg_.data_dir, pairs);
  const std::optional<fs::path> out_path =
      out.empty() ? std::nullopt : std::optional<fs::path>(resolve_inside(cfg_.data_dir, out));
  JobInfo info{random_hex(16), "metrics_gap", "", JobStatus::queued, "", "", nullptr};
  return enqueue(std::move(info), [this, in, out_path] {
    const GapInput input = read_gap_pairs(in);
    const std::string doc = gap_report_to_json(gap_report(input.pairs, cfg_.embedding, input.text_scores));
    if (out_path) write_file_atomic(*out_path, doc);
    return json::parse(doc);
  });
}

// ---------------------------------------------------------------------------

HttpService::HttpService(Engine& engine) : engine_(engine), server_(std::make_unique<httplib::Server>()) { routes(); }

HttpService::~HttpService() { stop(); }

int HttpService::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = server_->bind_to_any_port(host);
    if (bound < 0) throw IoError("cannot bind " + host);
    return bound;
  }
  if (!server_->bind_to_port(host, port)) throw IoError("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void HttpService::listen() { server_->listen_after_bind(); }

void HttpService::stop() {
  if (server_) server_->stop();
}

void HttpService::routes() {
  auto& srv = *server_;
  srv.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      send_json(res, error_body(e), classify(e).first);
    } catch (...) {
      send_json(res, {{"error", "unknown error"}, {"kind", "internal"}}, 500);
    }
  });
  srv.set_logger([](const httplib::Request& req, const httplib::Response& res) {
    spdlog::debug("{} {} -> {}", req.method, req.path, res.status);
  });
  srv.Options(".*", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });

  srv.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
    send_json(res, {{"status", "ok"}, {"version", kVersion}});
  });

  srv.Get("/sessions", [this](const httplib::Request&, httplib::Response& res) {
    send_json(res, {{"sessions", engine_.session_ids()}});
  });

  srv.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
    const json body = parse_body(req.body);
    NewSessionRequest r;
    r.width = opt_field<int>(body, "width");
    r.height = opt_field<int>(body, "height");
    if (const auto m = opt_field<std::string>(body, "media")) r.media = parse_media(*m);
    r.stroke_budget = opt_field<int>(body, "stroke_budget");
    const SessionState s = engine_.create_session(r);
    res.status = 201;
    res.set_content(session_to_json(s), "application/json");
  });

  srv.Get(R"(/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    res.set_content(session_to_json(engine_.get_session(req.matches[1])), "application/json");
  });

  srv.Get(R"(/sessions/([^/]+)/canvas\.png)", [this](const httplib::Request& req, httplib::Response& res) {
    res.set_content(encode_png(engine_.get_session(req.matches[1]).canvas().pixels()), "image/png");
  });

  srv.Get(R"(/sessions/([^/]+)/metrics)", [this](const httplib::Request& req, httplib::Response& res) {
    res.set_content(session_metrics_json(engine_.get_session(req.matches[1])), "application/json");
  });

  const auto turn_of = [this](const httplib::Request& req) {
    const SessionState s = engine_.get_session(req.matches[1]);
    const std::string n = req.matches[2];
    const std::size_t idx = n.size() > 9 ? s.turns.size() : std::stoul(n);
    if (idx >= s.turns.size()) throw NotFound("session " + s.id + " has no turn " + n);
    return s.turns[idx];
  };

  srv.Get(R"(/sessions/([^/]+)/turns/(\d+)/plan\.json)", [turn_of](const httplib::Request& req, httplib::Response& res) {
    res.set_content(plan_to_json(turn_of(req).plan), "application/json");
  });

  srv.Get(R"(/sessions/([^/]+)/turns/(\d+)/canvas\.png)", [turn_of](const httplib::Request& req, httplib::Response& res) {
    res.set_content(encode_png(turn_of(req).after->pixels()), "image/png");
  });

  srv.Post(R"(/sessions/([^/]+)/strokes)", [this](const httplib::Request& req, httplib::Response& res) {
    const SessionState s = engine_.add_human_strokes(req.matches[1], strokes_from_json(req.body));
    res.set_content(session_to_json(s), "application/json");
  });

  srv.Post(R"(/sessions/([^/]+)/robot-turn)", [this](const httplib::Request& req, httplib::Response& res) {
    std::string job;
    if (req.is_multipart_form_data()) {
      if (!req.has_file("target")) throw FormatError("multipart robot-turn needs a 'target' PNG part");
      const std::optional<std::string> prompt =
          req.has_file("prompt") ? std::optional(req.get_file_value("prompt").content) : std::nullopt;
      job = engine_.start_robot_turn_upload(req.matches[1], req.get_file_value("target").content, prompt);
    } else {
      const json body = parse_body(req.body);
      job = engine_.start_robot_turn(req.matches[1], opt_field<std::string>(body, "target").value_or(""),
                                     opt_field<std::string>(body, "prompt"));
    }
    send_json(res, {{"job_id", job}}, 202);
  });

  srv.Get(R"(/jobs/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    send_json(res, to_json(engine_.job(req.matches[1])));
  });

  srv.Post("/datasets", [this](const httplib::Request& req, httplib::Response& res) {
    const json body = parse_body(req.body);
    DatasetJobRequest r;
    r.corpus = opt_field<std::string>(body, "corpus").value_or("");
    r.out = opt_field<std::string>(body, "out").value_or("");
    r.strategies = opt_field<std::string>(body, "strategies").value_or("all");
    r.seed = opt_field<std::uint64_t>(body, "seed").value_or(0);
    r.threshold = opt_field<double>(body, "threshold").value_or(kDefaultFilterThreshold);
    r.width = opt_field<int>(body, "width");
    r.height = opt_field<int>(body, "height");
    send_json(res, {{"job_id", engine_.start_dataset_job(r)}}, 202);
  });

  srv.Post("/metrics/gap", [this](const httplib::Request& req, httplib::Response& res) {
    const json body = parse_body(req.body);
    send_json(res,
              {{"job_id", engine_.start_gap_job(opt_field<std::string>(body, "pairs").value_or(""),
                                                opt_field<std::string>(body, "out").value_or(""))}},
              202);
  });
}

}  // namespace copaint::service

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <set>
#include <thread>

#include "config.hpp"
#include "copaint/dataset.hpp"
#include "copaint/io.hpp"
#include "copaint/render.hpp"
#include "doctest.h"
#include "httplib.h"
#include "json.hpp"
#include "mock_server.hpp"
#include "service.hpp"
#include "test_support.hpp"

using namespace copaint;
using namespace copaint::service;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p);
  out << s;
}

struct ScopedEnv {
  std::string name;
  ScopedEnv(std::string n, const std::string& v) : name(std::move(n)) { ::setenv(name.c_str(), v.c_str(), 1); }
  ~ScopedEnv() { ::unsetenv(name.c_str()); }
};

EngineConfig quick_config(const fs::path& data) {
  EngineConfig c;
  c.width = c.height = 48;
  c.setting.stroke_budget = 8;
  c.planner.candidates_per_stroke = 16;
  c.planner.refine_iters = 4;
  c.data_dir = data;
  c.job_workers = 2;
  return c;
}

/// Engine plus HTTP front end on an ephemeral port.
struct Running {
  Engine engine;
  HttpService http;
  int port;
  std::thread thread;
  httplib::Client client;

  explicit Running(const EngineConfig& cfg)
      : engine(cfg), http(engine), port(http.bind("127.0.0.1", 0)), thread([this] { http.listen(); }),
        client("127.0.0.1", port) {
    client.set_read_timeout(30, 0);
    for (int i = 0; i < 100 && !client.Get("/healthz"); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  ~Running() {
    http.stop();
    thread.join();
    engine.shutdown();
  }

  json get_json(const std::string& path) {
    auto res = client.Get(path);
    REQUIRE(res);
    return json::parse(res->body);
  }

  json post_json(const std::string& path, const json& body, int expect) {
    auto res = client.Post(path, body.dump(), "application/json");
    REQUIRE(res);
    CHECK(res->status == expect);
    return json::parse(res->body);
  }

  json wait_job(const std::string& id) {
    for (int i = 0; i < 3000; ++i) {
      json j = get_json("/jobs/" + id);
      if (j["status"] == "succeeded" || j["status"] == "failed") return j;
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
    FAIL("job did not finish");
    return {};
  }
};

json stroke_json(const StrokeParams& s) {
  return {{"p0", {s.p0.x, s.p0.y}}, {"p1", {s.p1.x, s.p1.y}}, {"p2", {s.p2.x, s.p2.y}},
          {"width", s.width},       {"color_index", s.color_index}, {"opacity", s.opacity}};
}

json strokes_body(std::uint64_t seed, int n, const PaintingSetting& setting) {
  Rng rng(seed);
  json arr = json::array();
  for (int i = 0; i < n; ++i) arr.push_back(stroke_json(testing::random_stroke(rng, setting)));
  return {{"strokes", arr}};
}

Image marker_target(std::uint64_t seed, int size) {
  return render_plan(testing::random_plan(seed, 10, PaintingSetting::marker()), Canvas(size, size), Author::robot)
      .pixels();
}

}  // namespace

TEST_CASE("engine config") {
  testing::TempDir dir;
  SUBCASE("defaults") {
    const EngineConfig c = load_engine_config(std::nullopt);
    CHECK(c.width == 256);
    CHECK(c.port == 8080);
    CHECK(c.setting == PaintingSetting::marker());
  }
  SUBCASE("file with environment overrides") {
    write_text(dir.path / "engine.conf",
               "# comment\ncanvas_width = 128\nmedia = acrylic4\nstroke_budget = 20\nport = 9001\n"
               "target_provider = http://localhost:7000/generate\nembedding_provider = builtin\n");
    ScopedEnv port("COPAINT_PORT", "9100");
    ScopedEnv seed("COPAINT_PLANNER_SEED", "17");
    const EngineConfig c = load_engine_config(dir.path / "engine.conf");
    CHECK(c.width == 128);
    CHECK(c.height == 256);
    CHECK(c.setting.media == Media::acrylic_4_fixed);
    CHECK(c.setting.stroke_budget == 20);
    CHECK(c.port == 9100);
    CHECK(c.planner.seed == 17);
    CHECK(c.target_provider == "http://localhost:7000/generate");
  }
  SUBCASE("bad documents") {
    write_text(dir.path / "a.conf", "colour = red\n");
    CHECK_THROWS_AS(load_engine_config(dir.path / "a.conf"), FormatError);
    write_text(dir.path / "b.conf", "port = many\n");
    CHECK_THROWS_AS(load_engine_config(dir.path / "b.conf"), FormatError);
    write_text(dir.path / "c.conf", "saliency_url = localhost:80\n");
    CHECK_THROWS_AS(load_engine_config(dir.path / "c.conf"), FormatError);
    write_text(dir.path / "d.conf", "embedding_provider = clip\n");
    CHECK_THROWS_AS(load_engine_config(dir.path / "d.conf"), FormatError);
    write_text(dir.path / "e.conf", "job_workers = 0\n");
    CHECK_THROWS_AS(load_engine_config(dir.path / "e.conf"), ConstraintViolation);
    CHECK_THROWS_AS(load_engine_config(dir.path / "missing.conf"), IoError);
    ScopedEnv typo("COPAINT_PROT", "1");
    CHECK_THROWS_AS(load_engine_config(std::nullopt), FormatError);
  }
}

TEST_CASE("engine startup checks the data directory") {
  testing::TempDir dir;
  write_text(dir.path / "file", "x");
  CHECK_THROWS_AS(Engine(quick_config(dir.path / "file")), IoError);
  CHECK(Engine::resolve_inside(dir.path, "a/b.png") == fs::weakly_canonical(dir.path / "a/b.png"));
  CHECK_THROWS_AS(Engine::resolve_inside(dir.path, "../x.png"), ConstraintViolation);
  CHECK_THROWS_AS(Engine::resolve_inside(dir.path, "/etc/passwd"), ConstraintViolation);
  CHECK_THROWS_AS(Engine::resolve_inside(dir.path, "a/../../x"), ConstraintViolation);
}

TEST_CASE("http api: session loop") {
  testing::TempDir dir;
  Running svc(quick_config(dir.path));
  write_png(dir.path / "targets" / "t.png", marker_target(3, 48));

  const json health = svc.get_json("/healthz");
  CHECK(health["status"] == "ok");
  CHECK(health["version"] == kVersion);

  const json created = svc.post_json("/sessions", json::object(), 201);
  const std::string id = created["id"];
  CHECK(created["turn_count"] == 0);
  CHECK(svc.get_json("/sessions/" + id) == created);
  CHECK(svc.get_json("/sessions")["sessions"] == json::array({id}));

  auto blank = svc.client.Get("/sessions/" + id + "/canvas.png");
  REQUIRE(blank);
  CHECK(blank->get_header_value("Content-Type") == "image/png");
  CHECK(decode_png(blank->body) == Image(48, 48));

  const json after_human = svc.post_json("/sessions/" + id + "/strokes", strokes_body(1, 2, PaintingSetting::marker()), 200);
  CHECK(after_human["turn_count"] == 1);

  json bad = strokes_body(2, 2, PaintingSetting::marker());
  bad["strokes"][1]["width"] = 5.0;
  const json rejected = svc.post_json("/sessions/" + id + "/strokes", bad, 422);
  CHECK(rejected["stroke_index"] == 1);
  CHECK(rejected["fields"] == json::array({"width"}));
  CHECK(svc.get_json("/sessions/" + id)["turn_count"] == 1);
  svc.post_json("/sessions/" + id + "/strokes", json{{"strokes", "nope"}}, 400);

  const json job = svc.post_json("/sessions/" + id + "/robot-turn", {{"target", "file:t.png"}, {"prompt", "a bird"}}, 202);
  const json done = svc.wait_job(job["job_id"]);
  REQUIRE(done["status"] == "succeeded");
  CHECK(done["session_id"] == id);
  CHECK(done["result"]["turn"] == 1);
  CHECK(done["result"]["metrics"]["preservation"] == 1.0);

  auto canvas = svc.client.Get("/sessions/" + id + "/canvas.png");
  REQUIRE(canvas);
  CHECK(decode_png(canvas->body) != Image(48, 48));
  CHECK(canvas->body != blank->body);

  auto plan = svc.client.Get(done["result"]["plan"].get<std::string>());
  REQUIRE(plan);
  REQUIRE(plan->status == 200);
  const StrokePlan p = plan_from_json(plan->body);
  CHECK(p.strokes.size() == done["result"]["stroke_count"]);
  CHECK(p.strokes.size() <= 8);

  const json metrics = svc.get_json("/sessions/" + id + "/metrics");
  CHECK(metrics["turns"].size() == 2);
  CHECK(metrics["turns"][1]["metrics"]["delta_pix"].is_number());
  CHECK(svc.get_json("/sessions/" + id)["turns"][1]["prompt"] == "a bird");

  // Reads do not change anything.
  const json before_reads = svc.get_json("/sessions/" + id);
  svc.client.Get("/sessions/" + id + "/canvas.png");
  svc.client.Get("/sessions/" + id + "/metrics");
  CHECK(svc.get_json("/sessions/" + id) == before_reads);

  CHECK(svc.client.Get("/sessions/nope")->status == 404);
  CHECK(svc.client.Get("/sessions/" + id + "/turns/7/plan.json")->status == 404);
  CHECK(svc.client.Get("/jobs/nope")->status == 404);
  svc.post_json("/sessions/" + id + "/robot-turn", {{"target", "file:../../etc/passwd"}}, 422);
  svc.post_json("/sessions/" + id + "/robot-turn", json::object(), 400);
  svc.post_json("/sessions/nope/robot-turn", {{"target", "file:t.png"}}, 404);
}

TEST_CASE("http api: uploaded targets and failing providers") {
  testing::TempDir dir;
  Running svc(quick_config(dir.path));
  const std::string id = svc.post_json("/sessions", {{"width", 40}, {"height", 30}, {"stroke_budget", 4}}, 201)["id"];

  httplib::MultipartFormDataItems items{{"prompt", "upload", "", ""},
                                        {"target", encode_png(marker_target(5, 40)), "t.png", "image/png"}};
  auto res = svc.client.Post("/sessions/" + id + "/robot-turn", items);
  REQUIRE(res);
  REQUIRE(res->status == 202);
  const json done = svc.wait_job(json::parse(res->body)["job_id"]);
  CHECK(done["status"] == "succeeded");
  CHECK(fs::is_empty(dir.path / "uploads"));

  httplib::MultipartFormDataItems junk{{"target", "not a png", "t.png", "image/png"}};
  CHECK(svc.client.Post("/sessions/" + id + "/robot-turn", junk)->status == 400);

  const std::string dead = "http://127.0.0.1:" + std::to_string(testing::closed_port()) + "/gen";
  const json job = svc.post_json("/sessions/" + id + "/robot-turn", {{"target", dead}}, 202);
  const json failed = svc.wait_job(job["job_id"]);
  CHECK(failed["status"] == "failed");
  CHECK(failed["error_kind"] == "provider");
  CHECK(failed["error"].get<std::string>().find(dead) != std::string::npos);
  CHECK(svc.get_json("/sessions/" + id)["turn_count"] == 1);
}

TEST_CASE("http api: concurrent mutations of one session serialize") {
  testing::TempDir dir;
  Running svc(quick_config(dir.path));
  const std::string id = svc.post_json("/sessions", json::object(), 201)["id"];
  write_png(dir.path / "targets" / "t.png", marker_target(6, 48));

  constexpr int kClients = 8;
  std::vector<std::thread> threads;
  std::vector<std::string> jobs(2);
  for (int k = 0; k < kClients; ++k)
    threads.emplace_back([&, k] {
      httplib::Client c("127.0.0.1", svc.port);
      c.set_read_timeout(60, 0);
      auto r = c.Post("/sessions/" + id + "/strokes", strokes_body(100 + k, 1, PaintingSetting::marker()).dump(),
                      "application/json");
      CHECK((r && r->status == 200));
    });
  for (int k = 0; k < 2; ++k)
    threads.emplace_back([&, k] {
      httplib::Client c("127.0.0.1", svc.port);
      auto r = c.Post("/sessions/" + id + "/robot-turn", json{{"target", "file:t.png"}}.dump(), "application/json");
      REQUIRE(r);
      jobs[k] = json::parse(r->body)["job_id"];
    });
  for (auto& t : threads) t.join();
  for (const auto& j : jobs) CHECK(svc.wait_job(j)["status"] == "succeeded");

  const SessionState s = svc.engine.get_session(id);
  CHECK(s.turns.size() == kClients + 2);
  std::set<std::string> seen;
  for (const auto& t : s.turns)
    if (t.author == Author::human) seen.insert(json(stroke_json(t.plan.strokes.at(0))).dump());
  CHECK(seen.size() == kClients);
  CHECK(replay(s) == s.canvas());
  for (std::size_t i = 0; i + 1 < s.turns.size(); ++i) CHECK(s.turns[i].after == s.turns[i + 1].before);
}

TEST_CASE("sessions survive a restart") {
  testing::TempDir dir;
  std::string id;
  json state;
  {
    Running svc(quick_config(dir.path));
    id = svc.post_json("/sessions", json::object(), 201)["id"];
    write_png(dir.path / "targets" / "t.png", marker_target(7, 48));
    svc.post_json("/sessions/" + id + "/strokes", strokes_body(8, 2, PaintingSetting::marker()), 200);
    REQUIRE(svc.wait_job(svc.post_json("/sessions/" + id + "/robot-turn", {{"target", "file:t.png"}}, 202)["job_id"])["status"] ==
            "succeeded");
    state = svc.get_json("/sessions/" + id);
  }
  // A half-written session directory (no session.json) is ignored.
  fs::create_directories(dir.path / "sessions" / "deadbeef" / "turns");
  Running again(quick_config(dir.path));
  CHECK(again.get_json("/sessions/" + id) == state);
  CHECK(again.get_json("/sessions")["sessions"].size() == 1);
  CHECK(again.engine.get_session(id).canvas() == replay(again.engine.get_session(id)));
}

TEST_CASE("http api: dataset and metrics jobs") {
  testing::TempDir dir;
  Running svc(quick_config(dir.path));
  fs::create_directories(dir.path / "corpus");
  std::ofstream captions(dir.path / "corpus" / "captions.jsonl");
  for (int i = 0; i < 2; ++i) {
    write_png(dir.path / "corpus" / ("c" + std::to_string(i) + ".png"), marker_target(20 + i, 48));
    captions << json{{"id", "c" + std::to_string(i)}, {"file", "c" + std::to_string(i) + ".png"}, {"caption", "lines"}}.dump()
             << "\n";
  }
  captions.close();
  const json job = svc.post_json("/datasets", {{"corpus", "corpus"}, {"out", "ds"}, {"strategies", "all,random:0.5"}, {"threshold", 0.0}}, 202);
  const json done = svc.wait_job(job["job_id"]);
  REQUIRE(done["status"] == "succeeded");
  CHECK(done["result"]["pairs"] == 4);
  CHECK(done["result"]["kept"] == 4);
  CHECK(read_manifest(dir.path / "ds" / "manifest.jsonl").size() == 4);
  svc.post_json("/datasets", {{"corpus", "../corpus"}, {"out", "ds"}}, 422);
  svc.post_json("/datasets", {{"corpus", "corpus"}, {"out", "ds"}, {"strategies", "most"}}, 400);

  write_text(dir.path / "pairs.jsonl", R"({"id": "x", "a": "corpus/c0.png", "b": "corpus/c1.png"})"
                                       "\n"
                                       R"({"id": "y", "a": "corpus/c1.png", "b": "corpus/c1.png"})"
                                       "\n");
  const json gap = svc.wait_job(svc.post_json("/metrics/gap", {{"pairs", "pairs.jsonl"}, {"out", "gap.json"}}, 202)["job_id"]);
  REQUIRE(gap["status"] == "succeeded");
  CHECK(gap["result"]["rows"].size() == 2);
  CHECK(gap["result"]["rows"][1]["delta_pix"] == 0.0);
  CHECK(json::parse(read_file(dir.path / "gap.json")) == gap["result"]);
}

// Acceptance suite: one PASS/FAIL line per headline criterion.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include "copaint/dataset.hpp"
#include "copaint/io.hpp"
#include "copaint/loss.hpp"
#include "copaint/metrics.hpp"
#include "copaint/planner.hpp"
#include "copaint/render.hpp"
#include "copaint/session.hpp"
#include "json.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

#ifndef COPAINT_CLI_PATH
#error "COPAINT_CLI_PATH must point at the copaint executable"
#endif

using namespace copaint;
namespace fs = std::filesystem;

namespace {

/// Thrown by a criterion body to fail with a message.
struct Failed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void expect(bool ok, const std::string& what) {
  if (!ok) throw Failed(what);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string reconstruction() {
  const PaintingSetting s = PaintingSetting::marker();  // budget 35
  double worst = 0.0, slowest = 0.0;
  for (int t = 0; t < 10; ++t) {
    const StrokePlan truth = testing::random_plan(1000 + t, 20, s);
    const Canvas blank(256, 256);
    const Image target = render_plan(truth, blank, Author::robot).pixels();
    // A qualifying plan exists: the 20-stroke ground truth fits the budget exactly.
    expect(delta_pix(render_plan(truth, blank, Author::robot).pixels(), target) == 0.0, "ground truth does not reproduce");
    PlannerConfig pc;
    pc.seed = static_cast<std::uint64_t>(t);
    pc.workers = 1;
    const auto t0 = std::chrono::steady_clock::now();
    const PlanReport r = plan_strokes_report(target, blank, s, pc, LossConfig{});
    const double secs = seconds_since(t0);
    const double d = delta_pix(r.canvas.pixels(), target);
    expect(r.plan.strokes.size() <= 35, "plan over budget");
    expect(d <= 0.02, "target " + std::to_string(t) + ": delta_pix " + fmt(d) + " > 0.02");
    expect(secs <= 60.0, "target " + std::to_string(t) + " took " + fmt(secs) + " s");
    worst = std::max(worst, d);
    slowest = std::max(slowest, secs);
  }
  return "max delta_pix " + fmt(worst) + ", slowest " + fmt(slowest) + " s";
}

std::string budget_monotonicity() {
  Rng rng(77);
  int checks = 0;
  for (int t = 0; t < 10; ++t) {
    const PaintingSetting base = t % 2 ? PaintingSetting::acrylic4() : PaintingSetting::marker();
    const Image target = t % 2 ? testing::random_blocks(rng, 96, 96)
                               : render_plan(testing::random_plan(500 + t, 25, base), Canvas(96, 96), Author::robot).pixels();
    double previous = INFINITY;
    for (int budget : {5, 10, 20, 35}) {
      PaintingSetting s = base;
      s.stroke_budget = budget;
      PlannerConfig pc;
      pc.seed = 40 + t;
      const PlanReport r = plan_strokes_report(target, Canvas(96, 96), s, pc, LossConfig{});
      expect(r.final_loss <= previous, "target " + std::to_string(t) + ": loss rose at budget " + std::to_string(budget));
      previous = r.final_loss;
      ++checks;
    }
  }
  return std::to_string(checks) + " (target, budget) plans, loss never increased";
}

std::string marker_darkening() {
  const PaintingSetting s = PaintingSetting::marker();
  std::size_t strokes = 0;
  Rng base_rng(5);
  for (int k = 0; k < 100; ++k) {
    Rng rng(9000 + k);
    StrokePlan plan = testing::random_plan(9000 + k, 10 + k % 30, s);
    // Half the plans start from a random canvas so darkening is tested off white too.
    Canvas c = k % 2 ? Canvas(testing::random_image(base_rng, 64, 64)) : Canvas(64, 64);
    for (const auto& st : plan.strokes) {
      const Canvas next = render_stroke(c, st, s, Author::robot);
      for (std::size_t i = 0; i < c.pixels().pixels().size(); ++i) {
        const Rgb& a = c.pixels().pixels()[i];
        const Rgb& b = next.pixels().pixels()[i];
        expect(b.r <= a.r && b.g <= a.g && b.b <= a.b, "plan " + std::to_string(k) + " lightened a pixel");
      }
      c = next;
      ++strokes;
    }
  }
  return "100 plans, " + std::to_string(strokes) + " strokes, no channel increased";
}

std::string removal_laws() {
  const Image src(64, 64);
  int cases = 0;
  for (int n : {1, 2, 5, 7, 10, 20, 35, 40})
    for (double f : {0.0, 0.1, 0.25, 0.3, 0.5, 0.75, 0.9, 1.0}) {
      const StrokePlan plan = testing::random_plan(n * 100 + static_cast<int>(f * 10), n, PaintingSetting::marker());
      const StrokePlan part = make_partial(plan, RemovalStrategy::random(f), src, 3);
      const auto expected_removed = static_cast<std::size_t>(std::floor(f * n + 0.5));
      expect(plan.strokes.size() - part.strokes.size() == expected_removed,
             "random " + fmt(f) + " on " + std::to_string(n) + " removed the wrong count");
      std::size_t j = 0;
      for (const auto& st : plan.strokes)
        if (j < part.strokes.size() && part.strokes[j] == st) ++j;
      expect(j == part.strokes.size(), "partial is not an ordered subset");
      expect(make_partial(plan, RemovalStrategy::all(), src, 3).strokes.empty(), "remove_all left strokes");
      ++cases;
    }

  RegionProviders left;
  left.saliency = [](const Image& img) {
    ScalarField f(img.width(), img.height());
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width() / 2; ++x) f.at(x, y) = 1.0;
    return f;
  };
  std::size_t removed = 0;
  for (int k = 0; k < 20; ++k) {
    const StrokePlan plan = testing::random_plan(700 + k, 30, PaintingSetting::marker());
    const StrokePlan part = make_partial(plan, RemovalStrategy::salient(), src, 0, left);
    std::size_t j = 0;
    for (const auto& st : plan.strokes) {
      if (j < part.strokes.size() && part.strokes[j] == st) {
        ++j;
        continue;
      }
      expect(st.midpoint().x < 0.5, "remove_salient dropped a right-half stroke");
      ++removed;
    }
    expect(j == part.strokes.size(), "salient partial is not an ordered subset");
  }
  expect(removed > 0, "remove_salient removed nothing");
  return std::to_string(cases) + " random/all cases; salient removed " + std::to_string(removed) + " strokes, all left of center";
}

std::string filter_behavior() {
  Rng rng(31);
  const Image detailed = testing::random_image(rng, 64, 64);
  const FilterDecision same = filter_pair(Canvas(detailed), {"s", detailed, ""}, {}, 0.5);
  expect(same.kept, "identical pair discarded");
  const FilterDecision blank = filter_pair(Canvas(64, 64), {"b", detailed, ""}, {}, 0.5);
  expect(!blank.kept, "blank vs detailed kept (score " + fmt(blank.score) + ")");

  std::vector<std::pair<Canvas, SourceItem>> pairs;
  for (int i = 0; i < 20; ++i) {
    const Image a = testing::random_blocks(rng, 48, 48);
    const Image b = i % 4 == 0 ? a : testing::random_blocks(rng, 48, 48);
    pairs.push_back({Canvas(a), {std::to_string(i), b, ""}});
  }
  int previous = static_cast<int>(pairs.size()) + 1;
  std::string counts;
  for (int step = 0; step <= 22; ++step) {
    const double t = step * 0.05;
    int kept = 0;
    for (const auto& [c, s] : pairs) kept += filter_pair(c, s, {}, t).kept;
    expect(kept <= previous, "kept count rose at threshold " + fmt(t));
    previous = kept;
    if (step % 5 == 0) counts += (counts.empty() ? "" : ",") + std::to_string(kept);
  }
  return "blank score " + fmt(blank.score) + "; kept at t=0,.25,.5,.75,1: " + counts;
}

std::string metric_identities() {
  Rng rng(41);
  double worst_sym = 0.0;
  for (int k = 0; k < 50; ++k) {
    const int w = 16 + static_cast<int>(rng.below(48)), h = 16 + static_cast<int>(rng.below(48));
    const Image a = k % 2 ? testing::random_image(rng, w, h) : testing::random_blocks(rng, w, h);
    const Image b = k % 3 ? testing::random_image(rng, w, h) : testing::random_blocks(rng, w, h);
    expect(delta_pix(a, a) == 0.0 && delta_sem(a, a) == 0.0, "nonzero self distance");
    const double p1 = delta_pix(a, b), p2 = delta_pix(b, a), s1 = delta_sem(a, b), s2 = delta_sem(b, a);
    expect(p1 >= 0.0 && p1 <= 1.0, "delta_pix out of [0,1]");
    expect(s1 >= 0.0 && s1 <= 2.0, "delta_sem out of [0,2]");
    worst_sym = std::max({worst_sym, std::abs(p1 - p2), std::abs(s1 - s2)});
  }
  expect(worst_sym <= 1e-12, "asymmetry " + fmt(worst_sym));
  return "50 pairs, max asymmetry " + fmt(worst_sym);
}

std::string pearson_oracle_match() {
  Rng rng(51);
  double worst_r = 0.0, worst_p = 0.0, worst_scale = 0.0;
  for (int k = 0; k < 20; ++k) {
    const int n = 5 + static_cast<int>(rng.below(46));
    std::vector<double> xs(n), ys(n);
    const double slope = rng.uniform(-2.0, 2.0);
    for (int i = 0; i < n; ++i) {
      xs[i] = rng.uniform(-5.0, 5.0);
      ys[i] = slope * xs[i] + rng.uniform(-3.0, 3.0);
    }
    const Correlation c = pearson(xs, ys);
    const auto o = testing::pearson_oracle(xs, ys);
    worst_r = std::max(worst_r, std::abs(c.r - o.r));
    worst_p = std::max(worst_p, std::abs(c.p - o.p));

    const double a = rng.uniform(0.5, 3.0), b = rng.uniform(-10.0, 10.0);
    std::vector<double> scaled(n);
    for (int i = 0; i < n; ++i) scaled[i] = a * xs[i] + b;
    const Correlation cs = pearson(scaled, ys);
    worst_scale = std::max({worst_scale, std::abs(cs.r - c.r), std::abs(cs.p - c.p)});
  }
  expect(worst_r <= 1e-9 && worst_p <= 1e-9, "oracle mismatch r " + fmt(worst_r) + " p " + fmt(worst_p));
  expect(worst_scale <= 1e-12, "affine change moved r/p by " + fmt(worst_scale));
  return "max |dr| " + fmt(worst_r) + ", |dp| " + fmt(worst_p) + ", affine " + fmt(worst_scale);
}

std::string multi_turn_preservation() {
  const fs::path dir = fs::temp_directory_path() / ("copaint_accept_session_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const PaintingSetting s = PaintingSetting::marker();
  SessionState st = new_session(s, 128, 128);
  Rng rng(61);
  std::string scores;
  for (int round = 0; round < 2; ++round) {
    std::vector<StrokeParams> batch;
    for (int i = 0; i < 4; ++i) batch.push_back(testing::random_stroke(rng, s));
    st = apply_human_strokes(st, batch);
    const fs::path target = dir / ("target" + std::to_string(round) + ".png");
    write_png(target, render_plan(testing::random_plan(610 + round, 20, s), Canvas(128, 128), Author::robot).pixels());
    RobotTurnOptions opts;
    opts.planner.seed = 6;
    st = robot_turn(st, TargetProviderConfig::file(target), std::nullopt, opts).session;
    const double p = st.turns.back().metrics.at("preservation");
    expect(p == 1.0, "robot turn " + std::to_string(round) + " preservation " + fmt(p));
    scores += (scores.empty() ? "" : ", ") + fmt(p);
  }
  expect(replay(st) == st.canvas(), "replay differs from the session canvas");
  fs::remove_all(dir);
  return "turns H,R,H,R; robot preservation " + scores;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(COPAINT_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  return std::system(cmd.c_str());
}

std::string slurp(const fs::path& p) { return read_file(p); }

std::string determinism() {
  const fs::path dir = fs::temp_directory_path() / ("copaint_accept_cli_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir / "corpus");
  const PaintingSetting s = PaintingSetting::marker();
  write_png(dir / "t.png", render_plan(testing::random_plan(71, 20, s), Canvas(128, 128), Author::robot).pixels());
  std::ofstream captions(dir / "corpus" / "captions.jsonl");
  for (int i = 0; i < 4; ++i) {
    const std::string id = "img" + std::to_string(i);
    write_png(dir / "corpus" / (id + ".png"),
              render_plan(testing::random_plan(80 + i, 15, s), Canvas(64, 64), Author::robot).pixels());
    captions << nlohmann::json{{"id", id}, {"file", id + ".png"}, {"caption", "sketch " + id}}.dump() << "\n";
  }
  captions.close();

  const std::string t = (dir / "t.png").string();
  for (const auto& [out, workers] : std::vector<std::pair<std::string, int>>{{"p1", 1}, {"p2", 1}, {"p4", 4}})
    expect(run_cli("plan --target " + t + " --setting marker --budget 35 --seed 7 --workers " + std::to_string(workers) +
                   " --out " + (dir / (out + ".json")).string()) == 0,
           "plan failed");
  expect(slurp(dir / "p1.json") == slurp(dir / "p2.json"), "plan differs between runs");
  expect(slurp(dir / "p1.json") == slurp(dir / "p4.json"), "plan differs between worker counts");

  const std::string common = " --corpus " + (dir / "corpus").string() +
                             " --strategies all,random:0.3,salient,semantic --seed 11 --width 64 --height 64"
                             " --budget 12 --candidates 24 --refine-iters 6 --threshold 0.3";
  for (const auto& [out, workers] : std::vector<std::pair<std::string, int>>{{"d1", 1}, {"d2", 1}, {"d4", 4}})
    expect(run_cli("dataset generate" + common + " --workers " + std::to_string(workers) + " --out " +
                   (dir / out).string()) == 0,
           "dataset generate failed");
  std::size_t files = 0;
  for (const auto& entry : fs::recursive_directory_iterator(dir / "d1")) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), dir / "d1");
    for (const char* other : {"d2", "d4"})
      expect(fs::exists(dir / other / rel) && slurp(entry.path()) == slurp(dir / other / rel),
             "dataset file " + rel.string() + " differs in " + other);
    ++files;
  }
  for (const char* other : {"d2", "d4"}) {
    std::size_t n = 0;
    for (const auto& e : fs::recursive_directory_iterator(dir / other)) n += e.is_regular_file();
    expect(n == files, std::string("extra files in ") + other);
  }
  fs::remove_all(dir);
  return "plan.json identical x3; dataset " + std::to_string(files) + " files identical across runs and workers {1,4}";
}

std::string dataset_round_trip() {
  const fs::path dir = fs::temp_directory_path() / ("copaint_accept_ds_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  std::vector<SourceItem> sources;
  Rng rng(91);
  for (int i = 0; i < 10; ++i) {
    const Image img = i % 2 ? testing::random_blocks(rng, 48, 48)
                            : render_plan(testing::random_plan(900 + i, 12, PaintingSetting::marker()), Canvas(48, 48),
                                          Author::robot)
                                  .pixels();
    sources.push_back({"source-" + std::to_string(i), img, i == 3 ? "" : "caption \"" + std::to_string(i) + "\", \xc3\xa9"});
  }
  PipelineConfig cfg;
  cfg.setting.stroke_budget = 10;
  cfg.planner.candidates_per_stroke = 16;
  cfg.planner.refine_iters = 4;
  cfg.strategies = parse_strategy_list("all,random:0.3,salient,semantic");
  cfg.width = cfg.height = 48;
  cfg.seed = 13;
  const PipelineResult r = run_pipeline(sources, cfg);
  expect(r.pairs.size() == 40, "expected 40 pairs, got " + std::to_string(r.pairs.size()));
  const auto written = export_dataset(r.pairs, dir);
  const auto reread = read_manifest(dir / "manifest.jsonl");
  expect(reread == written, "re-parsed manifest differs from what was written");

  std::size_t kept = 0, k = 0;
  for (const auto& p : r.pairs) {
    if (!p.filter.kept) continue;
    ++kept;
    const ManifestEntry& e = reread.at(k++);
    expect(e.source_id == p.source_id && e.caption == p.caption && e.strategy == to_tag(p.strategy) &&
               e.score == p.filter.score && e.kept,
           "metadata mismatch for " + e.id);
    expect(read_file(dir / e.partial_path) == encode_png(p.partial_image), "partial image mismatch for " + e.id);
    expect(read_file(dir / e.full_path) == encode_png(p.full_image), "full image mismatch for " + e.id);
  }
  std::ifstream in(dir / "manifest.jsonl");
  std::size_t lines = 0;
  for (std::string line; std::getline(in, line);) ++lines;
  expect(lines == kept && reread.size() == kept, "manifest has " + std::to_string(lines) + " lines, kept " + std::to_string(kept));
  fs::remove_all(dir);
  return "40 pairs, " + std::to_string(kept) + " kept, every field and image round-tripped";
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<std::string()>>> criteria{
      {"reconstruction fidelity", reconstruction},
      {"budget monotonicity", budget_monotonicity},
      {"marker monotone darkening", marker_darkening},
      {"removal-strategy laws", removal_laws},
      {"filter behavior", filter_behavior},
      {"metric identities", metric_identities},
      {"pearson oracle", pearson_oracle_match},
      {"multi-turn preservation", multi_turn_preservation},
      {"determinism", determinism},
      {"dataset round-trip", dataset_round_trip},
  };
  int failed = 0;
  for (const auto& [name, body] : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    std::string line;
    bool ok = true;
    try {
      line = body();
    } catch (const std::exception& e) {
      ok = false;
      line = e.what();
    }
    failed += !ok;
    std::cout << (ok ? "PASS" : "FAIL") << "  " << name << ": " << line << " [" << fmt(seconds_since(t0)) << " s]"
              << std::endl;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}

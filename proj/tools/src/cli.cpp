#include "cli.hpp"

#include <csignal>
#include <iostream>
#include <thread>

#include <pthread.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"

#include "commands.hpp"
#include "config.hpp"
#include "copaint/errors.hpp"
#include "copaint/io.hpp"
#include "copaint/palette.hpp"
#include "copaint/planner.hpp"
#include "copaint/render.hpp"
#include "copaint/session.hpp"
#include "service.hpp"

namespace copaint::service {

namespace fs = std::filesystem;

namespace {

const std::map<std::string, Media> kMediaNames{
    {"marker", Media::marker_black}, {"acrylic4", Media::acrylic_4_fixed}, {"acrylic12", Media::acrylic_12_adaptive}};

struct PlanArgs {
  std::string target, out, canvas, setting = "marker";
  int budget = kDefaultStrokeBudget;
  std::uint64_t seed = 0;
  int width = 0, height = 0;
  int candidates = PlannerConfig{}.candidates_per_stroke;
  int refine_iters = PlannerConfig{}.refine_iters;
  int workers = 1;
};

struct RenderArgs {
  std::string plan, out, base;
  int width = 256, height = 256;
};

struct DatasetArgs {
  std::string corpus, out, setting = "marker", strategies = "all,random:0.3,salient,semantic";
  std::string embedding = "builtin", saliency_url, segmentation_url;
  int budget = kDefaultStrokeBudget;
  std::uint64_t seed = 0;
  int workers = 1, width = 256, height = 256;
  int candidates = PlannerConfig{}.candidates_per_stroke;
  int refine_iters = PlannerConfig{}.refine_iters;
  double threshold = kDefaultFilterThreshold;
};

struct GapArgs {
  std::string pairs, out, embedding = "builtin";
  int workers = 1;
};

struct ExportArgs {
  std::string config, data_dir, id, out;
};

struct ServeArgs {
  std::string config, host, data_dir;
  int port = -1;
  bool verbose = false;
};

PaintingSetting setting_for(const std::string& name, int budget) {
  PaintingSetting s = PaintingSetting::for_media(kMediaNames.at(name));
  s.stroke_budget = budget;
  return s;
}

void run_plan(const PlanArgs& a, std::ostream& out) {
  PaintingSetting setting = setting_for(a.setting, a.budget);
  Image target = read_png(a.target);
  Canvas canvas = a.canvas.empty() ? Canvas(a.width ? a.width : target.width(), a.height ? a.height : target.height())
                                   : Canvas(read_png(a.canvas));
  if ((a.width && a.width != canvas.width()) || (a.height && a.height != canvas.height()))
    throw DimensionMismatch("--canvas size differs from --width/--height");
  target = resize_letterbox(target, canvas.width(), canvas.height());
  if (!setting.palette.fixed) setting.palette = derive_palette(target, setting);

  PlannerConfig pc;
  pc.seed = a.seed;
  pc.candidates_per_stroke = a.candidates;
  pc.refine_iters = a.refine_iters;
  pc.workers = a.workers;
  PlanReport r = plan_strokes_report(target, canvas, setting, pc, LossConfig{});
  r.plan.source_tag = fs::path(a.target).filename().string();
  write_plan(a.out, r.plan);
  out << r.plan.strokes.size() << " strokes, loss " << r.initial_loss << " -> " << r.final_loss << "\n";
}

void run_render(const RenderArgs& a, std::ostream& out) {
  const StrokePlan plan = read_plan(a.plan);
  const Canvas base = a.base.empty() ? Canvas(a.width, a.height) : Canvas(read_png(a.base));
  const Canvas c = render_plan(plan, base, Author::robot);
  write_png(a.out, c.pixels());
  out << "rendered " << plan.strokes.size() << " strokes at " << c.width() << "x" << c.height() << "\n";
}

void run_dataset(const DatasetArgs& a, std::ostream& out, std::ostream& err) {
  PipelineConfig pc;
  pc.setting = setting_for(a.setting, a.budget);
  pc.planner.candidates_per_stroke = a.candidates;
  pc.planner.refine_iters = a.refine_iters;
  pc.strategies = parse_strategy_list(a.strategies);
  pc.embedding = parse_embedding_provider(a.embedding);
  pc.regions = http_region_providers(a.saliency_url, a.segmentation_url, pc.embedding.timeout_s);
  pc.filter_threshold = a.threshold;
  pc.width = a.width;
  pc.height = a.height;
  pc.seed = a.seed;
  pc.workers = a.workers;
  const DatasetSummary s = generate_dataset(a.corpus, a.out, pc);
  for (const auto& line : s.log) err << line << "\n";
  out << s.pairs << " pairs, " << s.kept << " kept, " << s.undecided << " undecided\n";
}

void run_gap(const GapArgs& a, std::ostream& out) {
  const GapInput in = read_gap_pairs(a.pairs);
  const std::string doc = gap_report_to_json(gap_report(in.pairs, parse_embedding_provider(a.embedding),
                                                        in.text_scores, a.workers));
  if (a.out.empty())
    out << doc << "\n";
  else
    write_file_atomic(a.out, doc);
}

void run_export(const ExportArgs& a, std::ostream& out) {
  fs::path data_dir = a.data_dir;
  if (data_dir.empty()) {
    if (a.config.empty()) throw FormatError("session export needs --data-dir or --config");
    data_dir = load_engine_config(fs::path(a.config)).data_dir;
  }
  const SessionState s = load_session(data_dir / "sessions" / a.id);
  export_session(s, a.out);
  out << "exported " << s.turns.size() << " turns to " << a.out << "\n";
}

void run_serve(const ServeArgs& a) {
  EngineConfig cfg = load_engine_config(a.config.empty() ? std::nullopt : std::optional<fs::path>(a.config));
  if (!a.host.empty()) cfg.host = a.host;
  if (a.port >= 0) cfg.port = a.port;
  if (!a.data_dir.empty()) cfg.data_dir = a.data_dir;
  validate(cfg);
  if (a.verbose) spdlog::set_level(spdlog::level::debug);

  // Signals go to a dedicated thread; every other thread inherits the mask.
  sigset_t sigs;
  sigemptyset(&sigs);
  sigaddset(&sigs, SIGINT);
  sigaddset(&sigs, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &sigs, nullptr);

  Engine engine(cfg);
  HttpService http(engine);
  const int port = http.bind(cfg.host, cfg.port);
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&sigs, &sig);
    spdlog::info("signal {}, shutting down", sig);
    http.stop();
  });
  spdlog::info("listening on http://{}:{}", cfg.host, port);
  http.listen();
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  engine.shutdown();
  spdlog::info("stopped");
}

const CLI::App* deepest(const CLI::App& app) {
  for (const auto* sub : app.get_subcommands()) return deepest(*sub);
  return &app;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Stroke planning, co-painting sessions and dataset tools", "copaint"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  const auto media = CLI::IsMember({"marker", "acrylic4", "acrylic12"});

  PlanArgs pa;
  auto* plan = app.add_subcommand("plan", "Plan strokes toward a target image");
  plan->add_option("--target", pa.target, "Target PNG")->required()->check(CLI::ExistingFile);
  plan->add_option("--out", pa.out, "Output plan JSON")->required();
  plan->add_option("--setting", pa.setting, "Media")->check(media)->capture_default_str();
  plan->add_option("--budget", pa.budget, "Stroke budget")->check(CLI::PositiveNumber)->capture_default_str();
  plan->add_option("--seed", pa.seed, "Random seed")->capture_default_str();
  plan->add_option("--canvas", pa.canvas, "Starting canvas PNG (default: blank)")->check(CLI::ExistingFile);
  plan->add_option("--width", pa.width, "Canvas width (default: target width)")->check(CLI::PositiveNumber);
  plan->add_option("--height", pa.height, "Canvas height (default: target height)")->check(CLI::PositiveNumber);
  plan->add_option("--candidates", pa.candidates, "Candidates per stroke")->check(CLI::PositiveNumber)->capture_default_str();
  plan->add_option("--refine-iters", pa.refine_iters, "Polish rounds per stroke")->check(CLI::NonNegativeNumber)->capture_default_str();
  plan->add_option("--workers", pa.workers, "Threads")->check(CLI::PositiveNumber)->capture_default_str();

  RenderArgs ra;
  auto* render = app.add_subcommand("render", "Render a plan to PNG");
  render->add_option("--plan", ra.plan, "Plan JSON")->required()->check(CLI::ExistingFile);
  render->add_option("--out", ra.out, "Output PNG")->required();
  render->add_option("--width", ra.width, "Canvas width")->check(CLI::PositiveNumber)->capture_default_str();
  render->add_option("--height", ra.height, "Canvas height")->check(CLI::PositiveNumber)->capture_default_str();
  render->add_option("--base", ra.base, "Base canvas PNG (overrides size)")->check(CLI::ExistingFile);

  DatasetArgs da;
  auto* dataset = app.add_subcommand("dataset", "Training data tools");
  dataset->require_subcommand(1);
  auto* generate = dataset->add_subcommand("generate", "Build (partial, full, caption) pairs from a corpus");
  generate->add_option("--corpus", da.corpus, "Directory with captions.jsonl")->required()->check(CLI::ExistingDirectory);
  generate->add_option("--out", da.out, "Output directory")->required();
  generate->add_option("--strategies", da.strategies, "Comma-separated removal strategies")->capture_default_str();
  generate->add_option("--setting", da.setting, "Media")->check(media)->capture_default_str();
  generate->add_option("--budget", da.budget, "Stroke budget")->check(CLI::PositiveNumber)->capture_default_str();
  generate->add_option("--seed", da.seed, "Random seed")->capture_default_str();
  generate->add_option("--workers", da.workers, "Threads")->check(CLI::PositiveNumber)->capture_default_str();
  generate->add_option("--width", da.width, "Canvas width")->check(CLI::PositiveNumber)->capture_default_str();
  generate->add_option("--height", da.height, "Canvas height")->check(CLI::PositiveNumber)->capture_default_str();
  generate->add_option("--candidates", da.candidates, "Candidates per stroke")->check(CLI::PositiveNumber)->capture_default_str();
  generate->add_option("--refine-iters", da.refine_iters, "Polish rounds per stroke")->check(CLI::NonNegativeNumber)->capture_default_str();
  generate->add_option("--threshold", da.threshold, "Filter threshold")->capture_default_str();
  generate->add_option("--embedding", da.embedding, "builtin or an http:// URL")->capture_default_str();
  generate->add_option("--saliency-url", da.saliency_url, "External saliency service");
  generate->add_option("--segmentation-url", da.segmentation_url, "External segmentation service");

  GapArgs ga;
  auto* metrics = app.add_subcommand("metrics", "Evaluation tools");
  metrics->require_subcommand(1);
  auto* gap = metrics->add_subcommand("gap", "Sim2real gap report over image pairs");
  gap->add_option("--pairs", ga.pairs, "JSONL of {id, a, b, text_score?}")->required()->check(CLI::ExistingFile);
  gap->add_option("--out", ga.out, "Report JSON (default: stdout)");
  gap->add_option("--embedding", ga.embedding, "builtin or an http:// URL")->capture_default_str();
  gap->add_option("--workers", ga.workers, "Threads")->check(CLI::PositiveNumber)->capture_default_str();

  ExportArgs ea;
  auto* session = app.add_subcommand("session", "Session tools");
  session->require_subcommand(1);
  auto* exp = session->add_subcommand("export", "Copy a stored session into an export directory");
  exp->add_option("--id", ea.id, "Session id")->required();
  exp->add_option("--out", ea.out, "Output directory")->required();
  exp->add_option("--data-dir", ea.data_dir, "Service data directory");
  exp->add_option("--config", ea.config, "Engine config file (for data_dir)")->check(CLI::ExistingFile);

  ServeArgs sa;
  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  serve->add_option("--config", sa.config, "Engine config file")->check(CLI::ExistingFile);
  serve->add_option("--host", sa.host, "Bind address (overrides config)");
  serve->add_option("--port", sa.port, "Port (overrides config)")->check(CLI::Range(0, 65535));
  serve->add_option("--data-dir", sa.data_dir, "Data directory (overrides config)");
  serve->add_flag("--verbose", sa.verbose, "Log every request");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << deepest(app)->help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << deepest(app)->help();
    return kExitUsage;
  }

  try {
    if (*plan) run_plan(pa, out);
    else if (*render) run_render(ra, out);
    else if (*generate) run_dataset(da, out, err);
    else if (*gap) run_gap(ga, out);
    else if (*exp) run_export(ea, out);
    else if (*serve) run_serve(sa);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace copaint::service

#include "config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include <boost/program_options.hpp>

#include "copaint/errors.hpp"
#include "copaint/http.hpp"
#include "copaint/session.hpp"

namespace copaint::service {

namespace po = boost::program_options;

namespace {

po::options_description describe() {
  po::options_description d("engine config");
  d.add_options()
      ("canvas_width", po::value<int>())
      ("canvas_height", po::value<int>())
      ("media", po::value<std::string>())
      ("stroke_budget", po::value<int>())
      ("candidates_per_stroke", po::value<int>())
      ("refine_iters", po::value<int>())
      ("refine_step", po::value<double>())
      ("planner_seed", po::value<std::uint64_t>())
      ("planner_workers", po::value<int>())
      ("pixel_weight", po::value<double>())
      ("edge_weight", po::value<double>())
      ("preserve_penalty", po::value<double>())
      ("target_provider", po::value<std::string>())
      ("target_timeout_s", po::value<double>())
      ("embedding_provider", po::value<std::string>())
      ("embedding_timeout_s", po::value<double>())
      ("embedding_text_capable", po::value<bool>())
      ("saliency_url", po::value<std::string>())
      ("segmentation_url", po::value<std::string>())
      ("data_dir", po::value<std::string>())
      ("host", po::value<std::string>())
      ("port", po::value<int>())
      ("job_workers", po::value<int>());
  return d;
}

std::string env_to_key(const std::string& name) {
  static const std::string prefix = "COPAINT_";
  if (name.rfind(prefix, 0) != 0) return "";
  std::string key = name.substr(prefix.size());
  std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
  return key;
}

template <typename T>
void take(const po::variables_map& vm, const char* key, T& out) {
  if (vm.count(key)) out = vm[key].as<T>();
}

}  // namespace

EngineConfig load_engine_config(const std::optional<std::filesystem::path>& file) {
  const auto desc = describe();
  po::variables_map vm;
  try {
    // store() keeps the first value it sees, so the environment goes first.
    po::store(po::parse_environment(desc, env_to_key), vm);
    if (file) {
      std::ifstream in(*file);
      if (!in) throw IoError("cannot read config " + file->string());
      po::store(po::parse_config_file(in, desc, false), vm);
    }
    po::notify(vm);
  } catch (const po::error& e) {
    throw FormatError(std::string("config: ") + e.what());
  }

  EngineConfig cfg;
  take(vm, "canvas_width", cfg.width);
  take(vm, "canvas_height", cfg.height);
  if (vm.count("media")) cfg.setting = PaintingSetting::for_media(parse_media(vm["media"].as<std::string>()));
  take(vm, "stroke_budget", cfg.setting.stroke_budget);
  take(vm, "candidates_per_stroke", cfg.planner.candidates_per_stroke);
  take(vm, "refine_iters", cfg.planner.refine_iters);
  take(vm, "refine_step", cfg.planner.refine_step);
  take(vm, "planner_seed", cfg.planner.seed);
  take(vm, "planner_workers", cfg.planner.workers);
  take(vm, "pixel_weight", cfg.loss.pixel_weight);
  take(vm, "edge_weight", cfg.loss.edge_weight);
  take(vm, "preserve_penalty", cfg.loss.preserve_penalty);
  take(vm, "target_provider", cfg.target_provider);
  take(vm, "target_timeout_s", cfg.target_timeout_s);
  if (vm.count("embedding_provider"))
    cfg.embedding = parse_embedding_provider(vm["embedding_provider"].as<std::string>());
  take(vm, "embedding_timeout_s", cfg.embedding.timeout_s);
  take(vm, "embedding_text_capable", cfg.embedding.text_capable);
  take(vm, "saliency_url", cfg.saliency_url);
  take(vm, "segmentation_url", cfg.segmentation_url);
  if (vm.count("data_dir")) cfg.data_dir = vm["data_dir"].as<std::string>();
  take(vm, "host", cfg.host);
  take(vm, "port", cfg.port);
  take(vm, "job_workers", cfg.job_workers);
  validate(cfg);
  return cfg;
}

void validate(const EngineConfig& cfg) {
  if (cfg.width <= 0 || cfg.height <= 0)
    throw ConstraintViolation("canvas size must be positive", {"canvas_width", "canvas_height"});
  require_valid_setting(cfg.setting);
  require_valid(cfg.planner);
  require_valid(cfg.loss);
  if (!cfg.target_provider.empty()) parse_target_provider(cfg.target_provider, cfg.target_timeout_s);
  if (!(cfg.target_timeout_s > 0)) throw ConstraintViolation("target_timeout_s must be positive", {"target_timeout_s"});
  if (cfg.embedding.kind == EmbeddingProvider::Kind::http) parse_url(cfg.embedding.endpoint);
  if (!(cfg.embedding.timeout_s > 0))
    throw ConstraintViolation("embedding_timeout_s must be positive", {"embedding_timeout_s"});
  for (const auto* url : {&cfg.saliency_url, &cfg.segmentation_url})
    if (!url->empty()) parse_url(*url);
  if (cfg.data_dir.empty()) throw ConstraintViolation("data_dir must be set", {"data_dir"});
  if (cfg.port < 0 || cfg.port > 65535) throw ConstraintViolation("port out of range", {"port"});
  if (cfg.job_workers < 1) throw ConstraintViolation("job_workers must be at least 1", {"job_workers"});
}

}  // namespace copaint::service

#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "copaint/loss.hpp"
#include "copaint/metrics.hpp"
#include "copaint/planner.hpp"
#include "copaint/stroke.hpp"

namespace copaint::service {

/// Service configuration. Loaded from a key = value file (one key per line,
/// '#' comments) with environment overrides: COPAINT_<KEY in upper case>, e.g.
/// COPAINT_PORT=9000. Environment values win over the file.
///
/// Keys:
///   canvas_width, canvas_height      default canvas size for new sessions
///   media                            marker | acrylic4 | acrylic12
///   stroke_budget                    robot strokes per turn
///   candidates_per_stroke, refine_iters, refine_step, planner_seed, planner_workers
///   pixel_weight, edge_weight, preserve_penalty
///   target_provider                  default target: file:PATH or http://...
///   target_timeout_s
///   embedding_provider               builtin | http://...
///   embedding_timeout_s
///   embedding_text_capable           true if the provider also serves /text-score
///   saliency_url, segmentation_url   optional region services
///   data_dir                         sessions, uploads, jobs
///   host, port
///   job_workers                      background job threads
struct EngineConfig {
  int width = 256;
  int height = 256;
  PaintingSetting setting = PaintingSetting::marker();
  PlannerConfig planner;
  LossConfig loss;
  std::string target_provider;
  double target_timeout_s = 30.0;
  EmbeddingProvider embedding;
  std::string saliency_url;
  std::string segmentation_url;
  std::filesystem::path data_dir = "copaint-data";
  std::string host = "127.0.0.1";
  int port = 8080;
  int job_workers = 2;
};

/// Throws FormatError for unknown keys, unparsable values or malformed URLs,
/// ConstraintViolation for out-of-range values.
EngineConfig load_engine_config(const std::optional<std::filesystem::path>& file);

void validate(const EngineConfig& cfg);

}  // namespace copaint::service

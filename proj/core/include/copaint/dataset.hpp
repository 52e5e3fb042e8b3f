#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "copaint/loss.hpp"
#include "copaint/metrics.hpp"
#include "copaint/planner.hpp"
#include "copaint/stroke.hpp"

namespace copaint {

struct SourceItem {
  std::string id;
  Image image;
  std::string caption;
};

enum class RemovalKind { remove_all, remove_random, remove_salient, remove_semantic };

inline constexpr double kDefaultRegionQuantile = 0.25;

/// Which strokes a partial painting loses. Only the parameter belonging to
/// `kind` may be set.
struct RemovalStrategy {
  RemovalKind kind = RemovalKind::remove_all;
  std::optional<double> fraction;         // remove_random
  std::optional<double> region_quantile;  // remove_salient; default 0.25
  std::optional<int> region_index;        // remove_semantic; default largest region

  static RemovalStrategy all() { return {}; }
  static RemovalStrategy random(double f) { return {RemovalKind::remove_random, f, std::nullopt, std::nullopt}; }
  static RemovalStrategy salient(std::optional<double> q = std::nullopt) {
    return {RemovalKind::remove_salient, std::nullopt, q, std::nullopt};
  }
  static RemovalStrategy semantic(std::optional<int> region = std::nullopt) {
    return {RemovalKind::remove_semantic, std::nullopt, std::nullopt, region};
  }

  friend bool operator==(const RemovalStrategy&, const RemovalStrategy&) = default;
};

void require_valid(const RemovalStrategy& s);

/// Tags: "all", "random:F", "salient" / "salient:Q", "semantic" / "semantic:I".
std::string to_tag(const RemovalStrategy& s);
RemovalStrategy parse_strategy(const std::string& tag);
/// Comma-separated tags.
std::vector<RemovalStrategy> parse_strategy_list(const std::string& list);

/// Edge energy (Sobel magnitude blurred with sigma = 2% of the height) and a
/// centered Gaussian prior (sigma = 35% of each dimension), each min-max
/// normalized, averaged over the terms that are not constant.
ScalarField saliency_map(const Image& img);

inline constexpr int kSegmentClusters = 6;
inline constexpr std::uint64_t kSegmentSeed = 0x5e9d00d5ULL;
/// Components below this fraction of the pixels are merged away.
inline constexpr double kMinRegionFraction = 0.01;

/// k-means color clusters split into 4-connected components; small
/// components merge into the neighbor sharing the longest border (ties: the
/// lower label). Labels are contiguous from 0 in raster order of first
/// appearance.
LabelMap segment_regions(const Image& img, std::uint64_t seed = kSegmentSeed);

/// Where make_partial gets its saliency and segmentation from.
struct RegionProviders {
  std::function<ScalarField(const Image&)> saliency = saliency_map;
  std::function<LabelMap(const Image&)> segmentation = [](const Image& img) { return segment_regions(img); };
};

/// External services: POST a PNG, answer {"width","height","values"} for
/// saliency and {"width","height","labels"} for segmentation.
RegionProviders http_region_providers(const std::string& saliency_url, const std::string& segmentation_url,
                                      double timeout_s);

/// Round half up of fraction * n.
int removal_count(double fraction, std::size_t n);

/// The saliency region: pixels taken in decreasing saliency until their mass
/// reaches quantile * total (ties with the last taken value included, zero
/// saliency never).
std::vector<bool> salient_region(const ScalarField& saliency, double quantile);

/// Label with the most pixels; ties go to the lower label.
int largest_region(const LabelMap& labels);

/// Subset of `plan` (same order and setting) with strokes removed per
/// `strategy`. Region membership is decided by the stroke's path midpoint.
StrokePlan make_partial(const StrokePlan& plan, const RemovalStrategy& strategy, const Image& source,
                        std::uint64_t seed, const RegionProviders& regions = {});

struct Simulation {
  StrokePlan plan;
  Canvas canvas;
};

/// Palette derivation (adaptive media) then planning from a blank canvas.
Simulation simulate_full(const SourceItem& source, const PaintingSetting& setting, const PlannerConfig& planner,
                         const LossConfig& loss);

inline constexpr double kDefaultFilterThreshold = 0.5;

struct FilterDecision {
  bool kept = false;
  bool undecided = false;  // provider failed; excluded from export
  double score = 0.0;
  std::string reason;
};

/// Score is 1 - delta_sem(full, source) for image-only providers and the
/// provider's image-text score for text-capable ones; kept iff score >=
/// threshold.
FilterDecision filter_pair(const Canvas& full, const SourceItem& source, const EmbeddingProvider& provider,
                           double threshold = kDefaultFilterThreshold);

struct TrainingPair {
  std::string source_id;
  std::string caption;
  RemovalStrategy strategy;
  Image partial_image;
  Image full_image;
  StrokePlan partial_plan;
  StrokePlan full_plan;
  FilterDecision filter;
};

struct ManifestEntry {
  std::string id;
  std::string source_id;
  std::string caption;
  std::string strategy;
  bool kept = true;
  double score = 0.0;
  std::string partial_path;  // relative to the dataset root
  std::string full_path;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

/// Writes partial/NNNN.png, full/NNNN.png and manifest.jsonl for the kept
/// pairs. On failure, files written by this call are removed.
std::vector<ManifestEntry> export_dataset(const std::vector<TrainingPair>& pairs, const std::filesystem::path& out_dir);

std::string manifest_line(const ManifestEntry& e);
ManifestEntry parse_manifest_line(const std::string& line);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

struct CorpusEntry {
  std::string id;
  std::filesystem::path file;
  std::string caption;
};

/// Reads DIR/captions.jsonl ({id, file, caption} per line; file relative to
/// DIR).
std::vector<CorpusEntry> read_corpus(const std::filesystem::path& dir);

struct PipelineConfig {
  PaintingSetting setting = PaintingSetting::marker();
  PlannerConfig planner;
  LossConfig loss;
  std::vector<RemovalStrategy> strategies = {RemovalStrategy::all()};
  EmbeddingProvider embedding;
  RegionProviders regions;
  double filter_threshold = kDefaultFilterThreshold;
  int width = 256;
  int height = 256;
  std::uint64_t seed = 0;
  int workers = 1;
};

struct PipelineResult {
  std::vector<TrainingPair> pairs;  // source order, then strategy order
  std::vector<std::string> log;     // skipped items and undecided filters
};

/// Per-source work is seeded by mix(seed, hash(id)), so results do not
/// depend on worker count or scheduling.
PipelineResult run_pipeline(const std::vector<SourceItem>& sources, const PipelineConfig& cfg);

/// Loads each corpus image (undecodable ones are logged and skipped),
/// letterboxes it to the configured size and runs the pipeline.
PipelineResult run_pipeline(const std::vector<CorpusEntry>& corpus, const PipelineConfig& cfg);

}  // namespace copaint

#pragma once

// Batch operations shared by the CLI and the service's background jobs.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "copaint/dataset.hpp"
#include "copaint/metrics.hpp"

namespace copaint::service {

struct GapInput {
  std::vector<GapPair> pairs;
  std::optional<std::vector<double>> text_scores;
};

/// JSONL with one {id, a, b, text_score?} per line; a and b are PNG paths
/// relative to the file's directory. text_score must be on every line or on
/// none.
GapInput read_gap_pairs(const std::filesystem::path& jsonl);

struct DatasetSummary {
  std::size_t pairs = 0;
  std::size_t kept = 0;
  std::size_t undecided = 0;
  std::vector<std::string> log;
};

/// Runs the pipeline over DIR/captions.jsonl and exports into `out`.
DatasetSummary generate_dataset(const std::filesystem::path& corpus, const std::filesystem::path& out,
                                const PipelineConfig& cfg);

}  // namespace copaint::service

#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "copaint/loss.hpp"
#include "copaint/metrics.hpp"
#include "copaint/planner.hpp"
#include "copaint/stroke.hpp"

namespace copaint {

/// One committed turn. Canvas snapshots are shared and never modified; the
/// next turn's `before` is the same object as this turn's `after`.
struct Turn {
  Author author = Author::human;
  /// Robot: the planned strokes. Human: the submitted batch, wrapped in a
  /// plan carrying the session setting.
  StrokePlan plan;
  std::shared_ptr<const Canvas> before;
  std::shared_ptr<const Canvas> after;
  std::optional<std::string> prompt;
  /// Letterboxed target the robot planned toward.
  std::shared_ptr<const Image> target;
  std::map<std::string, double> metrics;
};

struct SessionState {
  std::string id;
  PaintingSetting setting;
  int width = 0;
  int height = 0;
  std::vector<Turn> turns;
  std::shared_ptr<const Canvas> current;
  std::string created_at;  // ISO 8601, UTC

  const Canvas& canvas() const { return *current; }
};

/// Where a robot turn's target image comes from.
struct TargetProviderConfig {
  enum class Kind { file, http };
  Kind kind = Kind::file;
  std::filesystem::path path;
  std::string endpoint;
  double timeout_s = 30.0;

  static TargetProviderConfig file(std::filesystem::path p);
  static TargetProviderConfig http(std::string url, double timeout_s = 30.0);
};

void require_valid(const TargetProviderConfig& p);

/// "file:PATH" or an http:// URL.
TargetProviderConfig parse_target_provider(const std::string& spec, double timeout_s = 30.0);

/// Fetches the target and letterboxes it to the canvas size. The HTTP kind
/// posts multipart {prompt, canvas (PNG)} and expects a PNG back. Transport
/// failures throw ProviderError, undecodable images FormatError.
Image fetch_target(const TargetProviderConfig& provider, const Canvas& current,
                   const std::optional<std::string>& prompt);

SessionState new_session(const PaintingSetting& setting, int width_px, int height_px);

/// Renders the batch as human strokes and appends a turn. The whole batch is
/// validated first; any invalid stroke throws ConstraintViolation (with its
/// batch index) and nothing is appended.
SessionState apply_human_strokes(const SessionState& session, const std::vector<StrokeParams>& strokes);

/// Color tolerance (L-infinity per channel) for a human pixel to count as
/// preserved.
inline constexpr double kPreservationTolerance = 2.0 / 255.0;

/// Fraction of pixels authored by a human in `before` whose color in `after`
/// is within kPreservationTolerance; 1.0 when there are none.
double preservation_score(const Canvas& before, const Canvas& after);

struct RobotTurnOptions {
  PlannerConfig planner;
  LossConfig loss;
  EmbeddingProvider embedding;
};

struct RobotTurnResult {
  SessionState session;
  StrokePlan plan;
};

/// Fetches a target, plans toward it from the current canvas (preservation
/// measured against that canvas) and appends a robot turn with metrics
/// delta_pix, delta_sem, preservation, loss_before and loss_after. The
/// planner seed is mixed with the turn index. Adaptive media derive their
/// palette from the target. On any error the input session is untouched.
RobotTurnResult robot_turn(const SessionState& session, const TargetProviderConfig& provider,
                           const std::optional<std::string>& prompt, const RobotTurnOptions& options);

/// Re-renders every turn from a blank canvas.
Canvas replay(const SessionState& session);

inline constexpr int kSessionFormatVersion = 1;

/// Writes DIR/session.json plus, per turn N, turns/NNNN.png (canvas after),
/// turns/NNNN.plan.json and turns/NNNN.target.png when a target exists.
/// session.json is written last and atomically, so a directory always
/// describes a complete prefix of turns.
void export_session(const SessionState& session, const std::filesystem::path& dir);

/// Rebuilds a session by replaying its plans. Throws FormatError if a replayed
/// canvas does not match the stored PNG.
SessionState load_session(const std::filesystem::path& dir);

/// {id, created_at, width, height, setting, turn_count, turns:[{index,
/// author, stroke_count, prompt, metrics}]}
std::string session_to_json(const SessionState& session);
/// {turns:[{index, author, metrics}]}
std::string session_metrics_json(const SessionState& session);
/// Accepts [stroke...] or {"strokes":[stroke...]} with stroke objects in the
/// plan-file format.
std::vector<StrokeParams> strokes_from_json(std::string_view text);

}  // namespace copaint

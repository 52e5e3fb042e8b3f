#pragma once

#include <cstdint>

#include "copaint/loss.hpp"
#include "copaint/stroke.hpp"

namespace copaint {

struct PlannerConfig {
  int candidates_per_stroke = 64;
  int refine_iters = 30;
  /// Initial perturbation in normalized units; halved after a round without
  /// improvement.
  double refine_step = 0.05;
  std::uint64_t seed = 0;
  /// Threads used for candidate evaluation. Results do not depend on it.
  int workers = 1;
};

void require_valid(const PlannerConfig& cfg);

struct PlanReport {
  StrokePlan plan;
  Canvas canvas;  // render_plan(plan, current, robot)
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

/// Greedy budgeted planning toward `target` from `current`, with
/// preservation measured against `current`.
///
/// Each slot samples candidates_per_stroke strokes anchored on the per-pixel
/// error mass, keeps the lowest-loss one (ties: lowest index) if it strictly
/// lowers the loss, then polishes that stroke by coordinate descent before the
/// next slot. Planning stops early when no candidate improves. Every slot
/// draws from its own seed stream, so a larger budget extends a smaller
/// budget's plan and its loss is never higher.
PlanReport plan_strokes_report(const Image& target, const Canvas& current, const PaintingSetting& setting,
                               const PlannerConfig& cfg, const LossConfig& loss_cfg);

StrokePlan plan_strokes(const Image& target, const Canvas& current, const PaintingSetting& setting,
                        const PlannerConfig& cfg, const LossConfig& loss_cfg);

/// Coordinate descent over every stroke's continuous fields (control points,
/// width, opacity). Only strict improvements are kept; the stroke count never
/// changes and the returned plan's loss never exceeds the input's.
StrokePlan refine_plan(const StrokePlan& plan, const Image& target, const Canvas& base,
                       const PlannerConfig& cfg, const LossConfig& loss_cfg);

}  // namespace copaint

#pragma once

#include <vector>

#include "copaint/stroke.hpp"

namespace copaint {

struct Span {
  int y = 0;
  int x0 = 0;  // inclusive
  int x1 = 0;  // exclusive
};

/// Hard-edged pixel footprint of a stroke: every pixel whose center lies
/// within width/2 of a stamp center placed along the path.
struct Coverage {
  PixelRect bbox;  // tight bounds of the covered pixels (empty if none)
  std::vector<Span> spans;

  std::size_t pixel_count() const;
  bool contains(int x, int y) const;
};

/// Stamp centers in pixel coordinates, spaced stamp_spacing * width apart
/// along the arc length, always including both endpoints.
std::vector<Point> stamp_centers(const StrokeParams& stroke, const BrushProfile& brush,
                                 int width_px, int height_px);

/// Footprint of `stroke` on a width_px x height_px canvas, restricted to
/// `clip`. The covered set inside `clip` does not depend on `clip`.
Coverage stroke_coverage(const StrokeParams& stroke, const BrushProfile& brush, int width_px,
                         int height_px, const PixelRect& clip);
Coverage stroke_coverage(const StrokeParams& stroke, const BrushProfile& brush, int width_px,
                         int height_px);

/// Applies the blend rule to every covered pixel and updates authorship
/// (human is sticky).
void composite(Canvas& canvas, const Coverage& coverage, const Rgb& color, double opacity,
               BlendMode mode, Author author);

Rgb blend(const Rgb& under, const Rgb& color, double opacity, BlendMode mode);

/// In-place rendering without validation, restricted to `clip`. The planner's
/// inner loop uses this; callers are responsible for stroke validity.
void paint_stroke(Canvas& canvas, const StrokeParams& stroke, const PaintingSetting& setting,
                  Author author, const PixelRect& clip);

/// Validates then renders one stroke onto a copy of `canvas`.
/// Throws ConstraintViolation naming the violated fields.
Canvas render_stroke(const Canvas& canvas, const StrokeParams& stroke,
                     const PaintingSetting& setting, Author author);

/// Left fold of render_stroke over the plan. Errors carry the stroke index.
Canvas render_plan(const StrokePlan& plan, const Canvas& base, Author author);

}  // namespace copaint

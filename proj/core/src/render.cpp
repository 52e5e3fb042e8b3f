#include "copaint/render.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace copaint {

namespace {

constexpr double kMinStampStepPx = 0.25;

}  // namespace

std::size_t Coverage::pixel_count() const {
  std::size_t n = 0;
  for (const Span& s : spans) n += static_cast<std::size_t>(s.x1 - s.x0);
  return n;
}

bool Coverage::contains(int x, int y) const {
  for (const Span& s : spans)
    if (s.y == y && x >= s.x0 && x < s.x1) return true;
  return false;
}

std::vector<Point> stamp_centers(const StrokeParams& stroke, const BrushProfile& brush, int width_px,
                                 int height_px) {
  auto to_px = [&](const Point& p) { return Point{p.x * width_px, p.y * height_px}; };
  const Point a = to_px(stroke.p0);
  const Point b = to_px(stroke.p1);
  const Point c = to_px(stroke.p2);
  const double hull = std::hypot(b.x - a.x, b.y - a.y) + std::hypot(c.x - b.x, c.y - b.y);
  const int segments = std::clamp(static_cast<int>(std::ceil(hull / 2.0)), 4, 1024);

  std::vector<Point> poly(segments + 1);
  std::vector<double> cum(segments + 1, 0.0);
  for (int i = 0; i <= segments; ++i) {
    poly[i] = to_px(stroke.at(static_cast<double>(i) / segments));
    if (i > 0) cum[i] = cum[i - 1] + std::hypot(poly[i].x - poly[i - 1].x, poly[i].y - poly[i - 1].y);
  }
  const double length = cum.back();
  const double step = std::max(brush.stamp_spacing * stroke.width * height_px, kMinStampStepPx);

  std::vector<Point> out;
  out.push_back(poly.front());
  if (length <= 0.0) return out;
  int seg = 1;
  for (double s = step; s < length; s += step) {
    while (seg < segments && cum[seg] < s) ++seg;
    const double span = cum[seg] - cum[seg - 1];
    const double t = span > 0.0 ? (s - cum[seg - 1]) / span : 0.0;
    out.push_back({poly[seg - 1].x + t * (poly[seg].x - poly[seg - 1].x),
                   poly[seg - 1].y + t * (poly[seg].y - poly[seg - 1].y)});
  }
  out.push_back(poly.back());
  return out;
}

Coverage stroke_coverage(const StrokeParams& stroke, const BrushProfile& brush, int width_px,
                         int height_px, const PixelRect& clip) {
  Coverage cov;
  const std::vector<Point> centers = stamp_centers(stroke, brush, width_px, height_px);
  const double r = 0.5 * stroke.width * height_px;
  const double r2 = r * r;

  double minx = centers[0].x, maxx = centers[0].x, miny = centers[0].y, maxy = centers[0].y;
  for (const Point& p : centers) {
    minx = std::min(minx, p.x);
    maxx = std::max(maxx, p.x);
    miny = std::min(miny, p.y);
    maxy = std::max(maxy, p.y);
  }
  const PixelRect area = PixelRect{static_cast<int>(std::floor(minx - r)) - 1,
                                   static_cast<int>(std::floor(miny - r)) - 1,
                                   static_cast<int>(std::ceil(maxx + r)) + 1,
                                   static_cast<int>(std::ceil(maxy + r)) + 1}
                             .intersect({0, 0, width_px, height_px})
                             .intersect(clip);
  if (area.empty()) return cov;

  const int aw = area.width();
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(aw) * area.height(), 0);
  for (const Point& c : centers) {
    // Pixel (i, j) is covered when its center (i + .5, j + .5) lies in the disc.
    const int jy0 = std::max(area.y0, static_cast<int>(std::ceil(c.y - r - 0.5)));
    const int jy1 = std::min(area.y1 - 1, static_cast<int>(std::floor(c.y + r - 0.5)));
    for (int j = jy0; j <= jy1; ++j) {
      const double dy = j + 0.5 - c.y;
      const double rem = r2 - dy * dy;
      if (rem < 0.0) continue;
      const double half = std::sqrt(rem);
      int i0 = static_cast<int>(std::ceil(c.x - half - 0.5));
      int i1 = static_cast<int>(std::floor(c.x + half - 0.5));
      // Exact disc test at the span ends guards against sqrt rounding.
      auto inside = [&](int i) {
        const double dx = i + 0.5 - c.x;
        return dx * dx + dy * dy <= r2;
      };
      while (i0 <= i1 && !inside(i0)) ++i0;
      while (i1 >= i0 && !inside(i1)) --i1;
      i0 = std::max(i0, area.x0);
      i1 = std::min(i1, area.x1 - 1);
      if (i0 > i1) continue;
      std::uint8_t* row = mask.data() + static_cast<std::size_t>(j - area.y0) * aw;
      std::fill(row + (i0 - area.x0), row + (i1 - area.x0) + 1, std::uint8_t{1});
    }
  }

  PixelRect bbox{};
  for (int j = area.y0; j < area.y1; ++j) {
    const std::uint8_t* row = mask.data() + static_cast<std::size_t>(j - area.y0) * aw;
    int i = 0;
    while (i < aw) {
      if (!row[i]) {
        ++i;
        continue;
      }
      int k = i;
      while (k < aw && row[k]) ++k;
      cov.spans.push_back({j, area.x0 + i, area.x0 + k});
      bbox = bbox.unite({area.x0 + i, j, area.x0 + k, j + 1});
      i = k;
    }
  }
  cov.bbox = bbox;
  return cov;
}

Coverage stroke_coverage(const StrokeParams& stroke, const BrushProfile& brush, int width_px,
                         int height_px) {
  return stroke_coverage(stroke, brush, width_px, height_px, {0, 0, width_px, height_px});
}

Rgb blend(const Rgb& under, const Rgb& color, double opacity, BlendMode mode) {
  if (mode == BlendMode::opaque_marker)
    return {std::min(under.r, color.r), std::min(under.g, color.g), std::min(under.b, color.b)};
  const float a = static_cast<float>(opacity);
  const float keep = 1.f - a;
  return {a * color.r + keep * under.r, a * color.g + keep * under.g, a * color.b + keep * under.b};
}

void composite(Canvas& canvas, const Coverage& coverage, const Rgb& color, double opacity,
               BlendMode mode, Author author) {
  for (const Span& s : coverage.spans) {
    for (int x = s.x0; x < s.x1; ++x) {
      Rgb& px = canvas.pixels().at(x, s.y);
      px = blend(px, color, opacity, mode);
      Author& who = canvas.author(x, s.y);
      if (who != Author::human) who = author;
    }
  }
}

void paint_stroke(Canvas& canvas, const StrokeParams& stroke, const PaintingSetting& setting,
                  Author author, const PixelRect& clip) {
  const Coverage cov = stroke_coverage(stroke, setting.brush, canvas.width(), canvas.height(), clip);
  composite(canvas, cov, setting.palette.colors[stroke.color_index], stroke.opacity,
            setting.brush.blend_mode, author);
}

namespace {

void require_valid_stroke(const StrokeParams& stroke, const PaintingSetting& setting, int index) {
  const auto violations = validate_stroke(stroke, setting);
  if (violations.empty()) return;
  std::string msg = index >= 0 ? "stroke " + std::to_string(index) + " violates constraints:"
                               : std::string("stroke violates constraints:");
  std::vector<std::string> fields;
  for (const auto& v : violations) {
    msg += " " + v.message + ";";
    fields.push_back(v.field);
  }
  throw ConstraintViolation(msg, std::move(fields), index);
}

}  // namespace

Canvas render_stroke(const Canvas& canvas, const StrokeParams& stroke, const PaintingSetting& setting,
                     Author author) {
  require_valid_stroke(stroke, setting, -1);
  Canvas out = canvas;
  paint_stroke(out, stroke, setting, author, out.bounds());
  return out;
}

Canvas render_plan(const StrokePlan& plan, const Canvas& base, Author author) {
  for (std::size_t i = 0; i < plan.strokes.size(); ++i)
    require_valid_stroke(plan.strokes[i], plan.setting, static_cast<int>(i));
  Canvas out = base;
  for (const StrokeParams& s : plan.strokes) paint_stroke(out, s, plan.setting, author, out.bounds());
  return out;
}

}  // namespace copaint

#include "copaint/stroke.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace copaint {

namespace {

bool in_unit(const Point& p) { return p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0; }

Point clamp_unit(Point p) { return {std::clamp(p.x, 0.0, 1.0), std::clamp(p.y, 0.0, 1.0)}; }

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

Point StrokeParams::at(double t) const {
  const double u = 1.0 - t;
  return {u * u * p0.x + 2 * u * t * p1.x + t * t * p2.x,
          u * u * p0.y + 2 * u * t * p1.y + t * t * p2.y};
}

PaintingSetting PaintingSetting::marker() {
  PaintingSetting s;
  s.media = Media::marker_black;
  s.palette = {{kBlack}, true};
  s.brush = {0.008, 0.03, 0.25, BlendMode::opaque_marker};
  return s;
}

PaintingSetting PaintingSetting::acrylic4() {
  PaintingSetting s;
  s.media = Media::acrylic_4_fixed;
  s.palette = {{{0.10f, 0.10f, 0.12f}, {0.20f, 0.30f, 0.65f}, {0.80f, 0.22f, 0.18f}, {0.95f, 0.85f, 0.35f}},
               true};
  s.brush = {0.01, 0.08, 0.25, BlendMode::alpha_acrylic};
  return s;
}

PaintingSetting PaintingSetting::acrylic12() {
  PaintingSetting s;
  s.media = Media::acrylic_12_adaptive;
  // Placeholder palette until derive_palette fits one to a target.
  s.palette = {{{0.05f, 0.05f, 0.05f},
                {0.25f, 0.15f, 0.45f},
                {0.15f, 0.30f, 0.70f},
                {0.55f, 0.15f, 0.15f},
                {0.20f, 0.45f, 0.25f},
                {0.45f, 0.35f, 0.25f},
                {0.85f, 0.25f, 0.20f},
                {0.50f, 0.50f, 0.50f},
                {0.35f, 0.65f, 0.85f},
                {0.55f, 0.75f, 0.35f},
                {0.95f, 0.60f, 0.25f},
                {0.95f, 0.90f, 0.50f}},
               false};
  s.brush = {0.01, 0.08, 0.25, BlendMode::alpha_acrylic};
  return s;
}

PaintingSetting PaintingSetting::for_media(Media m) {
  switch (m) {
    case Media::acrylic_12_adaptive: return acrylic12();
    case Media::acrylic_4_fixed: return acrylic4();
    case Media::marker_black: return marker();
  }
  return marker();
}

std::string_view to_string(Media m) {
  switch (m) {
    case Media::acrylic_12_adaptive: return "acrylic_12_adaptive";
    case Media::acrylic_4_fixed: return "acrylic_4_fixed";
    case Media::marker_black: return "marker_black";
  }
  return "?";
}

std::string_view to_string(BlendMode b) {
  return b == BlendMode::opaque_marker ? "opaque_marker" : "alpha_acrylic";
}

std::string_view to_string(Author a) {
  switch (a) {
    case Author::blank: return "blank";
    case Author::human: return "human";
    case Author::robot: return "robot";
  }
  return "?";
}

Media parse_media(std::string_view s) {
  if (s == "acrylic_12_adaptive" || s == "acrylic12") return Media::acrylic_12_adaptive;
  if (s == "acrylic_4_fixed" || s == "acrylic4") return Media::acrylic_4_fixed;
  if (s == "marker_black" || s == "marker") return Media::marker_black;
  throw FormatError("unknown media '" + std::string(s) + "'");
}

BlendMode parse_blend_mode(std::string_view s) {
  if (s == "opaque_marker") return BlendMode::opaque_marker;
  if (s == "alpha_acrylic") return BlendMode::alpha_acrylic;
  throw FormatError("unknown blend mode '" + std::string(s) + "'");
}

std::vector<std::string> validate_setting(const PaintingSetting& s) {
  std::vector<std::string> out;
  const auto& b = s.brush;
  if (!(b.min_width > 0.0 && b.min_width <= b.max_width && b.max_width <= 0.25))
    out.push_back("brush widths must satisfy 0 < min_width <= max_width <= 0.25");
  if (!(b.stamp_spacing > 0.0 && b.stamp_spacing <= 1.0))
    out.push_back("brush stamp_spacing must lie in (0, 1]");
  if (s.palette.colors.empty() || s.palette.colors.size() > kMaxPaletteColors)
    out.push_back("palette must hold 1..12 colors");
  for (const Rgb& c : s.palette.colors)
    for (float v : {c.r, c.g, c.b})
      if (!(v >= 0.f && v <= 1.f)) {
        out.push_back("palette channel outside [0,1]");
        break;
      }
  for (std::size_t i = 0; i < s.palette.colors.size(); ++i)
    for (std::size_t j = i + 1; j < s.palette.colors.size(); ++j)
      if (s.palette.colors[i] == s.palette.colors[j]) out.push_back("palette contains duplicate colors");
  if (s.stroke_budget < 0) out.push_back("stroke_budget must be non-negative");

  switch (s.media) {
    case Media::acrylic_12_adaptive:
      if (s.palette.fixed) out.push_back("acrylic_12_adaptive palette must not be fixed");
      break;
    case Media::acrylic_4_fixed:
      if (s.palette.colors.size() != 4 || !s.palette.fixed)
        out.push_back("acrylic_4_fixed requires a fixed 4-color palette");
      break;
    case Media::marker_black:
      if (s.palette.colors.size() != 1 || s.palette.colors[0] != kBlack || !s.palette.fixed)
        out.push_back("marker_black requires the fixed palette [black]");
      if (b.blend_mode != BlendMode::opaque_marker) out.push_back("marker_black requires opaque_marker blending");
      break;
  }
  return out;
}

void require_valid_setting(const PaintingSetting& setting) {
  auto problems = validate_setting(setting);
  if (problems.empty()) return;
  std::string msg = "invalid painting setting:";
  for (const auto& p : problems) msg += " " + p + ";";
  throw ConstraintViolation(msg, {"setting"});
}

std::vector<StrokeViolation> validate_stroke(const StrokeParams& st, const PaintingSetting& s) {
  std::vector<StrokeViolation> out;
  const std::pair<const char*, const Point*> pts[] = {{"p0", &st.p0}, {"p1", &st.p1}, {"p2", &st.p2}};
  for (const auto& [name, p] : pts) {
    if (!in_unit(*p))
      out.push_back({name, std::string("control point ") + name + " = (" + fmt(p->x) + ", " + fmt(p->y) +
                               ") out of bounds [0,1]^2"});
  }
  if (!(st.width >= s.brush.min_width && st.width <= s.brush.max_width))
    out.push_back({"width", "width " + fmt(st.width) + " outside brush range [" + fmt(s.brush.min_width) +
                                ", " + fmt(s.brush.max_width) + "]"});
  if (st.color_index < 0 || static_cast<std::size_t>(st.color_index) >= s.palette.size())
    out.push_back({"color_index", "color index " + std::to_string(st.color_index) +
                                      " outside palette of size " + std::to_string(s.palette.size())});
  if (!(st.opacity > 0.0 && st.opacity <= 1.0))
    out.push_back({"opacity", "opacity " + fmt(st.opacity) + " outside (0, 1]"});
  if (s.media == Media::marker_black) {
    if (st.opacity != 1.0 && st.opacity > 0.0 && st.opacity <= 1.0)
      out.push_back({"opacity", "marker strokes require opacity 1"});
    if (st.color_index != 0 && st.color_index >= 0 && static_cast<std::size_t>(st.color_index) < s.palette.size())
      out.push_back({"color_index", "marker strokes require color index 0"});
  }
  return out;
}

StrokeParams clamp_stroke(StrokeParams st, const PaintingSetting& s) {
  st.p0 = clamp_unit(st.p0);
  st.p1 = clamp_unit(st.p1);
  st.p2 = clamp_unit(st.p2);
  st.width = std::clamp(st.width, s.brush.min_width, s.brush.max_width);
  st.opacity = std::clamp(st.opacity, 1e-3, 1.0);
  const int max_index = std::max(0, static_cast<int>(s.palette.size()) - 1);
  st.color_index = std::clamp(st.color_index, 0, max_index);
  if (s.media == Media::marker_black) {
    st.opacity = 1.0;
    st.color_index = 0;
  }
  return st;
}

void Canvas::copy_region(const Canvas& src, const PixelRect& rect) {
  const PixelRect r = rect.intersect(bounds());
  for (int y = r.y0; y < r.y1; ++y) {
    const std::size_t row = static_cast<std::size_t>(y) * width();
    std::copy(src.pixels_.pixels().begin() + row + r.x0, src.pixels_.pixels().begin() + row + r.x1,
              pixels_.pixels().begin() + row + r.x0);
    std::copy(src.authorship_.begin() + row + r.x0, src.authorship_.begin() + row + r.x1,
              authorship_.begin() + row + r.x0);
  }
}

}  // namespace copaint

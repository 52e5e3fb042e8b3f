#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "copaint/image.hpp"

namespace copaint {

/// Normalized canvas coordinate: x in [0,1] spans the width, y the height.
struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

/// One quadratic Bezier brush stroke. Width is a fraction of canvas height.
struct StrokeParams {
  Point p0;
  Point p1;
  Point p2;
  double width = 0.02;
  int color_index = 0;
  double opacity = 1.0;

  /// Bezier evaluation at parameter t in [0,1].
  Point at(double t) const;
  /// The path point at t = 0.5; the stroke's location for region membership.
  Point midpoint() const { return at(0.5); }

  friend bool operator==(const StrokeParams&, const StrokeParams&) = default;
};

enum class BlendMode { opaque_marker, alpha_acrylic };

struct BrushProfile {
  double min_width = 0.01;
  double max_width = 0.05;
  double stamp_spacing = 0.25;
  BlendMode blend_mode = BlendMode::alpha_acrylic;

  friend bool operator==(const BrushProfile&, const BrushProfile&) = default;
};

struct Palette {
  std::vector<Rgb> colors;
  bool fixed = false;

  std::size_t size() const { return colors.size(); }
  friend bool operator==(const Palette&, const Palette&) = default;
};

enum class Media { acrylic_12_adaptive, acrylic_4_fixed, marker_black };

inline constexpr int kDefaultStrokeBudget = 35;
inline constexpr std::size_t kMaxPaletteColors = 12;

struct PaintingSetting {
  Media media = Media::marker_black;
  Palette palette;
  BrushProfile brush;
  int stroke_budget = kDefaultStrokeBudget;

  /// Canonical setting for each media kind.
  static PaintingSetting marker();
  static PaintingSetting acrylic4();
  static PaintingSetting acrylic12();
  static PaintingSetting for_media(Media m);

  friend bool operator==(const PaintingSetting&, const PaintingSetting&) = default;
};

std::string_view to_string(Media m);
std::string_view to_string(BlendMode b);
Media parse_media(std::string_view s);  // accepts enum names and the CLI short forms
BlendMode parse_blend_mode(std::string_view s);

/// Returns a list of setting invariant violations; empty when valid.
std::vector<std::string> validate_setting(const PaintingSetting& setting);
/// Throws ConstraintViolation if the setting is invalid.
void require_valid_setting(const PaintingSetting& setting);

struct StrokeViolation {
  std::string field;
  std::string message;

  friend bool operator==(const StrokeViolation&, const StrokeViolation&) = default;
};

/// All violated stroke invariants under `setting`. Never clamps.
std::vector<StrokeViolation> validate_stroke(const StrokeParams& stroke,
                                             const PaintingSetting& setting);

/// Clamps control points, width and opacity into range and forces marker
/// constraints. color_index is clamped to the palette.
StrokeParams clamp_stroke(StrokeParams stroke, const PaintingSetting& setting);

struct StrokePlan {
  std::vector<StrokeParams> strokes;
  PaintingSetting setting;
  std::uint64_t seed = 0;
  std::string source_tag;

  friend bool operator==(const StrokePlan&, const StrokePlan&) = default;
};

enum class Author : std::uint8_t { blank = 0, human = 1, robot = 2 };

std::string_view to_string(Author a);

/// Raster plus per-pixel authorship. Authorship is `blank` iff the pixel was
/// never touched by a stroke.
class Canvas {
 public:
  Canvas() = default;
  Canvas(int width, int height, Rgb fill = kWhite)
      : pixels_(width, height, fill), authorship_(pixels_.pixel_count(), Author::blank) {}
  /// Wraps an existing image (e.g. a photographed canvas). Authorship starts
  /// blank.
  explicit Canvas(Image pixels)
      : pixels_(std::move(pixels)), authorship_(pixels_.pixel_count(), Author::blank) {}

  int width() const { return pixels_.width(); }
  int height() const { return pixels_.height(); }
  PixelRect bounds() const { return pixels_.bounds(); }

  const Image& pixels() const { return pixels_; }
  Image& pixels() { return pixels_; }

  Author author(int x, int y) const { return authorship_[static_cast<std::size_t>(y) * width() + x]; }
  Author& author(int x, int y) { return authorship_[static_cast<std::size_t>(y) * width() + x]; }
  const std::vector<Author>& authorship() const { return authorship_; }

  /// Copies pixels and authorship inside `rect` from `src` (same size).
  void copy_region(const Canvas& src, const PixelRect& rect);

  friend bool operator==(const Canvas&, const Canvas&) = default;

 private:
  Image pixels_;
  std::vector<Author> authorship_;
};

}  // namespace copaint

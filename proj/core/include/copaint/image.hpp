#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "copaint/errors.hpp"

namespace copaint {

struct Rgb {
  float r = 0.f;
  float g = 0.f;
  float b = 0.f;

  friend bool operator==(const Rgb&, const Rgb&) = default;
};

inline constexpr Rgb kWhite{1.f, 1.f, 1.f};
inline constexpr Rgb kBlack{0.f, 0.f, 0.f};

inline double luminance(const Rgb& c) { return 0.299 * c.r + 0.587 * c.g + 0.114 * c.b; }

/// Half-open pixel rectangle [x0, x1) x [y0, y1).
struct PixelRect {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  bool empty() const { return x1 <= x0 || y1 <= y0; }
  int width() const { return std::max(0, x1 - x0); }
  int height() const { return std::max(0, y1 - y0); }

  PixelRect intersect(const PixelRect& o) const {
    return {std::max(x0, o.x0), std::max(y0, o.y0), std::min(x1, o.x1), std::min(y1, o.y1)};
  }
  PixelRect unite(const PixelRect& o) const {
    if (empty()) return o;
    if (o.empty()) return *this;
    return {std::min(x0, o.x0), std::min(y0, o.y0), std::max(x1, o.x1), std::max(y1, o.y1)};
  }
  PixelRect inflate(int n) const { return {x0 - n, y0 - n, x1 + n, y1 + n}; }
  bool intersects(const PixelRect& o) const { return !intersect(o).empty(); }

  friend bool operator==(const PixelRect&, const PixelRect&) = default;
};

/// Row-major RGB raster with channel values in [0,1].
class Image {
 public:
  Image() = default;
  Image(int width, int height, Rgb fill = kWhite);

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return width_ == 0 || height_ == 0; }
  PixelRect bounds() const { return {0, 0, width_, height_}; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }

  const Rgb& at(int x, int y) const { return pixels_[index(x, y)]; }
  Rgb& at(int x, int y) { return pixels_[index(x, y)]; }
  const Rgb& at_clamped(int x, int y) const {
    return at(std::clamp(x, 0, width_ - 1), std::clamp(y, 0, height_ - 1));
  }

  const std::vector<Rgb>& pixels() const { return pixels_; }
  std::vector<Rgb>& pixels() { return pixels_; }

  bool same_size(const Image& o) const { return width_ == o.width_ && height_ == o.height_; }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width_ + x; }

  int width_ = 0;
  int height_ = 0;
  std::vector<Rgb> pixels_;
};

/// Single-channel float field, used for saliency maps and intermediate
/// gradient data.
class ScalarField {
 public:
  ScalarField() = default;
  ScalarField(int width, int height, double fill = 0.0)
      : width_(width), height_(height), values_(static_cast<std::size_t>(width) * height, fill) {}

  int width() const { return width_; }
  int height() const { return height_; }
  double at(int x, int y) const { return values_[static_cast<std::size_t>(y) * width_ + x]; }
  double& at(int x, int y) { return values_[static_cast<std::size_t>(y) * width_ + x]; }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<double> values_;
};

/// Integer region labels, contiguous from 0.
struct LabelMap {
  int width = 0;
  int height = 0;
  std::vector<int> labels;

  int at(int x, int y) const { return labels[static_cast<std::size_t>(y) * width + x]; }
  int region_count() const;
};

void require_same_size(const Image& a, const Image& b, const char* what);

/// Bilinear resize into a width x height frame, preserving aspect ratio and
/// letterboxing the remainder with white.
Image resize_letterbox(const Image& src, int width, int height);

/// Sobel gradients of luminance, edge-clamped, scaled so a unit step edge has
/// magnitude 1.
struct Gradients {
  ScalarField gx;
  ScalarField gy;
};
Gradients sobel(const Image& img);
ScalarField gradient_magnitude(const Image& img);

/// Separable Gaussian blur with edge clamping. sigma <= 0 returns the input.
ScalarField gaussian_blur(const ScalarField& f, double sigma);

}  // namespace copaint

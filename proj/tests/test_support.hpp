#pragma once

// Shared generators for unit and acceptance tests.

#include <cmath>
#include <filesystem>
#include <string>

#include <unistd.h>
#include <numbers>

#include "copaint/render.hpp"
#include "copaint/rng.hpp"
#include "copaint/stroke.hpp"

namespace copaint::testing {

inline StrokeParams random_stroke(Rng& rng, const PaintingSetting& s) {
  StrokeParams st;
  st.p0 = {rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)};
  const double len = rng.uniform(0.08, 0.3);
  const double theta = rng.uniform(0.0, 2 * std::numbers::pi);
  st.p2 = {st.p0.x + len * std::cos(theta), st.p0.y + len * std::sin(theta)};
  const double bend = rng.uniform(-0.3, 0.3);
  st.p1 = {(st.p0.x + st.p2.x) / 2 - (st.p2.y - st.p0.y) * bend, (st.p0.y + st.p2.y) / 2 + (st.p2.x - st.p0.x) * bend};
  st.width = rng.log_uniform(s.brush.min_width, s.brush.max_width);
  st.color_index = static_cast<int>(rng.below(s.palette.size()));
  st.opacity = rng.uniform(0.5, 1.0);
  return clamp_stroke(st, s);
}

inline StrokePlan random_plan(std::uint64_t seed, int n, const PaintingSetting& s) {
  Rng rng(seed);
  StrokePlan p;
  p.setting = s;
  p.seed = seed;
  p.source_tag = "random";
  for (int i = 0; i < n; ++i) p.strokes.push_back(random_stroke(rng, s));
  return p;
}

inline Image random_image(Rng& rng, int w, int h) {
  Image img(w, h);
  for (auto& px : img.pixels())
    px = {static_cast<float>(rng.uniform()), static_cast<float>(rng.uniform()), static_cast<float>(rng.uniform())};
  return img;
}

/// Blocky image with a few random flat rectangles; looks more like content
/// than per-pixel noise.
inline Image random_blocks(Rng& rng, int w, int h, int rects = 6) {
  Image img(w, h, {static_cast<float>(rng.uniform()), static_cast<float>(rng.uniform()),
                   static_cast<float>(rng.uniform())});
  for (int k = 0; k < rects; ++k) {
    const int x0 = static_cast<int>(rng.below(w)), y0 = static_cast<int>(rng.below(h));
    const int x1 = std::min(w, x0 + 1 + static_cast<int>(rng.below(w / 2 + 1)));
    const int y1 = std::min(h, y0 + 1 + static_cast<int>(rng.below(h / 2 + 1)));
    const Rgb c{static_cast<float>(rng.uniform()), static_cast<float>(rng.uniform()), static_cast<float>(rng.uniform())};
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) img.at(x, y) = c;
  }
  return img;
}

/// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  TempDir() {
    static int counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("copaint_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

inline double mean_luminance(const Image& img) {
  double s = 0;
  for (const auto& p : img.pixels()) s += luminance(p);
  return s / static_cast<double>(img.pixel_count());
}

}  // namespace copaint::testing

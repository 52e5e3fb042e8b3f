#include "copaint/palette.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>

#include "kmeans.hpp"

namespace copaint {

namespace {

double dist(const Rgb& a, const Rgb& b) {
  return std::sqrt(double(a.r - b.r) * (a.r - b.r) + double(a.g - b.g) * (a.g - b.g) +
                   double(a.b - b.b) * (a.b - b.b));
}

}  // namespace

Palette derive_palette(const Image& target, const PaintingSetting& setting, std::uint64_t seed) {
  if (setting.media != Media::acrylic_12_adaptive) return setting.palette;
  if (target.empty()) throw FormatError("derive_palette: empty target image");

  auto km = detail::kmeans_rgb(target.pixels(), static_cast<int>(kMaxPaletteColors), seed);
  std::vector<Rgb> centroids = km.centroids;
  std::sort(centroids.begin(), centroids.end(), [](const Rgb& a, const Rgb& b) {
    const double la = luminance(a), lb = luminance(b);
    if (la != lb) return la < lb;
    return std::tie(a.r, a.g, a.b) < std::tie(b.r, b.g, b.b);
  });

  Palette out;
  out.fixed = false;
  for (const Rgb& c : centroids) {
    const bool dup = std::any_of(out.colors.begin(), out.colors.end(),
                                 [&](const Rgb& k) { return dist(k, c) < kPaletteMergeDistance; });
    if (!dup) out.colors.push_back(c);
  }
  return out;
}

int nearest_palette_index(const Palette& palette, const Rgb& c) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < palette.colors.size(); ++i) {
    const double d = dist(palette.colors[i], c);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

}  // namespace copaint

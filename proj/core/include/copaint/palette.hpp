#pragma once

#include <cstdint>

#include "copaint/stroke.hpp"

namespace copaint {

inline constexpr std::uint64_t kPaletteSeed = 0x9a1e77e5eedULL;
/// Derived centroids closer than this (L2 in RGB) are merged.
inline constexpr double kPaletteMergeDistance = 0.01;

/// Adaptive media: k-means (k = 12) over the target's pixels, near-duplicate
/// centroids merged, sorted by ascending luminance. Fixed media return the
/// setting's palette unchanged.
Palette derive_palette(const Image& target, const PaintingSetting& setting,
                       std::uint64_t seed = kPaletteSeed);

/// Index of the palette color closest (L2) to `c`; ties go to the lower index.
int nearest_palette_index(const Palette& palette, const Rgb& c);

}  // namespace copaint

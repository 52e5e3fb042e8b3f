#pragma once

#include <optional>
#include <vector>

#include "copaint/stroke.hpp"

namespace copaint {

struct LossConfig {
  double pixel_weight = 1.0;
  double edge_weight = 0.5;
  std::vector<int> scales{1, 2, 4};
  /// Extra multiplier on terms at human-authored pixels whose color changed
  /// relative to the baseline canvas.
  double preserve_penalty = 10.0;
};

void require_valid(const LossConfig& cfg);

/// pixel_weight * mean over scales of block-averaged MSE
///   + edge_weight * MSE of Sobel gradient magnitudes.
/// With a baseline, terms touching human pixels of the baseline whose color
/// differs in `canvas` are weighted by (1 + preserve_penalty).
double compute_loss(const Canvas& canvas, const Image& target, const LossConfig& cfg,
                    const Canvas* baseline = nullptr);

/// Precomputed target side of compute_loss, supporting local re-evaluation:
/// `local(c, r)` sums exactly the loss terms that read pixels inside `r`, so
/// for two canvases differing only inside `r` the loss difference equals the
/// difference of their `local` values (up to rounding).
class LossField {
 public:
  LossField(const Image& target, LossConfig cfg, std::optional<Canvas> baseline = std::nullopt);

  double total(const Canvas& canvas) const;
  double local(const Canvas& canvas, const PixelRect& changed) const;

  const Image& target() const { return target_; }
  const LossConfig& config() const { return cfg_; }

 private:
  struct Level {
    int scale = 1;
    int cols = 0;
    int rows = 0;
    std::vector<Rgb> target_means;
  };

  double weight(const Canvas& c, int x, int y) const;

  Image target_;
  LossConfig cfg_;
  std::optional<Canvas> baseline_;
  std::vector<Level> levels_;
  std::vector<double> target_edges_;
};

}  // namespace copaint

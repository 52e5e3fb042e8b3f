#include "copaint/loss.hpp"

#include <algorithm>
#include <cmath>

namespace copaint {

namespace {

/// Mean color of the in-bounds pixels of block (bx, by) at `scale`.
Rgb block_mean(const Image& img, int scale, int bx, int by) {
  const int x0 = bx * scale, y0 = by * scale;
  const int x1 = std::min(x0 + scale, img.width()), y1 = std::min(y0 + scale, img.height());
  if (scale == 1) return img.at(x0, y0);
  double r = 0, g = 0, b = 0;
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) {
      const Rgb& c = img.at(x, y);
      r += c.r;
      g += c.g;
      b += c.b;
    }
  const double n = static_cast<double>((x1 - x0) * (y1 - y0));
  return {static_cast<float>(r / n), static_cast<float>(g / n), static_cast<float>(b / n)};
}

double sq_diff(const Rgb& a, const Rgb& b) {
  const double dr = double(a.r) - b.r, dg = double(a.g) - b.g, db = double(a.b) - b.b;
  return dr * dr + dg * dg + db * db;
}

/// Sobel magnitudes (unit step edge -> 1) for every pixel of `out_rect`,
/// reading luminance with edge clamping. Row-major into `out`.
void edge_magnitudes(const Image& img, const PixelRect& out_rect, std::vector<double>& out) {
  const PixelRect lum_rect = out_rect.inflate(1);
  const int lw = lum_rect.width();
  std::vector<double> lum(static_cast<std::size_t>(lw) * lum_rect.height());
  for (int y = lum_rect.y0; y < lum_rect.y1; ++y)
    for (int x = lum_rect.x0; x < lum_rect.x1; ++x)
      lum[static_cast<std::size_t>(y - lum_rect.y0) * lw + (x - lum_rect.x0)] = luminance(img.at_clamped(x, y));
  auto l = [&](int x, int y) { return lum[static_cast<std::size_t>(y - lum_rect.y0) * lw + (x - lum_rect.x0)]; };

  out.resize(static_cast<std::size_t>(out_rect.width()) * out_rect.height());
  std::size_t k = 0;
  for (int y = out_rect.y0; y < out_rect.y1; ++y)
    for (int x = out_rect.x0; x < out_rect.x1; ++x) {
      const double gx = (l(x + 1, y - 1) + 2 * l(x + 1, y) + l(x + 1, y + 1)) -
                        (l(x - 1, y - 1) + 2 * l(x - 1, y) + l(x - 1, y + 1));
      const double gy = (l(x - 1, y + 1) + 2 * l(x, y + 1) + l(x + 1, y + 1)) -
                        (l(x - 1, y - 1) + 2 * l(x, y - 1) + l(x + 1, y - 1));
      out[k++] = std::sqrt(gx * gx + gy * gy) / 4.0;
    }
}

}  // namespace

void require_valid(const LossConfig& cfg) {
  if (cfg.pixel_weight < 0 || cfg.edge_weight < 0 || cfg.preserve_penalty < 0)
    throw ConstraintViolation("loss weights must be non-negative", {"loss"});
  if (!(cfg.pixel_weight > 0 || cfg.edge_weight > 0))
    throw ConstraintViolation("at least one of pixel_weight, edge_weight must be positive", {"loss"});
  if (cfg.scales.empty()) throw ConstraintViolation("loss scales must be non-empty", {"scales"});
  for (int s : cfg.scales)
    if (s < 1) throw ConstraintViolation("loss scales must be >= 1", {"scales"});
}

LossField::LossField(const Image& target, LossConfig cfg, std::optional<Canvas> baseline)
    : target_(target), cfg_(std::move(cfg)), baseline_(std::move(baseline)) {
  require_valid(cfg_);
  if (target_.empty()) throw FormatError("loss target is empty");
  if (baseline_) require_same_size(baseline_->pixels(), target_, "loss baseline");
  // Without human pixels (or a penalty) every weight is 1.
  if (baseline_ && (cfg_.preserve_penalty == 0.0 ||
                    std::none_of(baseline_->authorship().begin(), baseline_->authorship().end(),
                                 [](Author a) { return a == Author::human; })))
    baseline_.reset();
  for (int s : cfg_.scales) {
    Level lv;
    lv.scale = s;
    lv.cols = (target_.width() + s - 1) / s;
    lv.rows = (target_.height() + s - 1) / s;
    lv.target_means.reserve(static_cast<std::size_t>(lv.cols) * lv.rows);
    for (int by = 0; by < lv.rows; ++by)
      for (int bx = 0; bx < lv.cols; ++bx) lv.target_means.push_back(block_mean(target_, s, bx, by));
    levels_.push_back(std::move(lv));
  }
  edge_magnitudes(target_, target_.bounds(), target_edges_);
}

double LossField::weight(const Canvas& c, int x, int y) const {
  if (!baseline_ || cfg_.preserve_penalty == 0.0) return 1.0;
  if (baseline_->author(x, y) != Author::human) return 1.0;
  return c.pixels().at(x, y) == baseline_->pixels().at(x, y) ? 1.0 : 1.0 + cfg_.preserve_penalty;
}

double LossField::local(const Canvas& canvas, const PixelRect& changed) const {
  require_same_size(canvas.pixels(), target_, "compute_loss");
  const PixelRect bounds = target_.bounds();
  const PixelRect c = changed.intersect(bounds);
  if (c.empty()) return 0.0;
  const Image& img = canvas.pixels();
  double total = 0.0;

  // Per-pixel weights over everything the block and edge sums below read.
  PixelRect wrect = c.inflate(1);
  for (const Level& lv : levels_) {
    const int s = lv.scale;
    wrect = wrect.unite({c.x0 / s * s, c.y0 / s * s, ((c.x1 - 1) / s + 1) * s, ((c.y1 - 1) / s + 1) * s});
  }
  wrect = wrect.intersect(bounds);
  std::vector<double> weights;
  if (baseline_) {
    weights.reserve(static_cast<std::size_t>(wrect.width()) * wrect.height());
    for (int y = wrect.y0; y < wrect.y1; ++y)
      for (int x = wrect.x0; x < wrect.x1; ++x) weights.push_back(weight(canvas, x, y));
  }
  auto w_at = [&](int x, int y) {
    return weights.empty() ? 1.0 : weights[static_cast<std::size_t>(y - wrect.y0) * wrect.width() + (x - wrect.x0)];
  };

  if (cfg_.pixel_weight > 0.0) {
    double pixel_sum = 0.0;
    for (const Level& lv : levels_) {
      const int s = lv.scale;
      const int bx0 = c.x0 / s, bx1 = (c.x1 - 1) / s;
      const int by0 = c.y0 / s, by1 = (c.y1 - 1) / s;
      double level_sum = 0.0;
      for (int by = by0; by <= by1; ++by)
        for (int bx = bx0; bx <= bx1; ++bx) {
          double w = 1.0;
          if (baseline_) {
            const int x0 = bx * s, y0 = by * s;
            const int x1 = std::min(x0 + s, img.width()), y1 = std::min(y0 + s, img.height());
            double wsum = 0.0;
            for (int y = y0; y < y1; ++y)
              for (int x = x0; x < x1; ++x) wsum += w_at(x, y);
            w = wsum / ((x1 - x0) * (y1 - y0));
          }
          level_sum += w * sq_diff(block_mean(img, s, bx, by), lv.target_means[static_cast<std::size_t>(by) * lv.cols + bx]);
        }
      pixel_sum += level_sum / (3.0 * lv.cols * lv.rows);
    }
    total += cfg_.pixel_weight * pixel_sum / static_cast<double>(levels_.size());
  }

  if (cfg_.edge_weight > 0.0) {
    const PixelRect e = c.inflate(1).intersect(bounds);
    std::vector<double> mags;
    edge_magnitudes(img, e, mags);
    double edge_sum = 0.0;
    std::size_t k = 0;
    for (int y = e.y0; y < e.y1; ++y)
      for (int x = e.x0; x < e.x1; ++x) {
        const double d = mags[k++] - target_edges_[static_cast<std::size_t>(y) * target_.width() + x];
        edge_sum += w_at(x, y) * d * d;
      }
    total += cfg_.edge_weight * edge_sum / static_cast<double>(target_.pixel_count());
  }
  return total;
}

double LossField::total(const Canvas& canvas) const { return local(canvas, target_.bounds()); }

double compute_loss(const Canvas& canvas, const Image& target, const LossConfig& cfg, const Canvas* baseline) {
  require_same_size(canvas.pixels(), target, "compute_loss");
  std::optional<Canvas> base;
  if (baseline) base = *baseline;
  return LossField(target, cfg, std::move(base)).total(canvas);
}

}  // namespace copaint

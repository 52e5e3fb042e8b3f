#include "copaint/image.hpp"

#include <cmath>
#include <set>
#include <string>

namespace copaint {

Image::Image(int width, int height, Rgb fill) : width_(width), height_(height) {
  if (width < 0 || height < 0) throw Error("image dimensions must be non-negative");
  pixels_.assign(static_cast<std::size_t>(width) * height, fill);
}

int LabelMap::region_count() const {
  std::set<int> seen(labels.begin(), labels.end());
  return static_cast<int>(seen.size());
}

void require_same_size(const Image& a, const Image& b, const char* what) {
  if (!a.same_size(b)) {
    throw DimensionMismatch(std::string(what) + ": dimension mismatch (" + std::to_string(a.width()) +
                            "x" + std::to_string(a.height()) + " vs " + std::to_string(b.width()) +
                            "x" + std::to_string(b.height()) + ")");
  }
}

Image resize_letterbox(const Image& src, int width, int height) {
  if (src.empty()) throw FormatError("cannot resize an empty image");
  if (src.width() == width && src.height() == height) return src;

  Image out(width, height, kWhite);
  const double scale = std::min(static_cast<double>(width) / src.width(),
                                static_cast<double>(height) / src.height());
  const int fit_w = std::max(1, static_cast<int>(std::lround(src.width() * scale)));
  const int fit_h = std::max(1, static_cast<int>(std::lround(src.height() * scale)));
  const int off_x = (width - fit_w) / 2;
  const int off_y = (height - fit_h) / 2;
  const double sx = static_cast<double>(src.width()) / fit_w;
  const double sy = static_cast<double>(src.height()) / fit_h;

  for (int y = 0; y < fit_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, src.height() - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, src.height() - 1);
    const double ty = fy - y0;
    for (int x = 0; x < fit_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, src.width() - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, src.width() - 1);
      const double tx = fx - x0;
      auto lerp2 = [&](float Rgb::*ch) {
        const double top = src.at(x0, y0).*ch * (1 - tx) + src.at(x1, y0).*ch * tx;
        const double bot = src.at(x0, y1).*ch * (1 - tx) + src.at(x1, y1).*ch * tx;
        return static_cast<float>(top * (1 - ty) + bot * ty);
      };
      out.at(off_x + x, off_y + y) = {lerp2(&Rgb::r), lerp2(&Rgb::g), lerp2(&Rgb::b)};
    }
  }
  return out;
}

Gradients sobel(const Image& img) {
  const int w = img.width();
  const int h = img.height();
  ScalarField lum(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) lum.at(x, y) = luminance(img.at(x, y));

  auto l = [&](int x, int y) { return lum.at(std::clamp(x, 0, w - 1), std::clamp(y, 0, h - 1)); };
  Gradients g{ScalarField(w, h), ScalarField(w, h)};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double gx = (l(x + 1, y - 1) + 2 * l(x + 1, y) + l(x + 1, y + 1)) -
                        (l(x - 1, y - 1) + 2 * l(x - 1, y) + l(x - 1, y + 1));
      const double gy = (l(x - 1, y + 1) + 2 * l(x, y + 1) + l(x + 1, y + 1)) -
                        (l(x - 1, y - 1) + 2 * l(x, y - 1) + l(x + 1, y - 1));
      g.gx.at(x, y) = gx / 4.0;
      g.gy.at(x, y) = gy / 4.0;
    }
  }
  return g;
}

ScalarField gradient_magnitude(const Image& img) {
  const Gradients g = sobel(img);
  ScalarField m(img.width(), img.height());
  for (std::size_t i = 0; i < m.values().size(); ++i)
    m.values()[i] = std::hypot(g.gx.values()[i], g.gy.values()[i]);
  return m;
}

ScalarField gaussian_blur(const ScalarField& f, double sigma) {
  if (sigma <= 0.0 || f.values().empty()) return f;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    sum += kernel[i + radius];
  }
  for (double& k : kernel) k /= sum;

  const int w = f.width();
  const int h = f.height();
  ScalarField tmp(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * f.at(std::clamp(x + i, 0, w - 1), y);
      tmp.at(x, y) = acc;
    }
  ScalarField out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * tmp.at(x, std::clamp(y + i, 0, h - 1));
      out.at(x, y) = acc;
    }
  return out;
}

}  // namespace copaint

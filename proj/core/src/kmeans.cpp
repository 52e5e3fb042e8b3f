#include "kmeans.hpp"

#include <limits>

#include "copaint/rng.hpp"

namespace copaint::detail {

namespace {

double dist2(const Rgb& a, const Rgb& b) {
  const double dr = a.r - b.r, dg = a.g - b.g, db = a.b - b.b;
  return dr * dr + dg * dg + db * db;
}

int nearest(const std::vector<Rgb>& centroids, const Rgb& c) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < centroids.size(); ++i) {
    const double d = dist2(centroids[i], c);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

}  // namespace

KMeansResult kmeans_rgb(const std::vector<Rgb>& colors, int k, std::uint64_t seed, int max_iters) {
  KMeansResult res;
  if (colors.empty() || k <= 0) return res;
  Rng rng(seed);

  // k-means++ seeding.
  std::vector<double> d2(colors.size(), std::numeric_limits<double>::infinity());
  res.centroids.push_back(colors[rng.below(colors.size())]);
  while (static_cast<int>(res.centroids.size()) < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < colors.size(); ++i) {
      d2[i] = std::min(d2[i], dist2(colors[i], res.centroids.back()));
      total += d2[i];
    }
    if (total <= 0.0) {
      res.centroids.push_back(res.centroids.front());
      continue;
    }
    double pick = rng.uniform() * total;
    std::size_t chosen = colors.size() - 1;
    for (std::size_t i = 0; i < colors.size(); ++i) {
      pick -= d2[i];
      if (pick < 0.0 && d2[i] > 0.0) {
        chosen = i;
        break;
      }
    }
    res.centroids.push_back(colors[chosen]);
  }

  res.assignment.assign(colors.size(), 0);
  for (int iter = 0; iter < max_iters; ++iter) {
    bool changed = iter == 0;
    for (std::size_t i = 0; i < colors.size(); ++i) {
      const int a = nearest(res.centroids, colors[i]);
      if (a != res.assignment[i]) changed = true;
      res.assignment[i] = a;
    }
    std::vector<double> sum(3 * k, 0.0);
    std::vector<std::size_t> count(k, 0);
    for (std::size_t i = 0; i < colors.size(); ++i) {
      const int a = res.assignment[i];
      sum[3 * a] += colors[i].r;
      sum[3 * a + 1] += colors[i].g;
      sum[3 * a + 2] += colors[i].b;
      ++count[a];
    }
    for (int c = 0; c < k; ++c) {
      if (count[c] == 0) continue;  // empty cluster keeps its centroid
      const double n = static_cast<double>(count[c]);
      res.centroids[c] = {static_cast<float>(sum[3 * c] / n), static_cast<float>(sum[3 * c + 1] / n),
                          static_cast<float>(sum[3 * c + 2] / n)};
    }
    if (!changed) break;
  }
  return res;
}

}  // namespace copaint::detail

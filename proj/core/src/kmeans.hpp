#pragma once

#include <cstdint>
#include <vector>

#include "copaint/image.hpp"

namespace copaint::detail {

struct KMeansResult {
  std::vector<Rgb> centroids;
  std::vector<int> assignment;  // per input color, index into centroids
};

/// Lloyd's k-means in RGB with k-means++ seeding from a seeded Rng. Once all
/// distinct colors have been picked as seeds, further seeds duplicate the
/// first one. Ties in assignment go to the lowest centroid index.
KMeansResult kmeans_rgb(const std::vector<Rgb>& colors, int k, std::uint64_t seed, int max_iters = 30);

}  // namespace copaint::detail

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "copaint/image.hpp"

namespace copaint {

/// Maps images to unit vectors. The builtin descriptor is hermetic; the
/// http kind POSTs a PNG and expects {"embedding": [...]} back.
struct EmbeddingProvider {
  enum class Kind { builtin, http };
  Kind kind = Kind::builtin;
  std::string endpoint;
  double timeout_s = 30.0;
  /// Set when the service also scores image-text similarity: multipart POST
  /// {caption, image PNG} to endpoint + "/text-score", answer {"score": x}.
  bool text_capable = false;

  static EmbeddingProvider builtin() { return {}; }
  static EmbeddingProvider http(std::string url, double timeout_s = 30.0, bool text_capable = false);
};

/// "builtin" or an http URL.
EmbeddingProvider parse_embedding_provider(const std::string& spec);

inline constexpr int kEmbeddingGrid = 4;
inline constexpr int kColorBins = 8;
inline constexpr int kOrientationBins = 8;
inline constexpr int kEmbeddingDim = kEmbeddingGrid * kEmbeddingGrid * (3 * kColorBins + kOrientationBins);
/// Gradients weaker than this (Sobel scaled so a unit step is 1) do not vote.
inline constexpr double kOrientationFloor = 0.25;

/// Mean squared difference over all pixels and channels.
double delta_pix(const Image& a, const Image& b);

std::vector<double> embed(const Image& img, const EmbeddingProvider& provider = {});
std::vector<double> builtin_embedding(const Image& img);

/// Cosine distance 1 - <embed(a), embed(b)>.
double delta_sem(const Image& a, const Image& b, const EmbeddingProvider& provider = {});

/// Image-text similarity from a text-capable provider.
double text_score(const Image& img, const std::string& caption, const EmbeddingProvider& provider);

struct Correlation {
  double r = 0.0;
  double p = 1.0;
};

/// Sample Pearson r with a two-sided t-test p-value on n-2 degrees of
/// freedom. Needs n >= 3 and non-zero variance in both inputs.
Correlation pearson(const std::vector<double>& xs, const std::vector<double>& ys);

/// Two-sided tail P(|T| >= |t|) for Student's t with `df` degrees of
/// freedom, by adaptive quadrature (absolute tolerance 1e-12).
double student_t_two_sided(double t, double df);

struct GapPair {
  std::string id;
  Image a;
  Image b;
};

struct GapRow {
  std::string id;
  double delta_pix = 0.0;
  double delta_sem = 0.0;
  std::optional<double> text_score;
};

struct ColumnSummary {
  double mean = 0.0;
  double median = 0.0;
};

struct CorrelationEntry {
  std::string x;
  std::string y;
  std::optional<Correlation> value;
  std::string omitted_reason;  // set iff !value
};

struct GapReport {
  std::vector<GapRow> rows;
  ColumnSummary delta_pix;
  ColumnSummary delta_sem;
  std::optional<ColumnSummary> text_score;
  std::vector<CorrelationEntry> correlations;
};

ColumnSummary summarize(std::vector<double> values);

/// Rows keep input order. When text scores are given (one per pair) the
/// report also correlates each gap column with them; undefined correlations
/// are listed with a reason instead of a value.
GapReport gap_report(const std::vector<GapPair>& pairs, const EmbeddingProvider& provider = {},
                     const std::optional<std::vector<double>>& text_scores = std::nullopt, int workers = 1);

/// JSON document with rows, aggregates, correlations and the published
/// reference gaps for context.
std::string gap_report_to_json(const GapReport& report);

}  // namespace copaint

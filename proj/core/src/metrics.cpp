#include "copaint/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <numbers>
#include <thread>

#include "copaint/http.hpp"
#include "copaint/io.hpp"
#include "json.hpp"

namespace copaint {

EmbeddingProvider EmbeddingProvider::http(std::string url, double timeout_s, bool text_capable) {
  EmbeddingProvider p;
  p.kind = Kind::http;
  p.endpoint = std::move(url);
  p.timeout_s = timeout_s;
  p.text_capable = text_capable;
  return p;
}

EmbeddingProvider parse_embedding_provider(const std::string& spec) {
  if (spec == "builtin") return EmbeddingProvider::builtin();
  parse_url(spec);
  return EmbeddingProvider::http(spec);
}

double delta_pix(const Image& a, const Image& b) {
  require_same_size(a, b, "delta_pix");
  double sum = 0.0;
  const auto& pa = a.pixels();
  const auto& pb = b.pixels();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    const double dr = double(pa[i].r) - pb[i].r, dg = double(pa[i].g) - pb[i].g, db = double(pa[i].b) - pb[i].b;
    sum += dr * dr + dg * dg + db * db;
  }
  return sum / (3.0 * static_cast<double>(pa.size()));
}

namespace {

int color_bin(float v) { return std::clamp(static_cast<int>(std::clamp(v, 0.f, 1.f) * kColorBins), 0, kColorBins - 1); }

void normalize(std::vector<double>& v) {
  double n2 = 0.0;
  for (double x : v) n2 += x * x;
  const double n = std::sqrt(n2);
  if (!(n > 0.0) || !std::isfinite(n)) throw ProviderError("embedding has zero or non-finite norm");
  for (double& x : v) x /= n;
}

std::vector<double> http_embedding(const Image& img, const EmbeddingProvider& p) {
  const HttpResponse res = http_post(p.endpoint, encode_png(img), "image/png", p.timeout_s);
  std::vector<double> v;
  try {
    const auto doc = nlohmann::json::parse(res.body);
    v = doc.at("embedding").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw ProviderError("embedding endpoint " + p.endpoint + " sent a malformed response: " + e.what());
  }
  if (v.empty()) throw ProviderError("embedding endpoint " + p.endpoint + " sent an empty vector");
  normalize(v);
  return v;
}

}  // namespace

std::vector<double> builtin_embedding(const Image& img) {
  if (img.empty()) throw FormatError("cannot embed an empty image");
  constexpr int kCellDim = 3 * kColorBins + kOrientationBins;
  std::vector<double> v(kEmbeddingDim, 0.0);
  const Gradients g = sobel(img);
  const int w = img.width(), h = img.height();
  for (int cy = 0; cy < kEmbeddingGrid; ++cy)
    for (int cx = 0; cx < kEmbeddingGrid; ++cx) {
      const int x0 = cx * w / kEmbeddingGrid, x1 = (cx + 1) * w / kEmbeddingGrid;
      const int y0 = cy * h / kEmbeddingGrid, y1 = (cy + 1) * h / kEmbeddingGrid;
      const int n = (x1 - x0) * (y1 - y0);
      if (n == 0) continue;
      double* cell = v.data() + static_cast<std::ptrdiff_t>(cy * kEmbeddingGrid + cx) * kCellDim;
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) {
          const Rgb& c = img.at(x, y);
          cell[color_bin(c.r)] += 1.0;
          cell[kColorBins + color_bin(c.g)] += 1.0;
          cell[2 * kColorBins + color_bin(c.b)] += 1.0;
          const double gx = g.gx.at(x, y), gy = g.gy.at(x, y);
          const double mag = std::hypot(gx, gy);
          if (mag > kOrientationFloor) {
            double theta = std::atan2(gy, gx);
            if (theta < 0) theta += std::numbers::pi;
            const int bin = std::min(kOrientationBins - 1, static_cast<int>(theta / std::numbers::pi * kOrientationBins));
            cell[3 * kColorBins + bin] += mag;
          }
        }
      for (int k = 0; k < kCellDim; ++k) cell[k] /= n;
    }
  normalize(v);
  return v;
}

std::vector<double> embed(const Image& img, const EmbeddingProvider& provider) {
  if (provider.kind == EmbeddingProvider::Kind::http) return http_embedding(img, provider);
  return builtin_embedding(img);
}

double delta_sem(const Image& a, const Image& b, const EmbeddingProvider& provider) {
  const std::vector<double> ea = embed(a, provider);
  const std::vector<double> eb = embed(b, provider);
  if (ea.size() != eb.size()) throw ProviderError("embedding sizes differ");
  if (ea == eb) return 0.0;
  double dot = 0.0;
  for (std::size_t i = 0; i < ea.size(); ++i) dot += ea[i] * eb[i];
  return std::clamp(1.0 - dot, 0.0, 2.0);
}

double text_score(const Image& img, const std::string& caption, const EmbeddingProvider& provider) {
  if (provider.kind != EmbeddingProvider::Kind::http || !provider.text_capable)
    throw ConstraintViolation("provider cannot score text", {"provider"});
  const std::string url = provider.endpoint + "/text-score";
  const HttpResponse res = http_post_multipart(
      url, {{"caption", caption, "", "text/plain"}, {"image", encode_png(img), "image.png", "image/png"}},
      provider.timeout_s);
  try {
    const double s = nlohmann::json::parse(res.body).at("score").get<double>();
    if (!std::isfinite(s)) throw ProviderError("text score endpoint " + url + " sent a non-finite score");
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ProviderError("text score endpoint " + url + " sent a malformed response: " + e.what());
  }
}

namespace {

// Gauss-Kronrod 7/15 nodes and weights on [-1, 1].
constexpr std::array<double, 8> kXgk = {0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
                                        0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
                                        0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
                                        0.207784955007898467600689403773245, 0.0};
constexpr std::array<double, 8> kWgk = {0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
                                        0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
                                        0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
                                        0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
constexpr std::array<double, 4> kWg = {0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
                                       0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

double integrate(const std::function<double(double)>& f, double a, double b, double tol, int depth) {
  const double c = (a + b) / 2, hw = (b - a) / 2;
  double kron = kWgk[7] * f(c);
  double gauss = kWg[3] * f(c);
  for (int i = 0; i < 7; ++i) {
    const double fs = f(c - hw * kXgk[i]) + f(c + hw * kXgk[i]);
    kron += kWgk[i] * fs;
    if (i % 2 == 1) gauss += kWg[i / 2] * fs;
  }
  kron *= hw;
  gauss *= hw;
  if (std::abs(kron - gauss) <= tol || depth >= 50) return kron;
  return integrate(f, a, c, tol / 2, depth + 1) + integrate(f, c, b, tol / 2, depth + 1);
}

}  // namespace

double student_t_two_sided(double t, double df) {
  if (!(df > 0.0)) throw ConstraintViolation("degrees of freedom must be positive", {"df"});
  if (std::isnan(t)) throw ConstraintViolation("t statistic is NaN", {"t"});
  if (std::isinf(t)) return 0.0;
  // With t = sqrt(df) tan(theta) the density becomes cos^(df-1)(theta) / B(df/2, 1/2)
  // on (-pi/2, pi/2).
  const double theta0 = std::atan(std::abs(t) / std::sqrt(df));
  const double beta = std::exp(std::lgamma(df / 2) + std::lgamma(0.5) - std::lgamma((df + 1) / 2));
  auto f = [df](double th) { return std::pow(std::cos(th), df - 1); };
  const double tail = integrate(f, theta0, std::numbers::pi / 2, 1e-13 * beta, 0);
  return std::clamp(2.0 * tail / beta, 0.0, 1.0);
}

Correlation pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw ConstraintViolation("pearson: inputs differ in length", {"xs", "ys"});
  if (xs.size() < 3) throw ConstraintViolation("pearson: need at least 3 observations", {"xs", "ys"});
  for (std::size_t i = 0; i < xs.size(); ++i)
    if (!std::isfinite(xs[i]) || !std::isfinite(ys[i]))
      throw ConstraintViolation("pearson: non-finite observation", {"xs", "ys"});
  const double n = static_cast<double>(xs.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) mx += xs[i], my += ys[i];
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx, dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0) throw ConstraintViolation("pearson: xs has zero variance", {"xs"});
  if (syy == 0.0) throw ConstraintViolation("pearson: ys has zero variance", {"ys"});
  Correlation c;
  c.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  const double df = n - 2;
  if (std::abs(c.r) == 1.0) {
    c.p = 0.0;
  } else {
    c.p = student_t_two_sided(c.r * std::sqrt(df / (1 - c.r * c.r)), df);
  }
  return c;
}

ColumnSummary summarize(std::vector<double> values) {
  if (values.empty()) throw ConstraintViolation("cannot summarize an empty column", {"rows"});
  ColumnSummary s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  std::sort(values.begin(), values.end());
  const std::size_t m = values.size() / 2;
  s.median = values.size() % 2 ? values[m] : (values[m - 1] + values[m]) / 2;
  return s;
}

namespace {

CorrelationEntry correlate(const std::string& xname, const std::vector<double>& xs, const std::string& yname,
                           const std::vector<double>& ys) {
  CorrelationEntry e{xname, yname, std::nullopt, ""};
  auto constant = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
  };
  if (xs.size() < 3) {
    e.omitted_reason = "fewer than 3 rows";
  } else if (constant(xs)) {
    e.omitted_reason = xname + " has zero variance";
  } else if (constant(ys)) {
    e.omitted_reason = yname + " has zero variance";
  } else {
    e.value = pearson(xs, ys);
  }
  return e;
}

}  // namespace

GapReport gap_report(const std::vector<GapPair>& pairs, const EmbeddingProvider& provider,
                     const std::optional<std::vector<double>>& text_scores, int workers) {
  if (pairs.empty()) throw ConstraintViolation("gap_report needs at least one pair", {"pairs"});
  if (text_scores && text_scores->size() != pairs.size())
    throw ConstraintViolation("gap_report: one text score per pair required", {"text_scores"});

  GapReport report;
  report.rows.resize(pairs.size());
  std::vector<std::exception_ptr> errors(pairs.size());
  const int n_workers = std::clamp(workers, 1, static_cast<int>(pairs.size()));
  auto run = [&](int worker) {
    for (std::size_t i = worker; i < pairs.size(); i += n_workers) {
      try {
        GapRow& row = report.rows[i];
        row.id = pairs[i].id;
        row.delta_pix = delta_pix(pairs[i].a, pairs[i].b);
        row.delta_sem = delta_sem(pairs[i].a, pairs[i].b, provider);
        if (text_scores) row.text_score = (*text_scores)[i];
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (n_workers == 1) {
    run(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(run, w);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::vector<double> pix, sem;
  for (const auto& r : report.rows) pix.push_back(r.delta_pix), sem.push_back(r.delta_sem);
  report.delta_pix = summarize(pix);
  report.delta_sem = summarize(sem);
  if (text_scores) {
    report.text_score = summarize(*text_scores);
    report.correlations.push_back(correlate("delta_pix", pix, "text_score", *text_scores));
    report.correlations.push_back(correlate("delta_sem", sem, "text_score", *text_scores));
  }
  return report;
}

std::string gap_report_to_json(const GapReport& report) {
  using nlohmann::ordered_json;
  auto summary = [](const ColumnSummary& s) { return ordered_json{{"mean", s.mean}, {"median", s.median}}; };
  ordered_json doc;
  ordered_json rows = ordered_json::array();
  for (const auto& r : report.rows) {
    ordered_json row{{"id", r.id}, {"delta_pix", r.delta_pix}, {"delta_sem", r.delta_sem}};
    if (r.text_score) row["text_score"] = *r.text_score;
    rows.push_back(row);
  }
  doc["rows"] = rows;
  ordered_json agg{{"delta_pix", summary(report.delta_pix)}, {"delta_sem", summary(report.delta_sem)}};
  if (report.text_score) agg["text_score"] = summary(*report.text_score);
  doc["aggregates"] = agg;
  ordered_json corr = ordered_json::array();
  for (const auto& c : report.correlations) {
    ordered_json e{{"x", c.x}, {"y", c.y}};
    if (c.value) {
      e["r"] = c.value->r;
      e["p"] = c.value->p;
    } else {
      e["omitted"] = true;
      e["reason"] = c.omitted_reason;
    }
    corr.push_back(e);
  }
  doc["correlations"] = corr;
  // Published gaps for a fine-tuned completion model and an off-the-shelf one;
  // context only, not comparable to builtin-provider numbers.
  doc["reference"] = ordered_json::array({
      ordered_json{{"label", "fine-tuned"}, {"delta_pix", 0.052}, {"delta_sem", 0.035}},
      ordered_json{{"label", "not fine-tuned"}, {"delta_pix", 0.195}, {"delta_sem", 0.241}},
  });
  return doc.dump(2) + "\n";
}

}  // namespace copaint

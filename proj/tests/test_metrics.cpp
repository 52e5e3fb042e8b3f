#include <cmath>
#include <numbers>

#include "copaint/io.hpp"
#include "copaint/metrics.hpp"
#include "copaint/planner.hpp"
#include "doctest.h"
#include "json.hpp"
#include "mock_server.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace copaint;

namespace {

double norm(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

Image mirrored(const Image& img) {
  Image out(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) out.at(x, y) = img.at(img.width() - 1 - x, y);
  return out;
}

std::vector<double> random_values(Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

}  // namespace

TEST_CASE("delta_pix") {
  Rng rng(1);
  const Image a = testing::random_image(rng, 20, 12);
  CHECK(delta_pix(a, a) == 0.0);
  CHECK(delta_pix(Image(8, 8, kBlack), Image(8, 8, kWhite)) == 1.0);
  Image half(8, 8, kWhite);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 4; ++x) half.at(x, y) = kBlack;
  CHECK(delta_pix(half, Image(8, 8, kWhite)) == 0.5);
  CHECK_THROWS_AS(delta_pix(Image(8, 8), Image(8, 9)), DimensionMismatch);
}

TEST_CASE("builtin embedding is a deterministic unit vector") {
  Rng rng(2);
  for (int k = 0; k < 50; ++k) {
    const Image img = k % 2 ? testing::random_image(rng, 17 + k, 23) : testing::random_blocks(rng, 40, 31);
    const auto v = embed(img);
    REQUIRE(v.size() == static_cast<std::size_t>(kEmbeddingDim));
    CHECK(norm(v) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(embed(img) == v);
    for (double x : v) REQUIRE(x >= 0.0);
  }
}

TEST_CASE("embedding ignores noise below half a bin on a flat image") {
  // Bin centers: value (2k+1)/16 sits mid-bin for 8 bins.
  const Rgb flat{9.f / 16, 5.f / 16, 13.f / 16};
  const Image base(48, 40, flat);
  Rng rng(3);
  Image noisy = base;
  const float amp = 0.06f;  // < 1/16
  for (auto& p : noisy.pixels()) {
    p.r += static_cast<float>(rng.uniform(-amp, amp));
    p.g += static_cast<float>(rng.uniform(-amp, amp));
    p.b += static_cast<float>(rng.uniform(-amp, amp));
  }
  CHECK(embed(noisy) == embed(base));

  Image loud = base;
  for (auto& p : loud.pixels()) p.r += static_cast<float>(rng.uniform(-0.2, 0.2));
  CHECK(embed(loud) != embed(base));
}

TEST_CASE("spatial grid distinguishes an image from its mirror") {
  Image img(64, 64, kWhite);
  for (int y = 8; y < 56; ++y)
    for (int x = 4; x < 20; ++x) img.at(x, y) = {0.2f, 0.2f, 0.2f};
  CHECK(embed(img) != embed(mirrored(img)));
  CHECK(delta_sem(img, mirrored(img)) > 0.0);
}

TEST_CASE("delta_sem identities and bounds") {
  Rng rng(4);
  for (int k = 0; k < 20; ++k) {
    const Image a = testing::random_blocks(rng, 32, 32), b = testing::random_image(rng, 32, 32);
    CHECK(delta_sem(a, a) == 0.0);
    const double d = delta_sem(a, b);
    CHECK(d >= 0.0);
    CHECK(d <= 1.0);
    CHECK(delta_sem(b, a) == d);
  }
}

TEST_CASE("student t tail matches closed forms") {
  for (double t : {0.0, 0.3, 1.0, 2.5, 10.0, 200.0}) {
    // df = 1 (Cauchy) and df = 2 have elementary CDFs.
    CHECK(student_t_two_sided(t, 1) == doctest::Approx(1 - 2 / std::numbers::pi * std::atan(t)).epsilon(1e-12));
    CHECK(student_t_two_sided(t, 2) == doctest::Approx(1 - t / std::sqrt(2 + t * t)).epsilon(1e-12));
  }
  CHECK(student_t_two_sided(0.0, 17) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(student_t_two_sided(INFINITY, 5) == 0.0);
}

TEST_CASE("pearson against the oracle") {
  SUBCASE("exact linearity") {
    const std::vector<double> xs{1, 2, 3, 4, 5, 6};
    std::vector<double> ys;
    for (double x : xs) ys.push_back(2 * x + 1);
    const Correlation c = pearson(xs, ys);
    CHECK(c.r == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(c.p <= 1e-9);
  }
  SUBCASE("hand dataset, n = 5") {
    const std::vector<double> xs{1.0, 2.0, 3.5, 4.0, 7.0}, ys{2.1, 2.9, 3.2, 5.5, 6.1};
    const auto want = testing::pearson_oracle(xs, ys);
    const Correlation got = pearson(xs, ys);
    CHECK(std::abs(got.r - want.r) <= 1e-9);
    CHECK(std::abs(got.p - want.p) <= 1e-9);
  }
  SUBCASE("random datasets") {
    Rng rng(5);
    for (int k = 0; k < 40; ++k) {
      const std::size_t n = 5 + rng.below(46);
      const auto xs = random_values(rng, n, -3, 3);
      auto ys = random_values(rng, n, -1, 1);
      const double slope = rng.uniform(-0.5, 0.5);
      for (std::size_t i = 0; i < n; ++i) ys[i] += slope * xs[i];
      const auto want = testing::pearson_oracle(xs, ys);
      const Correlation got = pearson(xs, ys);
      CHECK(std::abs(got.r - want.r) <= 1e-9);
      CHECK(std::abs(got.p - want.p) <= 1e-9);
      CHECK(got.r >= -1.0);
      CHECK(got.r <= 1.0);
      CHECK(got.p >= 0.0);
      CHECK(got.p <= 1.0);
    }
  }
  SUBCASE("positive affine maps leave r and p unchanged") {
    Rng rng(6);
    for (int k = 0; k < 20; ++k) {
      const auto xs = random_values(rng, 12, 0, 1), ys = random_values(rng, 12, 0, 1);
      const double a = rng.uniform(0.1, 10), b = rng.uniform(-5, 5);
      std::vector<double> scaled;
      for (double x : xs) scaled.push_back(a * x + b);
      const Correlation c0 = pearson(xs, ys), c1 = pearson(scaled, ys);
      CHECK(std::abs(c0.r - c1.r) <= 1e-12);
      CHECK(std::abs(c0.p - c1.p) <= 1e-12);
    }
  }
  SUBCASE("contract violations") {
    CHECK_THROWS_AS(pearson({1, 2, 3}, {4, 4, 4}), ConstraintViolation);
    CHECK_THROWS_AS(pearson({1, 2}, {1, 2}), ConstraintViolation);
    CHECK_THROWS_AS(pearson({1, 2, 3}, {1, 2}), ConstraintViolation);
  }
}

TEST_CASE("gap_report") {
  Rng rng(7);
  SUBCASE("identical pairs give zero columns and omitted correlations") {
    std::vector<GapPair> pairs;
    for (int i = 0; i < 4; ++i) {
      const Image img = testing::random_blocks(rng, 24, 24);
      pairs.push_back({"p" + std::to_string(i), img, img});
    }
    const GapReport r = gap_report(pairs, {}, std::vector<double>{0.1, 0.4, 0.2, 0.9});
    for (const auto& row : r.rows) {
      CHECK(row.delta_pix == 0.0);
      CHECK(row.delta_sem == 0.0);
    }
    REQUIRE(r.correlations.size() == 2);
    for (const auto& c : r.correlations) {
      CHECK_FALSE(c.value.has_value());
      CHECK(c.omitted_reason.find("zero variance") != std::string::npos);
    }
  }
  SUBCASE("single pair aggregates equal the row") {
    const GapReport r = gap_report({{"only", testing::random_image(rng, 16, 16), testing::random_image(rng, 16, 16)}});
    REQUIRE(r.rows.size() == 1);
    CHECK(r.delta_pix.mean == r.rows[0].delta_pix);
    CHECK(r.delta_pix.median == r.rows[0].delta_pix);
    CHECK(r.delta_sem.mean == r.rows[0].delta_sem);
    CHECK(r.delta_sem.median == r.rows[0].delta_sem);
    CHECK(r.correlations.empty());
  }
  SUBCASE("aggregates are recomputable and workers do not matter") {
    std::vector<GapPair> pairs;
    for (int i = 0; i < 9; ++i)
      pairs.push_back({std::to_string(i), testing::random_blocks(rng, 20, 20), testing::random_blocks(rng, 20, 20)});
    const std::vector<double> scores = random_values(rng, 9, 0, 1);
    const GapReport r1 = gap_report(pairs, {}, scores, 1);
    const GapReport r4 = gap_report(pairs, {}, scores, 4);
    CHECK(gap_report_to_json(r1) == gap_report_to_json(r4));
    std::vector<double> pix;
    for (const auto& row : r1.rows) pix.push_back(row.delta_pix);
    std::sort(pix.begin(), pix.end());
    CHECK(r1.delta_pix.median == pix[4]);
    REQUIRE(r1.correlations.size() == 2);
    CHECK(r1.correlations[0].value.has_value());

    const auto doc = nlohmann::json::parse(gap_report_to_json(r1));
    CHECK(doc["rows"].size() == 9);
    CHECK(doc["reference"][0]["delta_pix"] == 0.052);
    CHECK(doc["reference"][0]["delta_sem"] == 0.035);
    CHECK(doc["reference"][1]["delta_pix"] == 0.195);
    CHECK(doc["reference"][1]["delta_sem"] == 0.241);
  }
  CHECK_THROWS_AS(gap_report({}), ConstraintViolation);
}

TEST_CASE("planned renders are semantically closer to their own targets than to shuffled ones") {
  PaintingSetting s = PaintingSetting::marker();
  s.stroke_budget = 35;
  PlannerConfig pc;
  pc.candidates_per_stroke = 16;
  pc.refine_iters = 4;
  std::vector<Image> targets, renders;
  for (std::uint64_t i = 0; i < 40; ++i) {
    const Canvas blank(48, 48);
    targets.push_back(render_plan(testing::random_plan(900 + i, 12, s), blank, Author::robot).pixels());
    pc.seed = i;
    renders.push_back(plan_strokes_report(targets.back(), blank, s, pc, LossConfig{}).canvas.pixels());
  }
  double own = 0, shuffled = 0;
  for (std::size_t i = 0; i < 40; ++i) {
    own += delta_sem(targets[i], renders[i]);
    shuffled += delta_sem(targets[i], renders[(i + 1) % 40]);
  }
  CHECK(own / 40 < shuffled / 40);
}

TEST_CASE("http embedding provider") {
  testing::MockServer mock;
  mock.server().Post("/embed", [](const httplib::Request& req, httplib::Response& res) {
    if (req.get_header_value("Content-Type") != "image/png") {
      res.status = 415;
      return;
    }
    decode_png(req.body);
    res.set_content(R"({"embedding": [3.0, 0.0, 4.0]})", "application/json");
  });
  mock.server().Post("/broken", [](const httplib::Request&, httplib::Response& res) {
    res.status = 500;
    res.set_content("boom", "text/plain");
  });
  mock.server().Post("/garbage", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("not json", "text/plain");
  });
  mock.start();

  const Image img(8, 8);
  const auto v = embed(img, EmbeddingProvider::http(mock.url("/embed"), 5));
  REQUIRE(v.size() == 3);
  CHECK(v[0] == doctest::Approx(0.6));
  CHECK(v[2] == doctest::Approx(0.8));
  CHECK(delta_sem(img, img, EmbeddingProvider::http(mock.url("/embed"), 5)) == 0.0);

  try {
    embed(img, EmbeddingProvider::http(mock.url("/broken"), 5));
    FAIL("expected ProviderError");
  } catch (const ProviderError& e) {
    CHECK(std::string(e.what()).find("/broken") != std::string::npos);
    CHECK(std::string(e.what()).find("500") != std::string::npos);
  }
  CHECK_THROWS_AS(embed(img, EmbeddingProvider::http(mock.url("/garbage"), 5)), ProviderError);
  const std::string dead = "http://127.0.0.1:" + std::to_string(testing::closed_port()) + "/embed";
  CHECK_THROWS_AS(embed(img, EmbeddingProvider::http(dead, 2)), ProviderError);
  CHECK_THROWS_AS(parse_embedding_provider("ftp://nope"), FormatError);
  CHECK(parse_embedding_provider("builtin").kind == EmbeddingProvider::Kind::builtin);
}

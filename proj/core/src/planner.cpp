#include "copaint/planner.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <thread>

#include "copaint/palette.hpp"
#include "copaint/render.hpp"
#include "copaint/rng.hpp"

namespace copaint {

namespace {

constexpr double kMinStrokeLength = 0.02;
constexpr double kMaxStrokeLength = 1.0;
constexpr double kBendFraction = 0.6;
constexpr int kEndpointTries = 128;
constexpr double kMinAcrylicOpacity = 0.5;
constexpr std::size_t kPolishedCandidates = 4;
constexpr double kMaxStride = 0.5;
// Every kThroughEvery-th candidate is a three-point curve.
constexpr int kThroughEvery = 4;

// p0.x p0.y p1.x p1.y p2.x p2.y shift.x shift.y extend.p0 extend.p2 bend
// width opacity
constexpr int kFieldCount = 13;

std::uint64_t slot_seed(std::uint64_t seed, int slot) { return mix_seed(seed, 0x510700ULL + slot); }
std::uint64_t round_seed(std::uint64_t seed, int slot, int round) {
  return mix_seed(mix_seed(seed, 0x7ef1e00ULL + slot), static_cast<std::uint64_t>(round));
}

int field_count(const PaintingSetting& s) {
  return s.media == Media::marker_black ? kFieldCount - 1 : kFieldCount;
}

/// Grows (delta > 0) or trims the curve at its p0 end by roughly `delta`
/// of arc length, staying on the same parabola.
StrokeParams extend_start(StrokeParams st, double delta) {
  const double len = std::hypot(st.p2.x - st.p0.x, st.p2.y - st.p0.y) + std::hypot(st.p1.x - st.p0.x, st.p1.y - st.p0.y);
  if (len == 0) return st;
  const double t = -delta / len;
  // Control points of the sub-curve over [t, 1].
  const Point q0 = st.at(t);
  const Point q1{(1 - t) * st.p1.x + t * st.p2.x, (1 - t) * st.p1.y + t * st.p2.y};
  st.p0 = q0;
  st.p1 = q1;
  return st;
}

StrokeParams reversed(StrokeParams st) {
  std::swap(st.p0, st.p2);
  return st;
}

StrokeParams perturb(StrokeParams st, int field, double delta, const PaintingSetting& s) {
  switch (field) {
    case 0: st.p0.x += delta; break;
    case 1: st.p0.y += delta; break;
    case 2: st.p1.x += delta; break;
    case 3: st.p1.y += delta; break;
    case 4: st.p2.x += delta; break;
    case 5: st.p2.y += delta; break;
    case 6: st.p0.x += delta; st.p1.x += delta; st.p2.x += delta; break;
    case 7: st.p0.y += delta; st.p1.y += delta; st.p2.y += delta; break;
    case 8: st = extend_start(st, delta); break;
    case 9: st = reversed(extend_start(reversed(st), delta)); break;
    case 10: {
      const double dx = st.p2.x - st.p0.x, dy = st.p2.y - st.p0.y;
      const double len = std::hypot(dx, dy);
      if (len > 0) st.p1 = {st.p1.x - dy / len * delta, st.p1.y + dx / len * delta};
      break;
    }
    case 11: st.width += delta * (s.brush.max_width - s.brush.min_width); break;
    case 12: st.opacity += delta; break;
  }
  return clamp_stroke(st, s);
}

PixelRect footprint(const StrokeParams& st, const PaintingSetting& s, int w, int h) {
  return stroke_coverage(st, s.brush, w, h).bbox;
}

void shuffle(std::vector<int>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

/// Per-pixel error mass the sampler draws anchors from. Markers can only
/// darken, so only pixels lighter than the target count there.
std::vector<double> error_mass(const Image& target, const Canvas& canvas, BlendMode mode) {
  std::vector<double> e(target.pixel_count());
  const auto& t = target.pixels();
  const auto& c = canvas.pixels().pixels();
  for (std::size_t i = 0; i < e.size(); ++i) {
    if (mode == BlendMode::opaque_marker) {
      e[i] = std::max(0.0, double(c[i].r) - t[i].r) + std::max(0.0, double(c[i].g) - t[i].g) +
             std::max(0.0, double(c[i].b) - t[i].b);
    } else {
      e[i] = std::abs(double(c[i].r) - t[i].r) + std::abs(double(c[i].g) - t[i].g) +
             std::abs(double(c[i].b) - t[i].b);
    }
  }
  return e;
}

class CandidateSampler {
 public:
  CandidateSampler(const Image& target, const Canvas& canvas, const PaintingSetting& setting)
      : target_(target), setting_(setting), w_(target.width()), h_(target.height()),
        error_(error_mass(target, canvas, setting.brush.blend_mode)) {
    cdf_.resize(error_.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < error_.size(); ++i) {
      acc += error_[i];
      cdf_[i] = acc;
      max_error_ = std::max(max_error_, error_[i]);
    }
  }

  bool has_error() const { return !cdf_.empty() && cdf_.back() > 0.0; }

  StrokeParams sample(Rng& rng, int index) const {
    if (index % kThroughEvery == kThroughEvery - 1) return through_points(rng);
    const Point anchor = draw_point(rng);

    const double length = rng.log_uniform(kMinStrokeLength, kMaxStrokeLength);
    Point end = anchor;
    for (int t = 0; t < kEndpointTries; ++t) {
      const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
      end = {anchor.x + length * std::cos(theta), anchor.y + length * std::sin(theta)};
      const double accept = rng.uniform();
      if (error_at(end) > accept * max_error_) break;
    }
    const Point mid{(anchor.x + end.x) / 2, (anchor.y + end.y) / 2};
    const double dx = end.x - anchor.x, dy = end.y - anchor.y;
    // The curve midpoint sits at mid + bend/2 * normal; prefer bends that put
    // it on error.
    double bend = 0.0;
    for (int t = 0; t < kEndpointTries; ++t) {
      bend = rng.uniform(-kBendFraction, kBendFraction);
      const double accept = rng.uniform();
      if (error_at({mid.x - dy * bend / 2, mid.y + dx * bend / 2}) > accept * max_error_) break;
    }

    StrokeParams st;
    st.p0 = anchor;
    st.p2 = end;
    st.p1 = {mid.x - dy * bend, mid.y + dx * bend};
    return finish(st, rng);
  }

 private:
  Point draw_point(Rng& rng) const {
    const double u = rng.uniform() * cdf_.back();
    const std::size_t idx = std::min<std::size_t>(
        std::upper_bound(cdf_.begin(), cdf_.end(), u) - cdf_.begin(), cdf_.size() - 1);
    return {(static_cast<double>(idx % w_) + rng.uniform()) / w_, (static_cast<double>(idx / w_) + rng.uniform()) / h_};
  }

  /// Curve through three error samples: the farthest pair are the ends and
  /// the third is hit at t = 1/2.
  StrokeParams through_points(Rng& rng) const {
    Point q[3] = {draw_point(rng), draw_point(rng), draw_point(rng)};
    auto d2 = [](Point a, Point b) { return (a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y); };
    const double d01 = d2(q[0], q[1]), d02 = d2(q[0], q[2]), d12 = d2(q[1], q[2]);
    if (d02 >= d01 && d02 >= d12) std::swap(q[1], q[2]);
    else if (d12 >= d01 && d12 >= d02) std::swap(q[0], q[2]);
    // now q[0], q[1] are the ends
    StrokeParams st;
    st.p0 = q[0];
    st.p2 = q[1];
    st.p1 = {2 * q[2].x - (q[0].x + q[1].x) / 2, 2 * q[2].y - (q[0].y + q[1].y) / 2};
    return finish(st, rng);
  }

  StrokeParams finish(StrokeParams st, Rng& rng) const {
    st.width = rng.log_uniform(setting_.brush.min_width, setting_.brush.max_width);
    st.opacity = setting_.media == Media::marker_black ? 1.0 : rng.uniform(kMinAcrylicOpacity, 1.0);
    st.color_index = 0;
    st = clamp_stroke(st, setting_);
    if (setting_.media != Media::marker_black) st.color_index = color_under(st);
    return st;
  }

  double error_at(const Point& p) const {
    if (p.x < 0 || p.x > 1 || p.y < 0 || p.y > 1) return 0.0;
    const int x = std::min(w_ - 1, static_cast<int>(p.x * w_));
    const int y = std::min(h_ - 1, static_cast<int>(p.y * h_));
    return error_[static_cast<std::size_t>(y) * w_ + x];
  }

  /// Palette color nearest the target's mean under the stroke footprint.
  int color_under(const StrokeParams& st) const {
    const Coverage cov = stroke_coverage(st, setting_.brush, w_, h_);
    double r = 0, g = 0, b = 0;
    std::size_t n = 0;
    for (const Span& s : cov.spans)
      for (int x = s.x0; x < s.x1; ++x) {
        const Rgb& c = target_.at(x, s.y);
        r += c.r;
        g += c.g;
        b += c.b;
        ++n;
      }
    if (n == 0) return 0;
    return nearest_palette_index(setting_.palette, {static_cast<float>(r / n), static_cast<float>(g / n),
                                                    static_cast<float>(b / n)});
  }

  const Image& target_;
  const PaintingSetting& setting_;
  int w_;
  int h_;
  std::vector<double> error_;
  std::vector<double> cdf_;
  double max_error_ = 0.0;
};

/// Loss change from painting `st` on top of `canvas`; `canvas` is restored.
double candidate_delta(Canvas& canvas, Canvas& saved, const StrokeParams& st, const PaintingSetting& setting,
                       const LossField& field) {
  const Coverage cov = stroke_coverage(st, setting.brush, canvas.width(), canvas.height());
  if (cov.spans.empty()) return 0.0;
  const double before = field.local(canvas, cov.bbox);
  saved.copy_region(canvas, cov.bbox);
  composite(canvas, cov, setting.palette.colors[st.color_index], st.opacity, setting.brush.blend_mode,
            Author::robot);
  const double after = field.local(canvas, cov.bbox);
  canvas.copy_region(saved, cov.bbox);
  return after - before;
}

std::vector<double> evaluate_candidates(const std::vector<StrokeParams>& cands, const Canvas& working,
                                        const PaintingSetting& setting, const LossField& field, int workers) {
  std::vector<double> deltas(cands.size(), 0.0);
  const int n_workers = std::clamp(workers, 1, std::max<int>(1, static_cast<int>(cands.size())));
  auto run = [&](int worker) {
    Canvas scratch = working;
    Canvas saved = working;
    for (std::size_t i = worker; i < cands.size(); i += n_workers)
      deltas[i] = candidate_delta(scratch, saved, cands[i], setting, field);
  };
  if (n_workers == 1) {
    run(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(run, w);
    for (auto& t : pool) t.join();
  }
  return deltas;
}

/// Coordinate-descent state over a full plan. `working` always equals the
/// plan rendered on `base`.
class Refiner {
 public:
  Refiner(const Canvas& base, const std::vector<StrokeParams>& strokes, const PaintingSetting& setting,
          const LossField& field)
      : base_(&base), working_(base), saved_(base), setting_(&setting), field_(&field) {
    for (const auto& s : strokes) append(s);
  }

  void append(const StrokeParams& s) {
    paint_stroke(working_, s, *setting_, Author::robot, working_.bounds());
    strokes_.push_back(s);
    boxes_.push_back(footprint(s, *setting_, base_->width(), base_->height()));
  }

  /// One attempt at replacing stroke i by `cand`; kept only if the loss
  /// strictly decreases.
  bool try_replace(std::size_t i, const StrokeParams& cand) {
    if (cand == strokes_[i]) return false;
    const PixelRect new_box = footprint(cand, *setting_, base_->width(), base_->height());
    const PixelRect region = boxes_[i].unite(new_box);
    if (region.empty()) return false;
    const double before = field_->local(working_, region);
    saved_.copy_region(working_, region);
    working_.copy_region(*base_, region);
    for (std::size_t j = 0; j < strokes_.size(); ++j) {
      const PixelRect box = j == i ? new_box : boxes_[j];
      if (box.intersects(region)) paint_stroke(working_, j == i ? cand : strokes_[j], *setting_, Author::robot, region);
    }
    const double after = field_->local(working_, region);
    if (after < before) {
      strokes_[i] = cand;
      boxes_[i] = new_box;
      return true;
    }
    working_.copy_region(saved_, region);
    return false;
  }

  /// Rounds of +-step perturbations over the given stroke indices.
  void run(const std::vector<int>& indices, int rounds, double step, const std::function<std::uint64_t(int)>& seeder) {
    const int nf = field_count(*setting_);
    for (int round = 0; round < rounds; ++round) {
      Rng rng(seeder(round));
      std::vector<int> order;
      for (int i : indices)
        for (int f = 0; f < nf; ++f) order.push_back(i * kFieldCount + f);
      shuffle(order, rng);
      bool improved = false;
      for (int code : order) {
        const std::size_t i = static_cast<std::size_t>(code / kFieldCount);
        const int f = code % kFieldCount;
        for (double sign : {+1.0, -1.0}) {
          if (try_replace(i, perturb(strokes_[i], f, sign * step, *setting_))) {
            improved = true;
            // Keep going while it pays, doubling the stride.
            for (double stride = 2 * step; stride <= kMaxStride; stride *= 2)
              if (!try_replace(i, perturb(strokes_[i], f, sign * stride, *setting_))) break;
            break;
          }
        }
      }
      if (!improved) step *= 0.5;
    }
  }

  const std::vector<StrokeParams>& strokes() const { return strokes_; }
  const Canvas& canvas() const { return working_; }

 private:
  const Canvas* base_;
  Canvas working_;
  Canvas saved_;
  std::vector<StrokeParams> strokes_;
  std::vector<PixelRect> boxes_;
  const PaintingSetting* setting_;
  const LossField* field_;
};

}  // namespace

void require_valid(const PlannerConfig& cfg) {
  if (cfg.candidates_per_stroke < 1) throw ConstraintViolation("candidates_per_stroke must be >= 1", {"candidates_per_stroke"});
  if (cfg.refine_iters < 0) throw ConstraintViolation("refine_iters must be >= 0", {"refine_iters"});
  if (!(cfg.refine_step > 0.0)) throw ConstraintViolation("refine_step must be positive", {"refine_step"});
  if (cfg.workers < 1) throw ConstraintViolation("workers must be >= 1", {"workers"});
}

PlanReport plan_strokes_report(const Image& target, const Canvas& current, const PaintingSetting& setting,
                               const PlannerConfig& cfg, const LossConfig& loss_cfg) {
  require_same_size(current.pixels(), target, "plan_strokes");
  require_valid_setting(setting);
  require_valid(cfg);

  const LossField field(target, loss_cfg, current);
  PlanReport report;
  report.plan.setting = setting;
  report.plan.seed = cfg.seed;
  report.plan.source_tag = "planner";
  report.canvas = current;
  report.initial_loss = field.total(current);
  double loss = report.initial_loss;

  Refiner state(current, {}, setting, field);
  for (int slot = 0; slot < setting.stroke_budget; ++slot) {
    const CandidateSampler sampler(target, state.canvas(), setting);
    if (!sampler.has_error()) break;

    Rng rng(slot_seed(cfg.seed, slot));
    std::vector<StrokeParams> cands;
    cands.reserve(cfg.candidates_per_stroke);
    for (int c = 0; c < cfg.candidates_per_stroke; ++c) cands.push_back(sampler.sample(rng, c));

    const std::vector<double> deltas = evaluate_candidates(cands, state.canvas(), setting, field, cfg.workers);
    std::vector<std::size_t> ranked(cands.size());
    for (std::size_t i = 0; i < ranked.size(); ++i) ranked[i] = i;
    std::stable_sort(ranked.begin(), ranked.end(), [&](std::size_t a, std::size_t b) { return deltas[a] < deltas[b]; });
    if (!(deltas[ranked[0]] < 0.0)) break;

    Refiner next = state;
    next.append(cands[ranked[0]]);
    const double greedy_loss = field.total(next.canvas());
    if (!(greedy_loss < loss)) break;

    // Polish the few best candidates; a weaker start often ends better.
    std::optional<Refiner> best;
    double best_loss = greedy_loss;
    const std::size_t n_polish = std::min<std::size_t>(kPolishedCandidates, ranked.size());
    for (std::size_t k = 0; k < n_polish && deltas[ranked[k]] < 0.0; ++k) {
      Refiner polished = state;
      polished.append(cands[ranked[k]]);
      const int newest = static_cast<int>(polished.strokes().size()) - 1;
      polished.run({newest}, cfg.refine_iters, cfg.refine_step,
                   [&](int round) { return round_seed(cfg.seed, slot, round); });
      // Local deltas and the full sum can disagree in the last bits; the full
      // sum decides.
      const double polished_loss = field.total(polished.canvas());
      if (polished_loss < best_loss || (k == 0 && polished_loss <= best_loss)) {
        best = std::move(polished);
        best_loss = polished_loss;
      }
    }
    state = best ? std::move(*best) : std::move(next);
    loss = best_loss;
  }
  report.plan.strokes = state.strokes();
  report.canvas = state.canvas();
  report.final_loss = loss;
  return report;
}

StrokePlan plan_strokes(const Image& target, const Canvas& current, const PaintingSetting& setting,
                        const PlannerConfig& cfg, const LossConfig& loss_cfg) {
  return plan_strokes_report(target, current, setting, cfg, loss_cfg).plan;
}

StrokePlan refine_plan(const StrokePlan& plan, const Image& target, const Canvas& base, const PlannerConfig& cfg,
                       const LossConfig& loss_cfg) {
  require_same_size(base.pixels(), target, "refine_plan");
  require_valid(cfg);
  if (cfg.refine_iters == 0 || plan.strokes.empty()) return plan;
  for (std::size_t i = 0; i < plan.strokes.size(); ++i)
    if (!validate_stroke(plan.strokes[i], plan.setting).empty())
      throw ConstraintViolation("refine_plan: stroke " + std::to_string(i) + " is invalid", {"stroke"},
                                static_cast<int>(i));

  const LossField field(target, loss_cfg, base);
  Refiner refiner(base, plan.strokes, plan.setting, field);
  const double initial = field.total(refiner.canvas());
  std::vector<int> all(plan.strokes.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  refiner.run(all, cfg.refine_iters, cfg.refine_step,
              [&](int round) { return mix_seed(cfg.seed, 0xa11000ULL + static_cast<std::uint64_t>(round)); });
  if (field.total(refiner.canvas()) > initial) return plan;
  StrokePlan out = plan;
  out.strokes = refiner.strokes();
  return out;
}

}  // namespace copaint

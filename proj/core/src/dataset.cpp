#include "copaint/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>
#include <thread>

#include "copaint/http.hpp"
#include "copaint/io.hpp"
#include "copaint/palette.hpp"
#include "copaint/render.hpp"
#include "copaint/rng.hpp"
#include "json.hpp"
#include "kmeans.hpp"

namespace copaint {

namespace fs = std::filesystem;

namespace {

std::string fmt_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_number(const std::string& text, const std::string& tag) {
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size() || !std::isfinite(v))
    throw FormatError("bad number in strategy '" + tag + "'");
  return v;
}

}  // namespace

void require_valid(const RemovalStrategy& s) {
  auto fail = [](const std::string& msg) { throw ConstraintViolation(msg, {"strategy"}); };
  const bool f = s.fraction.has_value(), q = s.region_quantile.has_value(), r = s.region_index.has_value();
  switch (s.kind) {
    case RemovalKind::remove_all:
      if (f || q || r) fail("remove_all takes no parameters");
      break;
    case RemovalKind::remove_random:
      if (!f) fail("remove_random requires a fraction");
      if (q || r) fail("remove_random takes only a fraction");
      if (!(*s.fraction >= 0.0 && *s.fraction <= 1.0)) fail("remove_random fraction must lie in [0,1]");
      break;
    case RemovalKind::remove_salient:
      if (f || r) fail("remove_salient takes only a region quantile");
      if (q && !(*s.region_quantile > 0.0 && *s.region_quantile < 1.0))
        fail("remove_salient region quantile must lie in (0,1)");
      break;
    case RemovalKind::remove_semantic:
      if (f || q) fail("remove_semantic takes only a region index");
      if (r && *s.region_index < 0) fail("remove_semantic region index must be >= 0");
      break;
  }
}

std::string to_tag(const RemovalStrategy& s) {
  switch (s.kind) {
    case RemovalKind::remove_all:
      return "all";
    case RemovalKind::remove_random:
      return "random:" + fmt_number(s.fraction.value_or(0.0));
    case RemovalKind::remove_salient:
      return s.region_quantile ? "salient:" + fmt_number(*s.region_quantile) : "salient";
    case RemovalKind::remove_semantic:
      return s.region_index ? "semantic:" + std::to_string(*s.region_index) : "semantic";
  }
  return "all";
}

RemovalStrategy parse_strategy(const std::string& tag) {
  const auto colon = tag.find(':');
  std::string name = tag.substr(0, colon);
  const bool has_arg = colon != std::string::npos;
  const std::string arg = has_arg ? tag.substr(colon + 1) : "";
  if (name.rfind("remove_", 0) == 0) name = name.substr(7);

  RemovalStrategy s;
  if (name == "all") {
    if (has_arg) throw FormatError("strategy 'all' takes no argument");
    s = RemovalStrategy::all();
  } else if (name == "random") {
    if (!has_arg) throw FormatError("strategy 'random' needs a fraction, e.g. random:0.3");
    s = RemovalStrategy::random(parse_number(arg, tag));
  } else if (name == "salient") {
    s = RemovalStrategy::salient(has_arg ? std::optional<double>(parse_number(arg, tag)) : std::nullopt);
  } else if (name == "semantic") {
    std::optional<int> idx;
    if (has_arg) {
      int v = 0;
      const auto res = std::from_chars(arg.data(), arg.data() + arg.size(), v);
      if (res.ec != std::errc() || res.ptr != arg.data() + arg.size())
        throw FormatError("bad region index in strategy '" + tag + "'");
      idx = v;
    }
    s = RemovalStrategy::semantic(idx);
  } else {
    throw FormatError("unknown removal strategy '" + tag + "'");
  }
  require_valid(s);
  return s;
}

std::vector<RemovalStrategy> parse_strategy_list(const std::string& list) {
  std::vector<RemovalStrategy> out;
  std::size_t start = 0;
  while (start <= list.size()) {
    const auto comma = list.find(',', start);
    const std::string item = list.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (item.empty()) throw FormatError("empty entry in strategy list '" + list + "'");
    out.push_back(parse_strategy(item));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

namespace {

/// Min-max normalizes in place; false if the field is constant.
bool normalize_range(ScalarField& f) {
  const auto [lo, hi] = std::minmax_element(f.values().begin(), f.values().end());
  const double mn = *lo, mx = *hi;
  if (!(mx > mn)) return false;
  for (double& v : f.values()) v = (v - mn) / (mx - mn);
  return true;
}

}  // namespace

ScalarField saliency_map(const Image& img) {
  if (img.empty()) throw FormatError("saliency_map: empty image");
  const int w = img.width(), h = img.height();
  ScalarField edge = gaussian_blur(gradient_magnitude(img), 0.02 * h);
  ScalarField prior(w, h);
  const double sx = 0.35 * w, sy = 0.35 * h;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double dx = x + 0.5 - w / 2.0, dy = y + 0.5 - h / 2.0;
      prior.at(x, y) = std::exp(-(dx * dx / (2 * sx * sx) + dy * dy / (2 * sy * sy)));
    }

  ScalarField out(w, h, 0.0);
  int terms = 0;
  for (ScalarField* f : {&edge, &prior}) {
    if (!normalize_range(*f)) continue;
    ++terms;
    for (std::size_t i = 0; i < out.values().size(); ++i) out.values()[i] += f->values()[i];
  }
  if (terms > 1)
    for (double& v : out.values()) v /= terms;
  return out;
}

LabelMap segment_regions(const Image& img, std::uint64_t seed) {
  if (img.empty()) throw FormatError("segment_regions: empty image");
  const int w = img.width(), h = img.height();
  const std::size_t n = img.pixel_count();
  const auto km = detail::kmeans_rgb(img.pixels(), kSegmentClusters, seed);

  // 4-connected components of equal cluster id.
  std::vector<int> comp(n, -1);
  std::vector<std::size_t> sizes;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < n; ++start) {
    if (comp[start] >= 0) continue;
    const int id = static_cast<int>(sizes.size());
    sizes.push_back(0);
    comp[start] = id;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      ++sizes[id];
      const int x = static_cast<int>(i % w), y = static_cast<int>(i / w);
      const std::size_t nb[4] = {x > 0 ? i - 1 : n, x + 1 < w ? i + 1 : n, y > 0 ? i - w : n, y + 1 < h ? i + w : n};
      for (std::size_t j : nb)
        if (j < n && comp[j] < 0 && km.assignment[j] == km.assignment[i]) {
          comp[j] = id;
          stack.push_back(j);
        }
    }
  }

  const std::size_t regions = sizes.size();
  std::vector<std::map<int, long>> border(regions);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int a = comp[static_cast<std::size_t>(y) * w + x];
      if (x + 1 < w) {
        const int b = comp[static_cast<std::size_t>(y) * w + x + 1];
        if (a != b) ++border[a][b], ++border[b][a];
      }
      if (y + 1 < h) {
        const int b = comp[static_cast<std::size_t>(y + 1) * w + x];
        if (a != b) ++border[a][b], ++border[b][a];
      }
    }

  // Merge the smallest undersized region until none is left.
  std::vector<int> parent(regions);
  std::iota(parent.begin(), parent.end(), 0);
  std::set<std::pair<std::size_t, int>> by_size;
  for (std::size_t r = 0; r < regions; ++r) by_size.insert({sizes[r], static_cast<int>(r)});
  const double min_size = kMinRegionFraction * static_cast<double>(n);
  while (!by_size.empty()) {
    const auto [size, a] = *by_size.begin();
    if (static_cast<double>(size) >= min_size || border[a].empty()) break;
    int b = -1;
    long best = -1;
    for (const auto& [nb, len] : border[a])
      if (len > best) best = len, b = nb;  // map order: ties keep the lower label
    by_size.erase(by_size.begin());
    by_size.erase({sizes[b], b});
    for (const auto& [nb, len] : border[a]) {
      border[nb].erase(a);
      if (nb == b) continue;
      border[b][nb] += len;
      border[nb][b] += len;
    }
    border[b].erase(a);
    border[a].clear();
    sizes[b] += sizes[a];
    parent[a] = b;
    by_size.insert({sizes[b], b});
  }

  auto find = [&](int r) {
    while (parent[r] != r) r = parent[r];
    return r;
  };
  LabelMap out{w, h, std::vector<int>(n)};
  std::vector<int> relabel(regions, -1);
  int next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const int r = find(comp[i]);
    if (relabel[r] < 0) relabel[r] = next++;
    out.labels[i] = relabel[r];
  }
  return out;
}

namespace {

nlohmann::json call_region_service(const std::string& url, const Image& img, double timeout_s) {
  const HttpResponse res = http_post(url, encode_png(img), "image/png", timeout_s);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(res.body);
    if (doc.at("width").get<int>() != img.width() || doc.at("height").get<int>() != img.height())
      throw ProviderError("region service " + url + " answered with different dimensions");
  } catch (const nlohmann::json::exception& e) {
    throw ProviderError("region service " + url + " sent a malformed response: " + e.what());
  }
  return doc;
}

}  // namespace

RegionProviders http_region_providers(const std::string& saliency_url, const std::string& segmentation_url,
                                      double timeout_s) {
  RegionProviders p;
  if (!saliency_url.empty()) {
    parse_url(saliency_url);
    p.saliency = [saliency_url, timeout_s](const Image& img) {
      const auto doc = call_region_service(saliency_url, img, timeout_s);
      ScalarField f(img.width(), img.height());
      try {
        const auto values = doc.at("values").get<std::vector<double>>();
        if (values.size() != img.pixel_count()) throw ProviderError("saliency service " + saliency_url + ": wrong value count");
        for (double v : values)
          if (!(v >= 0.0 && v <= 1.0)) throw ProviderError("saliency service " + saliency_url + ": value outside [0,1]");
        f.values() = values;
      } catch (const nlohmann::json::exception& e) {
        throw ProviderError("saliency service " + saliency_url + " sent a malformed response: " + e.what());
      }
      return f;
    };
  }
  if (!segmentation_url.empty()) {
    parse_url(segmentation_url);
    p.segmentation = [segmentation_url, timeout_s](const Image& img) {
      const auto doc = call_region_service(segmentation_url, img, timeout_s);
      std::vector<int> raw;
      try {
        raw = doc.at("labels").get<std::vector<int>>();
      } catch (const nlohmann::json::exception& e) {
        throw ProviderError("segmentation service " + segmentation_url + " sent a malformed response: " + e.what());
      }
      if (raw.size() != img.pixel_count())
        throw ProviderError("segmentation service " + segmentation_url + ": wrong label count");
      LabelMap out{img.width(), img.height(), std::vector<int>(raw.size())};
      std::map<int, int> relabel;
      for (std::size_t i = 0; i < raw.size(); ++i) {
        if (raw[i] < 0) throw ProviderError("segmentation service " + segmentation_url + ": negative label");
        const auto [it, inserted] = relabel.try_emplace(raw[i], static_cast<int>(relabel.size()));
        out.labels[i] = it->second;
      }
      return out;
    };
  }
  return p;
}

int removal_count(double fraction, std::size_t n) {
  return static_cast<int>(std::floor(fraction * static_cast<double>(n) + 0.5));
}

std::vector<bool> salient_region(const ScalarField& saliency, double quantile) {
  const auto& v = saliency.values();
  std::vector<bool> region(v.size(), false);
  std::vector<std::size_t> order;
  double total = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (v[i] > 0.0) {
      order.push_back(i);
      total += v[i];
    }
  if (order.empty()) return region;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] > v[b]; });
  double acc = 0.0, cut = v[order.back()];
  for (std::size_t i : order) {
    acc += v[i];
    if (acc >= quantile * total) {
      cut = v[i];
      break;
    }
  }
  for (std::size_t i : order)
    if (v[i] >= cut) region[i] = true;
  return region;
}

int largest_region(const LabelMap& labels) {
  std::vector<std::size_t> count(static_cast<std::size_t>(labels.region_count()), 0);
  for (int l : labels.labels) ++count[l];
  return static_cast<int>(std::max_element(count.begin(), count.end()) - count.begin());
}

namespace {

std::size_t midpoint_pixel(const StrokeParams& st, int w, int h) {
  const Point m = st.midpoint();
  const int x = std::clamp(static_cast<int>(m.x * w), 0, w - 1);
  const int y = std::clamp(static_cast<int>(m.y * h), 0, h - 1);
  return static_cast<std::size_t>(y) * w + x;
}

}  // namespace

StrokePlan make_partial(const StrokePlan& plan, const RemovalStrategy& strategy, const Image& source,
                        std::uint64_t seed, const RegionProviders& regions) {
  require_valid(strategy);
  StrokePlan out = plan;
  out.strokes.clear();
  if (strategy.kind == RemovalKind::remove_all) return out;
  if (plan.strokes.empty()) throw ConstraintViolation("make_partial: plan has no strokes", {"plan"});

  const std::size_t n = plan.strokes.size();
  std::vector<bool> drop(n, false);
  switch (strategy.kind) {
    case RemovalKind::remove_random: {
      const int k = removal_count(*strategy.fraction, n);
      std::vector<std::size_t> idx(n);
      std::iota(idx.begin(), idx.end(), 0);
      Rng rng(seed);
      for (int i = 0; i < k; ++i) {
        const std::size_t j = i + rng.below(n - i);
        std::swap(idx[i], idx[j]);
        drop[idx[i]] = true;
      }
      break;
    }
    case RemovalKind::remove_salient: {
      const ScalarField field = regions.saliency(source);
      if (field.width() != source.width() || field.height() != source.height())
        throw DimensionMismatch("saliency field does not match the source image");
      const auto region = salient_region(field, strategy.region_quantile.value_or(kDefaultRegionQuantile));
      for (std::size_t i = 0; i < n; ++i) drop[i] = region[midpoint_pixel(plan.strokes[i], field.width(), field.height())];
      break;
    }
    case RemovalKind::remove_semantic: {
      const LabelMap labels = regions.segmentation(source);
      if (labels.width != source.width() || labels.height != source.height())
        throw DimensionMismatch("label map does not match the source image");
      const int target = strategy.region_index.value_or(largest_region(labels));
      if (target >= labels.region_count())
        throw ConstraintViolation("remove_semantic: region " + std::to_string(target) + " does not exist (" +
                                      std::to_string(labels.region_count()) + " regions)",
                                  {"strategy"});
      for (std::size_t i = 0; i < n; ++i)
        drop[i] = labels.labels[midpoint_pixel(plan.strokes[i], labels.width, labels.height)] == target;
      break;
    }
    case RemovalKind::remove_all:
      break;
  }
  for (std::size_t i = 0; i < n; ++i)
    if (!drop[i]) out.strokes.push_back(plan.strokes[i]);
  return out;
}

Simulation simulate_full(const SourceItem& source, const PaintingSetting& setting, const PlannerConfig& planner,
                         const LossConfig& loss) {
  if (source.image.empty()) throw FormatError("source '" + source.id + "' has no image");
  PaintingSetting s = setting;
  s.palette = derive_palette(source.image, setting);
  const Canvas blank(source.image.width(), source.image.height());
  PlanReport r = plan_strokes_report(source.image, blank, s, planner, loss);
  r.plan.source_tag = "simulate:" + source.id;
  return {std::move(r.plan), std::move(r.canvas)};
}

FilterDecision filter_pair(const Canvas& full, const SourceItem& source, const EmbeddingProvider& provider,
                           double threshold) {
  FilterDecision d;
  try {
    if (provider.kind == EmbeddingProvider::Kind::http && provider.text_capable) {
      d.score = text_score(full.pixels(), source.caption, provider);
    } else {
      d.score = 1.0 - delta_sem(full.pixels(), source.image, provider);
    }
  } catch (const ProviderError& e) {
    d.undecided = true;
    d.reason = e.what();
    return d;
  }
  d.kept = d.score >= threshold;
  return d;
}

std::string manifest_line(const ManifestEntry& e) {
  nlohmann::ordered_json j{{"id", e.id},           {"source_id", e.source_id}, {"caption", e.caption},
                           {"strategy", e.strategy}, {"kept", e.kept},         {"score", e.score},
                           {"partial_path", e.partial_path}, {"full_path", e.full_path}};
  return j.dump();
}

ManifestEntry parse_manifest_line(const std::string& line) {
  try {
    const auto j = nlohmann::json::parse(line);
    ManifestEntry e;
    e.id = j.at("id").get<std::string>();
    e.source_id = j.at("source_id").get<std::string>();
    e.caption = j.at("caption").get<std::string>();
    e.strategy = j.at("strategy").get<std::string>();
    e.kept = j.at("kept").get<bool>();
    e.score = j.at("score").get<double>();
    e.partial_path = j.at("partial_path").get<std::string>();
    e.full_path = j.at("full_path").get<std::string>();
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError(std::string("bad manifest line: ") + ex.what());
  }
}

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  const std::string text = read_file(path);
  std::vector<ManifestEntry> out;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    const std::string line = text.substr(start, end - start);
    if (!line.empty()) out.push_back(parse_manifest_line(line));
    start = end + 1;
  }
  return out;
}

std::vector<ManifestEntry> export_dataset(const std::vector<TrainingPair>& pairs, const fs::path& out_dir) {
  std::error_code ec;
  for (const char* sub : {"partial", "full"}) {
    fs::create_directories(out_dir / sub, ec);
    if (ec) throw IoError("cannot create " + (out_dir / sub).string() + ": " + ec.message());
  }
  std::vector<ManifestEntry> entries;
  std::vector<fs::path> written;
  try {
    for (const auto& p : pairs) {
      if (!p.filter.kept || p.filter.undecided) continue;
      char name[32];
      std::snprintf(name, sizeof name, "%04zu", entries.size());
      ManifestEntry e;
      e.id = name;
      e.source_id = p.source_id;
      e.caption = p.caption;
      e.strategy = to_tag(p.strategy);
      e.kept = true;
      e.score = p.filter.score;
      e.partial_path = std::string("partial/") + name + ".png";
      e.full_path = std::string("full/") + name + ".png";
      written.push_back(out_dir / e.partial_path);
      write_png(written.back(), p.partial_image);
      written.push_back(out_dir / e.full_path);
      write_png(written.back(), p.full_image);
      entries.push_back(std::move(e));
    }
    std::string text;
    for (const auto& e : entries) text += manifest_line(e) + "\n";
    write_file_atomic(out_dir / "manifest.jsonl", text);
  } catch (...) {
    for (const auto& f : written) fs::remove(f, ec);
    throw;
  }
  return entries;
}

std::vector<CorpusEntry> read_corpus(const fs::path& dir) {
  const std::string text = read_file(dir / "captions.jsonl");
  std::vector<CorpusEntry> out;
  std::set<std::string> seen;
  std::size_t start = 0;
  int line_no = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    const std::string line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      CorpusEntry e;
      e.id = j.at("id").get<std::string>();
      e.file = dir / j.at("file").get<std::string>();
      e.caption = j.value("caption", std::string());
      if (!seen.insert(e.id).second) throw FormatError("duplicate corpus id '" + e.id + "'");
      out.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw FormatError("captions.jsonl line " + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return out;
}

PipelineResult run_pipeline(const std::vector<SourceItem>& sources, const PipelineConfig& cfg) {
  require_valid_setting(cfg.setting);
  require_valid(cfg.planner);
  require_valid(cfg.loss);
  for (const auto& s : cfg.strategies) require_valid(s);

  struct ItemResult {
    std::vector<TrainingPair> pairs;
    std::vector<std::string> log;
  };
  std::vector<ItemResult> results(sources.size());
  std::vector<std::exception_ptr> errors(sources.size());
  const int n_workers = std::clamp(cfg.workers, 1, std::max<int>(1, static_cast<int>(sources.size())));

  auto process = [&](std::size_t i) {
    const SourceItem& src = sources[i];
    ItemResult& out = results[i];
    const std::uint64_t item_seed = mix_seed(cfg.seed, hash_string(src.id));
    PlannerConfig pc = cfg.planner;
    pc.seed = item_seed;
    if (n_workers > 1) pc.workers = 1;

    Simulation sim;
    try {
      sim = simulate_full(src, cfg.setting, pc, cfg.loss);
    } catch (const Error& e) {
      out.log.push_back("skip " + src.id + ": " + e.what());
      return;
    }
    const FilterDecision filter = filter_pair(sim.canvas, src, cfg.embedding, cfg.filter_threshold);
    if (filter.undecided) out.log.push_back("undecided " + src.id + ": " + filter.reason);
    const Canvas blank(src.image.width(), src.image.height());
    for (std::size_t j = 0; j < cfg.strategies.size(); ++j) {
      const RemovalStrategy& strategy = cfg.strategies[j];
      TrainingPair p;
      p.source_id = src.id;
      p.caption = src.caption;
      p.strategy = strategy;
      p.full_plan = sim.plan;
      p.full_image = sim.canvas.pixels();
      p.filter = filter;
      try {
        if (sim.plan.strokes.empty()) {
          p.partial_plan = sim.plan;
        } else {
          p.partial_plan = make_partial(sim.plan, strategy, src.image, mix_seed(item_seed, j + 1), cfg.regions);
        }
      } catch (const Error& e) {
        out.log.push_back("skip " + src.id + " " + to_tag(strategy) + ": " + e.what());
        continue;
      }
      p.partial_image = render_plan(p.partial_plan, blank, Author::robot).pixels();
      out.pairs.push_back(std::move(p));
    }
  };
  auto run = [&](int worker) {
    for (std::size_t i = worker; i < sources.size(); i += n_workers) {
      try {
        process(i);
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

  PipelineResult result;
  for (auto& r : results) {
    for (auto& p : r.pairs) result.pairs.push_back(std::move(p));
    for (auto& l : r.log) result.log.push_back(std::move(l));
  }
  return result;
}

PipelineResult run_pipeline(const std::vector<CorpusEntry>& corpus, const PipelineConfig& cfg) {
  std::vector<SourceItem> sources;
  std::vector<std::string> log;
  for (const auto& entry : corpus) {
    try {
      Image img = read_png(entry.file);
      if (img.width() != cfg.width || img.height() != cfg.height) img = resize_letterbox(img, cfg.width, cfg.height);
      sources.push_back({entry.id, std::move(img), entry.caption});
    } catch (const Error& e) {
      log.push_back("skip " + entry.id + ": " + e.what());
    }
  }
  PipelineResult result = run_pipeline(sources, cfg);
  log.insert(log.end(), result.log.begin(), result.log.end());
  result.log = std::move(log);
  return result;
}

}  // namespace copaint

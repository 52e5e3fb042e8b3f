#include "copaint/session.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>
#include <random>

#include "copaint/errors.hpp"
#include "copaint/http.hpp"
#include "copaint/io.hpp"
#include "copaint/palette.hpp"
#include "copaint/render.hpp"
#include "copaint/rng.hpp"
#include "json_codec.hpp"

namespace copaint {

namespace fs = std::filesystem;
using detail::ordered_json;

namespace {

std::string random_id() {
  static thread_local std::random_device rd;
  static constexpr char kHex[] = "0123456789abcdef";
  std::string id;
  for (int i = 0; i < 4; ++i) {
    std::uint32_t v = rd();
    for (int k = 0; k < 4; ++k, v >>= 4) id.push_back(kHex[v & 0xf]);
  }
  return id;
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string turn_stem(std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04zu", index);
  return buf;
}

Author parse_author(const std::string& s) {
  if (s == "human") return Author::human;
  if (s == "robot") return Author::robot;
  throw FormatError("unknown turn author '" + s + "'");
}

const ordered_json& field(const ordered_json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw FormatError(std::string("session.json: missing field '") + key + "'");
  return j.at(key);
}

template <typename T>
T get(const ordered_json& j, const char* key) {
  try {
    return field(j, key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("session.json: bad field '") + key + "': " + e.what());
  }
}

ordered_json metrics_json(const Turn& t) {
  ordered_json m = ordered_json::object();
  for (const auto& [k, v] : t.metrics) m[k] = v;
  return m;
}

SessionState append(const SessionState& s, Turn turn) {
  SessionState next = s;
  next.current = turn.after;
  next.turns.push_back(std::move(turn));
  return next;
}

}  // namespace

TargetProviderConfig TargetProviderConfig::file(fs::path p) {
  TargetProviderConfig c;
  c.kind = Kind::file;
  c.path = std::move(p);
  return c;
}

TargetProviderConfig TargetProviderConfig::http(std::string url, double timeout_s) {
  TargetProviderConfig c;
  c.kind = Kind::http;
  c.endpoint = std::move(url);
  c.timeout_s = timeout_s;
  return c;
}

void require_valid(const TargetProviderConfig& p) {
  if (p.kind == TargetProviderConfig::Kind::file) {
    if (p.path.empty()) throw ConstraintViolation("file target provider needs a path", {"path"});
    if (!p.endpoint.empty()) throw ConstraintViolation("file target provider cannot have an endpoint", {"endpoint"});
  } else {
    if (!p.path.empty()) throw ConstraintViolation("http target provider cannot have a path", {"path"});
    parse_url(p.endpoint);
    if (!(p.timeout_s > 0)) throw ConstraintViolation("timeout must be positive", {"timeout_s"});
  }
}

TargetProviderConfig parse_target_provider(const std::string& spec, double timeout_s) {
  if (spec.rfind("file:", 0) == 0) return TargetProviderConfig::file(spec.substr(5));
  if (spec.rfind("http://", 0) == 0) {
    auto p = TargetProviderConfig::http(spec, timeout_s);
    require_valid(p);
    return p;
  }
  throw FormatError("target provider must be file:PATH or an http:// URL, got '" + spec + "'");
}

Image fetch_target(const TargetProviderConfig& provider, const Canvas& current,
                   const std::optional<std::string>& prompt) {
  require_valid(provider);
  Image raw;
  if (provider.kind == TargetProviderConfig::Kind::file) {
    std::string bytes;
    try {
      bytes = read_file(provider.path);
    } catch (const IoError& e) {
      throw ProviderError(std::string("target file unavailable: ") + e.what());
    }
    try {
      raw = decode_png(bytes);
    } catch (const FormatError& e) {
      throw FormatError(provider.path.string() + ": " + e.what());
    }
  } else {
    const std::vector<HttpPart> parts{{"prompt", prompt.value_or(""), "", "text/plain"},
                                      {"canvas", encode_png(current.pixels()), "canvas.png", "image/png"}};
    const HttpResponse res = http_post_multipart(provider.endpoint, parts, provider.timeout_s);
    try {
      raw = decode_png(res.body);
    } catch (const FormatError& e) {
      throw FormatError("target from " + provider.endpoint + " is not a PNG: " + e.what());
    }
  }
  return resize_letterbox(raw, current.width(), current.height());
}

SessionState new_session(const PaintingSetting& setting, int width_px, int height_px) {
  if (width_px <= 0 || height_px <= 0)
    throw ConstraintViolation("canvas dimensions must be positive", {"width", "height"});
  require_valid_setting(setting);
  SessionState s;
  s.id = random_id();
  s.setting = setting;
  s.width = width_px;
  s.height = height_px;
  s.current = std::make_shared<const Canvas>(width_px, height_px);
  s.created_at = utc_now();
  return s;
}

SessionState apply_human_strokes(const SessionState& session, const std::vector<StrokeParams>& strokes) {
  for (std::size_t i = 0; i < strokes.size(); ++i) {
    const auto violations = validate_stroke(strokes[i], session.setting);
    if (violations.empty()) continue;
    std::vector<std::string> fields;
    std::string msg = "stroke " + std::to_string(i) + " rejected:";
    for (const auto& v : violations) {
      fields.push_back(v.field);
      msg += " " + v.message + ";";
    }
    throw ConstraintViolation(msg, fields, static_cast<int>(i));
  }
  Turn t;
  t.author = Author::human;
  t.plan.strokes = strokes;
  t.plan.setting = session.setting;
  t.plan.source_tag = "human";
  t.before = session.current;
  t.after = std::make_shared<const Canvas>(render_plan(t.plan, *session.current, Author::human));
  return append(session, std::move(t));
}

double preservation_score(const Canvas& before, const Canvas& after) {
  if (before.width() != after.width() || before.height() != after.height())
    throw DimensionMismatch("preservation_score: canvases differ in size");
  std::size_t human = 0, kept = 0;
  const auto& a = before.pixels().pixels();
  const auto& b = after.pixels().pixels();
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (before.authorship()[i] != Author::human) continue;
    ++human;
    const double d = std::max({std::abs(static_cast<double>(a[i].r) - b[i].r),
                               std::abs(static_cast<double>(a[i].g) - b[i].g),
                               std::abs(static_cast<double>(a[i].b) - b[i].b)});
    if (d <= kPreservationTolerance) ++kept;
  }
  return human == 0 ? 1.0 : static_cast<double>(kept) / static_cast<double>(human);
}

RobotTurnResult robot_turn(const SessionState& session, const TargetProviderConfig& provider,
                           const std::optional<std::string>& prompt, const RobotTurnOptions& options) {
  require_valid(options.planner);
  require_valid(options.loss);
  const Canvas& current = *session.current;
  auto target = std::make_shared<const Image>(fetch_target(provider, current, prompt));

  PaintingSetting setting = session.setting;
  if (!setting.palette.fixed) setting.palette = derive_palette(*target, setting);
  PlannerConfig pc = options.planner;
  pc.seed = mix_seed(options.planner.seed, session.turns.size());
  PlanReport report = plan_strokes_report(*target, current, setting, pc, options.loss);

  Turn t;
  t.author = Author::robot;
  t.plan = report.plan;
  t.plan.source_tag = "robot_turn:" + std::to_string(session.turns.size());
  t.before = session.current;
  t.after = std::make_shared<const Canvas>(std::move(report.canvas));
  t.prompt = prompt;
  t.target = target;
  t.metrics["delta_pix"] = delta_pix(*target, t.after->pixels());
  t.metrics["delta_sem"] = delta_sem(*target, t.after->pixels(), options.embedding);
  t.metrics["preservation"] = preservation_score(current, *t.after);
  t.metrics["loss_before"] = report.initial_loss;
  t.metrics["loss_after"] = report.final_loss;
  StrokePlan plan = t.plan;
  return {append(session, std::move(t)), std::move(plan)};
}

Canvas replay(const SessionState& session) {
  Canvas c(session.width, session.height);
  for (const auto& t : session.turns) c = render_plan(t.plan, c, t.author);
  return c;
}

void export_session(const SessionState& session, const fs::path& dir) {
  fs::create_directories(dir / "turns");
  ordered_json turns = ordered_json::array();
  for (std::size_t i = 0; i < session.turns.size(); ++i) {
    const Turn& t = session.turns[i];
    const std::string stem = "turns/" + turn_stem(i);
    write_png(dir / (stem + ".png"), t.after->pixels());
    write_plan(dir / (stem + ".plan.json"), t.plan);
    ordered_json j;
    j["index"] = i;
    j["author"] = std::string(to_string(t.author));
    j["canvas"] = stem + ".png";
    j["plan"] = stem + ".plan.json";
    j["prompt"] = t.prompt ? ordered_json(*t.prompt) : ordered_json(nullptr);
    if (t.target) {
      write_png(dir / (stem + ".target.png"), *t.target);
      j["target"] = stem + ".target.png";
    } else {
      j["target"] = nullptr;
    }
    j["metrics"] = metrics_json(t);
    turns.push_back(std::move(j));
  }
  ordered_json doc;
  doc["version"] = kSessionFormatVersion;
  doc["id"] = session.id;
  doc["created_at"] = session.created_at;
  doc["width"] = session.width;
  doc["height"] = session.height;
  doc["setting"] = detail::to_json(session.setting);
  doc["turns"] = std::move(turns);
  write_file_atomic(dir / "session.json", doc.dump(2) + "\n");
}

SessionState load_session(const fs::path& dir) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(read_file(dir / "session.json"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError((dir / "session.json").string() + ": " + e.what());
  }
  if (get<int>(doc, "version") != kSessionFormatVersion) throw FormatError("unsupported session version");
  SessionState s;
  s.id = get<std::string>(doc, "id");
  s.created_at = get<std::string>(doc, "created_at");
  s.width = get<int>(doc, "width");
  s.height = get<int>(doc, "height");
  s.setting = detail::setting_from_json(field(doc, "setting"));
  if (s.width <= 0 || s.height <= 0) throw FormatError("session.json: bad canvas size");
  s.current = std::make_shared<const Canvas>(s.width, s.height);

  for (const auto& tj : field(doc, "turns")) {
    Turn t;
    t.author = parse_author(get<std::string>(tj, "author"));
    t.plan = read_plan(dir / get<std::string>(tj, "plan"));
    t.before = s.current;
    t.after = std::make_shared<const Canvas>(render_plan(t.plan, *t.before, t.author));
    const std::string canvas_file = get<std::string>(tj, "canvas");
    if (read_file(dir / canvas_file) != encode_png(t.after->pixels()))
      throw FormatError("replayed canvas differs from " + canvas_file);
    if (!field(tj, "prompt").is_null()) t.prompt = get<std::string>(tj, "prompt");
    if (!field(tj, "target").is_null())
      t.target = std::make_shared<const Image>(read_png(dir / get<std::string>(tj, "target")));
    for (const auto& [k, v] : field(tj, "metrics").items()) t.metrics[k] = v.get<double>();
    s = append(s, std::move(t));
  }
  return s;
}

std::string session_to_json(const SessionState& session) {
  ordered_json doc;
  doc["id"] = session.id;
  doc["created_at"] = session.created_at;
  doc["width"] = session.width;
  doc["height"] = session.height;
  doc["setting"] = detail::to_json(session.setting);
  doc["turn_count"] = session.turns.size();
  ordered_json turns = ordered_json::array();
  for (std::size_t i = 0; i < session.turns.size(); ++i) {
    const Turn& t = session.turns[i];
    ordered_json j;
    j["index"] = i;
    j["author"] = std::string(to_string(t.author));
    j["stroke_count"] = t.plan.strokes.size();
    j["prompt"] = t.prompt ? ordered_json(*t.prompt) : ordered_json(nullptr);
    j["metrics"] = metrics_json(t);
    turns.push_back(std::move(j));
  }
  doc["turns"] = std::move(turns);
  return doc.dump();
}

std::string session_metrics_json(const SessionState& session) {
  ordered_json turns = ordered_json::array();
  for (std::size_t i = 0; i < session.turns.size(); ++i) {
    ordered_json j;
    j["index"] = i;
    j["author"] = std::string(to_string(session.turns[i].author));
    j["metrics"] = metrics_json(session.turns[i]);
    turns.push_back(std::move(j));
  }
  return ordered_json{{"turns", std::move(turns)}}.dump();
}

std::vector<StrokeParams> strokes_from_json(std::string_view text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("strokes JSON parse error: ") + e.what());
  }
  if (j.is_object()) j = field(j, "strokes");
  if (!j.is_array()) throw FormatError("strokes must be an array");
  std::vector<StrokeParams> out;
  for (const auto& s : j) {
    try {
      out.push_back(detail::stroke_from_json(s));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("bad stroke: ") + e.what());
    }
  }
  return out;
}

}  // namespace copaint

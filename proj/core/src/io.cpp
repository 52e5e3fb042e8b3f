#include "copaint/io.hpp"

#include <png.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json_codec.hpp"

namespace copaint {

namespace {

struct ReadCursor {
  std::string_view bytes;
  std::size_t pos = 0;
};

void png_read_bytes(png_structp png, png_bytep out, png_size_t n) {
  auto* cur = static_cast<ReadCursor*>(png_get_io_ptr(png));
  if (cur->pos + n > cur->bytes.size()) png_error(png, "truncated PNG stream");
  std::memcpy(out, cur->bytes.data() + cur->pos, n);
  cur->pos += n;
}

void png_write_bytes(png_structp png, png_bytep data, png_size_t n) {
  auto* out = static_cast<std::string*>(png_get_io_ptr(png));
  out->append(reinterpret_cast<const char*>(data), n);
}

void png_flush_noop(png_structp) {}

[[noreturn]] void png_fail(png_structp png, png_const_charp msg) {
  auto* err = static_cast<std::string*>(png_get_error_ptr(png));
  if (err) *err = msg;
  png_longjmp(png, 1);
}

void png_warn_ignore(png_structp, png_const_charp) {}

std::uint8_t to_byte(float v) {
  const float c = std::clamp(v, 0.f, 1.f);
  return static_cast<std::uint8_t>(std::lround(c * 255.f));
}

}  // namespace

Image decode_png(std::string_view bytes) {
  if (bytes.size() < 8 || png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) != 0)
    throw FormatError("not a PNG image");

  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_fail, png_warn_ignore);
  if (!png) throw FormatError("libpng init failed");
  png_infop info = png_create_info_struct(png);
  ReadCursor cursor{bytes, 0};
  std::vector<std::uint8_t> buffer;
  std::vector<png_bytep> rows;
  png_uint_32 w = 0, h = 0;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("PNG decode failed: " + err);
  }
  png_set_read_fn(png, &cursor, png_read_bytes);
  png_read_info(png, info);
  w = png_get_image_width(png, info);
  h = png_get_image_height(png, info);
  const int color_type = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  // Alpha is dropped rather than composited; inputs are expected to be opaque.
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  const png_size_t rowbytes = png_get_rowbytes(png, info);
  if (rowbytes != static_cast<png_size_t>(w) * 3) png_error(png, "unexpected row layout");
  buffer.resize(rowbytes * h);
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = buffer.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Image img(static_cast<int>(w), static_cast<int>(h));
  for (std::size_t i = 0; i < img.pixel_count(); ++i)
    img.pixels()[i] = {buffer[3 * i] / 255.f, buffer[3 * i + 1] / 255.f, buffer[3 * i + 2] / 255.f};
  return img;
}

std::string encode_png(const Image& img) {
  if (img.empty()) throw FormatError("cannot encode an empty image");
  std::vector<std::uint8_t> buffer(img.pixel_count() * 3);
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    const Rgb& c = img.pixels()[i];
    buffer[3 * i] = to_byte(c.r);
    buffer[3 * i + 1] = to_byte(c.g);
    buffer[3 * i + 2] = to_byte(c.b);
  }
  std::string out;
  std::string err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_fail, png_warn_ignore);
  if (!png) throw FormatError("libpng init failed");
  png_infop info = png_create_info_struct(png);
  std::vector<png_bytep> rows(img.height());
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw FormatError("PNG encode failed: " + err);
  }
  png_set_write_fn(png, &out, png_write_bytes, png_flush_noop);
  png_set_IHDR(png, info, img.width(), img.height(), 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, 6);
  png_write_info(png, info);
  for (int y = 0; y < img.height(); ++y) rows[y] = buffer.data() + static_cast<std::size_t>(y) * img.width() * 3;
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view data) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot rename into " + path.string());
  }
}

Image read_png(const std::filesystem::path& path) {
  try {
    return decode_png(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_png(const std::filesystem::path& path, const Image& img) { write_file_atomic(path, encode_png(img)); }

std::string plan_to_json(const StrokePlan& plan) { return detail::to_json(plan).dump(2) + "\n"; }

StrokePlan plan_from_json(std::string_view text) {
  detail::ordered_json j;
  try {
    j = detail::ordered_json::parse(text);
  } catch (const std::exception& e) {
    throw FormatError(std::string("plan JSON parse error: ") + e.what());
  }
  return detail::plan_from_json(j);
}

void write_plan(const std::filesystem::path& path, const StrokePlan& plan) {
  write_file_atomic(path, plan_to_json(plan));
}

StrokePlan read_plan(const std::filesystem::path& path) { return plan_from_json(read_file(path)); }

namespace detail {

ordered_json to_json(const Point& p) { return ordered_json::array({p.x, p.y}); }

// Palette channels are floats; widen exactly so the JSON round-trips.
ordered_json to_json(const Rgb& c) {
  return ordered_json::array({static_cast<double>(c.r), static_cast<double>(c.g), static_cast<double>(c.b)});
}

ordered_json to_json(const StrokeParams& s) {
  ordered_json j;
  j["p0"] = to_json(s.p0);
  j["p1"] = to_json(s.p1);
  j["p2"] = to_json(s.p2);
  j["width"] = s.width;
  j["color_index"] = s.color_index;
  j["opacity"] = s.opacity;
  return j;
}

ordered_json to_json(const PaintingSetting& s) {
  ordered_json j;
  j["media"] = std::string(to_string(s.media));
  ordered_json colors = ordered_json::array();
  for (const Rgb& c : s.palette.colors) colors.push_back(to_json(c));
  j["palette"] = {{"colors", colors}, {"fixed", s.palette.fixed}};
  ordered_json brush;
  brush["min_width"] = s.brush.min_width;
  brush["max_width"] = s.brush.max_width;
  brush["stamp_spacing"] = s.brush.stamp_spacing;
  brush["blend_mode"] = std::string(to_string(s.brush.blend_mode));
  j["brush"] = brush;
  j["stroke_budget"] = s.stroke_budget;
  return j;
}

ordered_json to_json(const StrokePlan& p) {
  ordered_json j;
  j["version"] = kPlanFormatVersion;
  j["setting"] = to_json(p.setting);
  j["seed"] = p.seed;
  j["source_tag"] = p.source_tag;
  ordered_json strokes = ordered_json::array();
  for (const auto& s : p.strokes) strokes.push_back(to_json(s));
  j["strokes"] = strokes;
  return j;
}

namespace {

const ordered_json& field(const ordered_json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw FormatError(std::string("missing field '") + key + "'");
  return j.at(key);
}

template <typename T>
T get(const ordered_json& j, const char* key) {
  try {
    return field(j, key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad field '") + key + "': " + e.what());
  }
}

}  // namespace

Point point_from_json(const ordered_json& j) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    throw FormatError("point must be [x, y]");
  return {j[0].get<double>(), j[1].get<double>()};
}

Rgb rgb_from_json(const ordered_json& j) {
  if (!j.is_array() || j.size() != 3) throw FormatError("color must be [r, g, b]");
  return {static_cast<float>(j[0].get<double>()), static_cast<float>(j[1].get<double>()),
          static_cast<float>(j[2].get<double>())};
}

StrokeParams stroke_from_json(const ordered_json& j) {
  StrokeParams s;
  s.p0 = point_from_json(field(j, "p0"));
  s.p1 = point_from_json(field(j, "p1"));
  s.p2 = point_from_json(field(j, "p2"));
  s.width = get<double>(j, "width");
  s.color_index = get<int>(j, "color_index");
  s.opacity = get<double>(j, "opacity");
  return s;
}

PaintingSetting setting_from_json(const ordered_json& j) {
  PaintingSetting s;
  s.media = parse_media(get<std::string>(j, "media"));
  const auto& pal = field(j, "palette");
  s.palette.colors.clear();
  for (const auto& c : field(pal, "colors")) s.palette.colors.push_back(rgb_from_json(c));
  s.palette.fixed = get<bool>(pal, "fixed");
  const auto& b = field(j, "brush");
  s.brush.min_width = get<double>(b, "min_width");
  s.brush.max_width = get<double>(b, "max_width");
  s.brush.stamp_spacing = get<double>(b, "stamp_spacing");
  s.brush.blend_mode = parse_blend_mode(get<std::string>(b, "blend_mode"));
  s.stroke_budget = get<int>(j, "stroke_budget");
  return s;
}

StrokePlan plan_from_json(const ordered_json& j) {
  const int version = get<int>(j, "version");
  if (version != kPlanFormatVersion)
    throw FormatError("unsupported plan version " + std::to_string(version));
  StrokePlan p;
  p.setting = setting_from_json(field(j, "setting"));
  p.seed = get<std::uint64_t>(j, "seed");
  p.source_tag = get<std::string>(j, "source_tag");
  for (const auto& s : field(j, "strokes")) p.strokes.push_back(stroke_from_json(s));
  return p;
}

}  // namespace detail

}  // namespace copaint

#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "copaint/stroke.hpp"

namespace copaint {

// PNG is 8-bit RGB; channel values map linearly to [0,1]. Alpha, palette and
// 16-bit inputs are converted on load.
Image decode_png(std::string_view bytes);
std::string encode_png(const Image& img);
Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& img);

inline constexpr int kPlanFormatVersion = 1;

/// Versioned plan document with a fixed key order:
/// {version, setting, seed, source_tag, strokes:[{p0,p1,p2,width,color_index,opacity}]}
std::string plan_to_json(const StrokePlan& plan);
StrokePlan plan_from_json(std::string_view text);
void write_plan(const std::filesystem::path& path, const StrokePlan& plan);
StrokePlan read_plan(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
/// Writes through a sibling temp file and renames, so readers never observe a
/// half-written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view data);

}  // namespace copaint

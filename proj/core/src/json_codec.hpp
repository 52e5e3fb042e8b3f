#pragma once

// Internal JSON helpers shared by the plan, session and dataset formats.

#include "json.hpp"

#include "copaint/stroke.hpp"

namespace copaint::detail {

using ordered_json = nlohmann::ordered_json;

ordered_json to_json(const Point& p);
ordered_json to_json(const Rgb& c);
ordered_json to_json(const StrokeParams& s);
ordered_json to_json(const PaintingSetting& s);
ordered_json to_json(const StrokePlan& p);

Point point_from_json(const ordered_json& j);
Rgb rgb_from_json(const ordered_json& j);
StrokeParams stroke_from_json(const ordered_json& j);
PaintingSetting setting_from_json(const ordered_json& j);
StrokePlan plan_from_json(const ordered_json& j);

}  // namespace copaint::detail

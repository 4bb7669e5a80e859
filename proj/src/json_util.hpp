#pragma once

// JSON conversions shared by the manifest, parser and report code.

#include <optional>
#include <string>

#include "json.hpp"
#include "veritas/core.hpp"

namespace veritas::detail {

using nlohmann::json;

/// Non-throwing conversions; on failure `reason` is filled and nullopt returned.
std::optional<BoundingBox> box_from_json(const json& j, std::string& reason);
std::optional<TimeSpan> span_from_json(const json& j, std::string& reason);
std::optional<SecondIndexedBoxes> second_boxes_from_json(const json& j, std::string& reason);

/// Strict decimal parse of a non-negative integer second key ("9", "10").
std::optional<std::int64_t> parse_second_key(std::string_view key);

json to_json(const BoundingBox& box);
json to_json(const TimeSpan& span);
json to_json(const SecondIndexedBoxes& boxes);

}  // namespace veritas::detail

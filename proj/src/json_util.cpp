#include "json_util.hpp"

#include <charconv>
#include <cmath>

namespace veritas::detail {

namespace {

bool finite_number(const json& j) {
  return j.is_number() && std::isfinite(j.get<double>());
}

}  // namespace

std::optional<BoundingBox> box_from_json(const json& j, std::string& reason) {
  if (!j.is_array() || j.size() != 4) {
    reason = "bounding box must be a 4-element array";
    return std::nullopt;
  }
  for (const auto& v : j) {
    if (!finite_number(v)) {
      reason = "bounding box entries must be finite numbers";
      return std::nullopt;
    }
  }
  BoundingBox box{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(),
                  j[3].get<double>()};
  if (!box.valid()) {
    reason = "bounding box must satisfy 0 <= x1 <= x2 and 0 <= y1 <= y2";
    return std::nullopt;
  }
  return box;
}

std::optional<TimeSpan> span_from_json(const json& j, std::string& reason) {
  if (!j.is_array() || j.size() != 2) {
    reason = "time span must be a 2-element array";
    return std::nullopt;
  }
  if (!finite_number(j[0]) || !finite_number(j[1])) {
    reason = "time span entries must be finite numbers";
    return std::nullopt;
  }
  TimeSpan span{j[0].get<double>(), j[1].get<double>()};
  if (!span.valid()) {
    reason = "time span end precedes start";
    return std::nullopt;
  }
  return span;
}

std::optional<std::int64_t> parse_second_key(std::string_view key) {
  if (key.empty()) return std::nullopt;
  std::int64_t value = 0;
  auto [ptr, ec] = std::from_chars(key.data(), key.data() + key.size(), value);
  if (ec != std::errc{} || ptr != key.data() + key.size() || value < 0) return std::nullopt;
  return value;
}

std::optional<SecondIndexedBoxes> second_boxes_from_json(const json& j, std::string& reason) {
  if (!j.is_object()) {
    reason = "boxes must be an object keyed by integer seconds";
    return std::nullopt;
  }
  SecondIndexedBoxes out;
  for (const auto& [key, value] : j.items()) {
    auto second = parse_second_key(key);
    if (!second) {
      reason = "non-integer second key '" + key + "'";
      return std::nullopt;
    }
    auto box = box_from_json(value, reason);
    if (!box) return std::nullopt;
    if (!out.emplace(*second, *box).second) {
      reason = "duplicate second " + std::to_string(*second);
      return std::nullopt;
    }
  }
  return out;
}

json to_json(const BoundingBox& box) { return json::array({box.x1, box.y1, box.x2, box.y2}); }

json to_json(const TimeSpan& span) { return json::array({span.start_s, span.end_s}); }

json to_json(const SecondIndexedBoxes& boxes) {
  json out = json::object();
  for (const auto& [second, box] : boxes) out[std::to_string(second)] = to_json(box);
  return out;
}

}  // namespace veritas::detail

#include "veritas/rewards.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>

#include "json_util.hpp"
#include "veritas/geometry.hpp"

namespace veritas {

using detail::json;

namespace {

RewardRecord zero_record(Task task) {
  RewardRecord r;
  r.task = task;
  r.reward = 0.0;
  r.parse_ok = false;
  return r;
}

}  // namespace

RewardRecord track_reward(const SecondIndexedBoxes& pred, const SecondIndexedBoxes& gt) {
  RewardRecord r;
  r.task = Task::kTracking;
  r.reward = mean_box_iou(pred, gt);
  r.components["spatial"] = r.reward;
  r.parse_ok = true;
  return r;
}

RewardRecord track_reward(const ParsedResponse& pred, const TrackingAnnotation& gt) {
  if (gt.boxes.empty()) throw ConfigError("no reference frames");
  if (const auto* t = std::get_if<TrackingResult>(&pred)) return track_reward(t->boxes, gt.boxes);
  auto r = zero_record(Task::kTracking);
  r.components["spatial"] = 0.0;
  return r;
}

RewardRecord ground_reward(const GroundingResult& pred, const GroundingAnnotation& gt) {
  RewardRecord r;
  r.task = Task::kGrounding;
  const double temporal = span_iou(pred.time, gt.span);
  const double spatial = mean_box_iou(pred.boxes, gt.boxes);
  r.components["temporal"] = temporal;
  r.components["spatial"] = spatial;
  r.reward = 0.5 * temporal + 0.5 * spatial;
  r.parse_ok = true;
  return r;
}

RewardRecord ground_reward(const ParsedResponse& pred, const GroundingAnnotation& gt) {
  if (gt.boxes.empty()) throw ConfigError("no reference frames");
  if (const auto* g = std::get_if<GroundingResult>(&pred)) return ground_reward(*g, gt);
  auto r = zero_record(Task::kGrounding);
  r.components["temporal"] = 0.0;
  r.components["spatial"] = 0.0;
  return r;
}

double count_reward_shape(std::int64_t pred_count, std::int64_t gt_count, double eps) {
  const double err = std::abs(static_cast<double>(pred_count - gt_count));
  return std::max(0.0, 1.0 - err / (static_cast<double>(gt_count) + eps));
}

RewardRecord count_reward(const CountingResult& pred, const ShapeCounts& gt, double eps) {
  RewardRecord r;
  r.task = Task::kCounting;
  double sum = 0.0;
  for (auto kind : kAllShapeKinds) {
    const double v = count_reward_shape(pred.counts[kind], gt[kind], eps);
    r.components[std::string(to_string(kind))] = v;
    sum += v;
  }
  r.reward = sum / static_cast<double>(kNumShapeKinds);
  r.parse_ok = true;
  return r;
}

RewardRecord count_reward(const ParsedResponse& pred, const ShapeCounts& gt, double eps) {
  if (const auto* c = std::get_if<CountingResult>(&pred)) return count_reward(*c, gt, eps);
  auto r = zero_record(Task::kCounting);
  for (auto kind : kAllShapeKinds) r.components[std::string(to_string(kind))] = 0.0;
  return r;
}

RewardRecord detection_reward(const ParsedResponse& resp, Label gt_label, double alpha) {
  RewardRecord r = zero_record(Task::kDetection);
  double acc = 0.0;
  double format = 0.0;
  if (const auto* d = std::get_if<DetectionVerdict>(&resp)) {
    acc = d->verdict == gt_label ? 1.0 : 0.0;
    format = d->had_answer_tags ? 1.0 : 0.0;
    r.parse_ok = true;
  }
  r.components["acc"] = acc;
  r.components["format"] = format;
  r.reward = acc + alpha * format;
  return r;
}

RewardRecord artifact_grounding_reward(const ParsedResponse& pred,
                                       const ArtifactGroundingAnnotation& gt) {
  if (gt.boxes.empty()) throw ConfigError("no reference boxes");
  RewardRecord r = zero_record(Task::kArtifactGrounding);
  r.components["spatial"] = 0.0;
  const auto* a = std::get_if<ArtifactGroundingResult>(&pred);
  if (!a) return r;
  r.parse_ok = true;

  struct Pair {
    double iou;
    std::size_t p;
    std::size_t g;
  };
  std::vector<Pair> pairs;
  for (std::size_t p = 0; p < a->boxes.size(); ++p) {
    for (std::size_t g = 0; g < gt.boxes.size(); ++g) {
      pairs.push_back({box_iou(a->boxes[p], gt.boxes[g]), p, g});
    }
  }
  // Ties broken by index so the matching is deterministic.
  std::stable_sort(pairs.begin(), pairs.end(),
                   [](const Pair& x, const Pair& y) { return x.iou > y.iou; });
  std::vector<bool> pred_used(a->boxes.size(), false);
  std::vector<bool> gt_used(gt.boxes.size(), false);
  double sum = 0.0;
  for (const auto& pr : pairs) {
    if (pr.iou <= 0.0) break;
    if (pred_used[pr.p] || gt_used[pr.g]) continue;
    pred_used[pr.p] = gt_used[pr.g] = true;
    sum += pr.iou;
  }
  r.reward = sum / static_cast<double>(gt.boxes.size());
  r.components["spatial"] = r.reward;
  return r;
}

RewardRecord score_response(const ManifestEntry& entry, std::string_view raw_text,
                            const LossConfig& cfg) {
  const ParsedResponse parsed = parse_response(entry.task, raw_text);
  RewardRecord r = std::visit(
      [&](const auto& a) -> RewardRecord {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, DetectionAnnotation>) {
          return detection_reward(parsed, *entry.label, cfg.alpha);
        } else if constexpr (std::is_same_v<T, GroundingAnnotation>) {
          return ground_reward(parsed, a);
        } else if constexpr (std::is_same_v<T, TrackingAnnotation>) {
          return track_reward(parsed, a);
        } else if constexpr (std::is_same_v<T, CountingAnnotation>) {
          return count_reward(parsed, a.counts, cfg.eps_count);
        } else {
          return artifact_grounding_reward(parsed, a);
        }
      },
      entry.annotation);
  r.id = entry.id;
  return r;
}

std::vector<ResponseRecord> parse_responses(std::istream& in) {
  std::vector<ResponseRecord> out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw ParseError("not a JSON object", line);
    if (!j.contains("id") || !j["id"].is_string()) throw ParseError("missing string 'id'", line);
    if (!j.contains("raw_text") || !j["raw_text"].is_string())
      throw ParseError("missing string 'raw_text'", line);
    ResponseRecord r{j["id"].get<std::string>(), j["raw_text"].get<std::string>(), std::nullopt};
    if (j.contains("task")) {
      auto task = j["task"].is_string() ? task_from_string(j["task"].get<std::string>())
                                        : std::nullopt;
      if (!task) throw ParseError("unknown task", line);
      r.task = task;
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<ResponseRecord> load_responses(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open responses " + path.string());
  return parse_responses(in);
}

std::vector<RewardRecord> score_file(const std::vector<ResponseRecord>& responses,
                                     const DatasetManifest& manifest, const LossConfig& cfg) {
  cfg.validate();
  std::vector<RewardRecord> out;
  out.reserve(responses.size());
  for (const auto& resp : responses) {
    const ManifestEntry* entry = manifest.find(resp.id);
    if (!entry) throw ConfigError("unknown id '" + resp.id + "'");
    if (resp.task && *resp.task != entry->task)
      throw ConfigError("task mismatch for id '" + resp.id + "': response says " +
                        std::string(to_string(*resp.task)) + ", manifest says " +
                        std::string(to_string(entry->task)));
    out.push_back(score_response(*entry, resp.raw_text, cfg));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const RewardRecord& a, const RewardRecord& b) { return a.id < b.id; });
  return out;
}

void write_rewards(const std::vector<RewardRecord>& records, std::ostream& out) {
  for (const auto& r : records) {
    json j = {{"id", r.id},
              {"task", to_string(r.task)},
              {"reward", r.reward},
              {"components", r.components},
              {"parse_ok", r.parse_ok}};
    out << j.dump() << '\n';
  }
}

}  // namespace veritas

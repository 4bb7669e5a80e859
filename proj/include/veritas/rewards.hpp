#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "veritas/core.hpp"
#include "veritas/parsers.hpp"

namespace veritas {

struct RewardRecord {
  std::string id;
  Task task = Task::kDetection;
  double reward = 0.0;
  std::map<std::string, double> components;
  bool parse_ok = false;

  friend bool operator==(const RewardRecord&, const RewardRecord&) = default;
};

/// Mean per-second IoU against the reference track.
RewardRecord track_reward(const SecondIndexedBoxes& pred, const SecondIndexedBoxes& gt);
RewardRecord track_reward(const ParsedResponse& pred, const TrackingAnnotation& gt);

/// Half temporal IoU plus half mean spatial IoU.
RewardRecord ground_reward(const GroundingResult& pred, const GroundingAnnotation& gt);
RewardRecord ground_reward(const ParsedResponse& pred, const GroundingAnnotation& gt);

/// max(0, 1 - |pred - gt| / (gt + eps)).
double count_reward_shape(std::int64_t pred_count, std::int64_t gt_count, double eps);

/// Mean of the per-shape rewards over circles, squares and triangles.
RewardRecord count_reward(const CountingResult& pred, const ShapeCounts& gt, double eps);
RewardRecord count_reward(const ParsedResponse& pred, const ShapeCounts& gt, double eps);

/// R_acc + alpha * R_format. A ParseFailure scores 0 on both terms.
RewardRecord detection_reward(const ParsedResponse& resp, Label gt_label, double alpha);

/// Greedy one-to-one matching by descending IoU, averaged over reference boxes.
RewardRecord artifact_grounding_reward(const ParsedResponse& pred,
                                       const ArtifactGroundingAnnotation& gt);

/// Parses `raw_text` for the entry's task and applies the matching reward.
RewardRecord score_response(const ManifestEntry& entry, std::string_view raw_text,
                            const LossConfig& cfg);

struct ResponseRecord {
  std::string id;
  std::string raw_text;
  std::optional<Task> task;  // optional consistency check against the manifest
};

std::vector<ResponseRecord> parse_responses(std::istream& in);
std::vector<ResponseRecord> load_responses(const std::filesystem::path& path);

/// Scores every response, sorted by id. Throws ConfigError on an unknown id
/// or a task that disagrees with the manifest.
std::vector<RewardRecord> score_file(const std::vector<ResponseRecord>& responses,
                                     const DatasetManifest& manifest, const LossConfig& cfg);

/// One JSON record per line.
void write_rewards(const std::vector<RewardRecord>& records, std::ostream& out);

}  // namespace veritas

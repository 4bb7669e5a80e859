#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "veritas/core.hpp"

namespace veritas {

enum class ScheduleMode { kPhaseLevel, kBatchLevel };
/// How grounding and counting share the perception phase.
enum class PerceptionOrder { kPooled, kSubPhases };

std::string_view to_string(ScheduleMode mode);

struct MixtureConfig {
  std::int64_t n_grounding = 0;
  std::int64_t n_counting = 0;
  std::int64_t n_detection = 0;
  int epochs = 1;
  int batch_size = 32;
  ScheduleMode mode = ScheduleMode::kPhaseLevel;
  PerceptionOrder perception_order = PerceptionOrder::kPooled;
  /// Fraction of each batch-level batch reserved for detection samples.
  double detection_fraction = 0.5;

  void validate() const;
};

/// 3000 grounding, 2000 counting, 10000 detection, 2 epochs, phase-level.
MixtureConfig default_mixture();

enum class Phase { kPerception, kDetection, kMixed };
std::string_view to_string(Phase phase);

struct ScheduledSample {
  std::string id;
  Task task = Task::kDetection;
  friend bool operator==(const ScheduledSample&, const ScheduledSample&) = default;
};

struct Batch {
  int epoch = 0;
  Phase phase = Phase::kPerception;
  std::vector<ScheduledSample> samples;
  friend bool operator==(const Batch&, const Batch&) = default;
};

struct Schedule {
  std::vector<Batch> batches;
  friend bool operator==(const Schedule&, const Schedule&) = default;
};

bool is_perception(Task task);

/// Sample ids are "<task>-<index>" with a zero-padded index. Deterministic in
/// (cfg, seed); the last partial batch of each phase is kept.
Schedule build_schedule(const MixtureConfig& cfg, std::uint64_t seed);

/// One record per batch: {epoch, batch_index, phase, ids}.
void write_schedule(const Schedule& schedule, std::ostream& out);

}  // namespace veritas

#include "veritas/curriculum.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <random>

#include "json_util.hpp"

namespace veritas {

using detail::json;

std::string_view to_string(ScheduleMode mode) {
  return mode == ScheduleMode::kPhaseLevel ? "phase_level" : "batch_level";
}

std::string_view to_string(Phase phase) {
  switch (phase) {
    case Phase::kPerception: return "perception";
    case Phase::kDetection: return "detection";
    case Phase::kMixed: return "mixed";
  }
  return "?";
}

bool is_perception(Task task) { return task != Task::kDetection; }

void MixtureConfig::validate() const {
  if (n_grounding < 0 || n_counting < 0 || n_detection < 0)
    throw ConfigError("sample counts must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(detection_fraction >= 0.0 && detection_fraction <= 1.0))
    throw ConfigError("detection_fraction must lie in [0, 1]");
}

MixtureConfig default_mixture() {
  MixtureConfig cfg;
  cfg.n_grounding = 3000;
  cfg.n_counting = 2000;
  cfg.n_detection = 10000;
  cfg.epochs = 2;
  cfg.mode = ScheduleMode::kPhaseLevel;
  return cfg;
}

namespace {

std::vector<ScheduledSample> make_pool(Task task, std::int64_t n) {
  std::vector<ScheduledSample> out;
  out.reserve(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "-%06lld", static_cast<long long>(i));
    out.push_back({std::string(to_string(task)) + buf, task});
  }
  return out;
}

// Fisher-Yates with explicit modulo draws; independent of the standard
// library's distribution implementations.
void shuffle(std::vector<ScheduledSample>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(v[i - 1], v[j]);
  }
}

void emit_phase(Schedule& out, int epoch, Phase phase, const std::vector<ScheduledSample>& pool,
                int batch_size) {
  for (std::size_t i = 0; i < pool.size(); i += static_cast<std::size_t>(batch_size)) {
    Batch b{epoch, phase, {}};
    const auto end = std::min(pool.size(), i + static_cast<std::size_t>(batch_size));
    b.samples.assign(pool.begin() + static_cast<std::ptrdiff_t>(i),
                     pool.begin() + static_cast<std::ptrdiff_t>(end));
    out.batches.push_back(std::move(b));
  }
}

}  // namespace

Schedule build_schedule(const MixtureConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  const auto grounding = make_pool(Task::kGrounding, cfg.n_grounding);
  const auto counting = make_pool(Task::kCounting, cfg.n_counting);
  const auto detection = make_pool(Task::kDetection, cfg.n_detection);

  Schedule out;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto det = detection;
    shuffle(det, rng);

    if (cfg.mode == ScheduleMode::kPhaseLevel) {
      if (cfg.perception_order == PerceptionOrder::kPooled) {
        std::vector<ScheduledSample> perc = grounding;
        perc.insert(perc.end(), counting.begin(), counting.end());
        shuffle(perc, rng);
        emit_phase(out, epoch, Phase::kPerception, perc, cfg.batch_size);
      } else {
        auto g = grounding;
        auto c = counting;
        shuffle(g, rng);
        shuffle(c, rng);
        emit_phase(out, epoch, Phase::kPerception, g, cfg.batch_size);
        emit_phase(out, epoch, Phase::kPerception, c, cfg.batch_size);
      }
      emit_phase(out, epoch, Phase::kDetection, det, cfg.batch_size);
      continue;
    }

    std::vector<ScheduledSample> perc = grounding;
    perc.insert(perc.end(), counting.begin(), counting.end());
    shuffle(perc, rng);
    const auto bs = static_cast<std::size_t>(cfg.batch_size);
    const auto det_slots = std::min(
        bs, static_cast<std::size_t>(std::ceil(static_cast<double>(bs) * cfg.detection_fraction)));
    const auto perc_slots = bs - det_slots;
    std::size_t di = 0;
    std::size_t pi = 0;
    while (di < det.size() || pi < perc.size()) {
      Batch b{epoch, Phase::kMixed, {}};
      std::size_t take_d = std::min(det_slots, det.size() - di);
      std::size_t take_p = std::min(perc_slots, perc.size() - pi);
      // Once one pool runs dry the other fills whole batches.
      const std::size_t spare = bs - take_d - take_p;
      if (spare > 0) {
        const std::size_t extra_d = std::min(spare, det.size() - di - take_d);
        take_d += extra_d;
        take_p += std::min(spare - extra_d, perc.size() - pi - take_p);
      }
      for (std::size_t k = 0; k < take_d; ++k) b.samples.push_back(det[di++]);
      for (std::size_t k = 0; k < take_p; ++k) b.samples.push_back(perc[pi++]);
      if (take_p == 0) b.phase = Phase::kDetection;
      if (take_d == 0) b.phase = Phase::kPerception;
      out.batches.push_back(std::move(b));
    }
  }
  return out;
}

void write_schedule(const Schedule& schedule, std::ostream& out) {
  for (std::size_t i = 0; i < schedule.batches.size(); ++i) {
    const auto& b = schedule.batches[i];
    json ids = json::array();
    for (const auto& s : b.samples) ids.push_back(s.id);
    json j = {{"epoch", b.epoch}, {"batch_index", i}, {"phase", to_string(b.phase)}, {"ids", ids}};
    out << j.dump() << '\n';
  }
}

}  // namespace veritas

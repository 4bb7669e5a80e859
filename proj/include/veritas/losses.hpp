#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "veritas/core.hpp"

namespace veritas {

// ---------------------------------------------------------------------------
// Preference optimization
// ---------------------------------------------------------------------------

/// Which video an item was built around; decides the preferred side.
enum class PreferenceKind { kPerception, kReasoning };
/// Response-level items vary the response, video-level items vary the video.
enum class PreferenceLevel { kResponse, kVideo };

std::string_view to_string(PreferenceKind kind);
std::string_view to_string(PreferenceLevel level);

/// Summed log-probability of one alternative under the trainable and the
/// frozen reference policy.
struct LogProbPair {
  double theta = 0.0;
  double ref = 0.0;
};

/// One preference unit. Each side is the log-probability of one alternative:
///   response level: perception_side = annotated CoT, reasoning_side = base-model CoT,
///                   both conditioned on the item's video;
///   video level:    the item's fixed response conditioned on the perception-type
///                   video (perception_side) or the reasoning-type video (reasoning_side).
/// The side matching `kind` is the preferred one.
struct PreferenceItem {
  std::string id;
  PreferenceKind kind = PreferenceKind::kPerception;
  LogProbPair perception_side;
  LogProbPair reasoning_side;

  const LogProbPair& winner() const;
  const LogProbPair& loser() const;
};

/// beta * [(theta_w - ref_w) - (theta_l - ref_l)].
double dpo_margin(const PreferenceItem& item, double beta);

/// d loss / d theta for the two sides of one item.
struct PreferenceGradient {
  double perception_side = 0.0;
  double reasoning_side = 0.0;
};

struct DpoResult {
  double loss = 0.0;
  std::vector<PreferenceGradient> grad;  // parallel to the input items
};

/// -mean log sigmoid(u) over the batch. With `separate_kind_means` the two
/// kinds are averaged separately and the two means summed.
DpoResult dpo_loss(std::span<const PreferenceItem> items, double beta,
                   bool separate_kind_means = false);

struct JointDpoResult {
  double loss = 0.0;
  double response_loss = 0.0;
  double video_loss = 0.0;
  std::vector<PreferenceGradient> response_grad;
  std::vector<PreferenceGradient> video_grad;
};

/// Sum of the response-level and the video-level loss; an empty batch
/// contributes nothing. Throws ConfigError when both are empty.
JointDpoResult joint_dpo_loss(std::span<const PreferenceItem> response_batch,
                              std::span<const PreferenceItem> video_batch, double beta,
                              bool separate_kind_means = false);

// ---------------------------------------------------------------------------
// Group sequence policy optimization
// ---------------------------------------------------------------------------

/// Per-token log-probabilities of one sampled sequence.
struct SequenceLogProbs {
  std::vector<double> theta;
  std::vector<double> old;

  std::size_t length() const noexcept { return theta.size(); }
  /// Throws ConfigError unless non-empty, equal-length, finite and <= 0.
  void validate() const;
};

struct Rollout {
  std::string id;
  SequenceLogProbs logp;
  double reward = 0.0;
};

struct RolloutGroup {
  std::string group_id;
  std::vector<Rollout> rollouts;
};

/// exp((sum theta - sum old) / |o|), or without the 1/|o| exponent when
/// `length_normalize` is false.
double gspo_ratio(const SequenceLogProbs& seq, bool length_normalize = true);

/// (R_i - mean) / max(std, std_floor) with the population standard deviation.
std::vector<double> group_advantages(std::span<const double> rewards, double std_floor);

enum class ClipBranch {
  kInside,     // ratio within [1 - eps_low, 1 + eps_high]
  kUnclipped,  // outside the band, min picks the raw ratio term
  kClipped,    // outside the band, min picks the clipped constant
};

struct SequenceDiagnostics {
  double ratio = 1.0;
  double advantage = 0.0;
  ClipBranch branch = ClipBranch::kInside;
};

struct GspoResult {
  double loss = 0.0;
  std::vector<std::vector<std::vector<double>>> grad;  // [group][sequence][token]
  std::vector<std::vector<SequenceDiagnostics>> diagnostics;
};

/// Clipped sequence-level surrogate, negated and averaged over groups.
/// Advantages and rewards are constants for differentiation.
GspoResult gspo_loss(std::span<const RolloutGroup> groups, const LossConfig& cfg);

// ---------------------------------------------------------------------------
// Flattening helpers for gradient checks
// ---------------------------------------------------------------------------

std::vector<double> flatten_theta(std::span<const PreferenceItem> items);
std::vector<PreferenceItem> with_theta(std::span<const PreferenceItem> items,
                                       std::span<const double> theta);
std::vector<double> flatten_grad(std::span<const PreferenceGradient> grad);

std::vector<double> flatten_theta(std::span<const RolloutGroup> groups);
std::vector<RolloutGroup> with_theta(std::span<const RolloutGroup> groups,
                                     std::span<const double> theta);
std::vector<double> flatten_grad(const GspoResult& result);

/// Marks every token of a sequence whose ratio lies within the kink band of
/// either clip boundary. The band is max(min_band, 4 * h * ratio * dr/dlogp)
/// so a central difference of step h cannot straddle the boundary.
std::vector<bool> gspo_kink_mask(std::span<const RolloutGroup> groups, const LossConfig& cfg,
                                 double h, double min_band = 1e-6);

// ---------------------------------------------------------------------------
// Finite-difference checker
// ---------------------------------------------------------------------------

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  std::vector<std::size_t> failing;
  bool passed = true;
};

using ScalarFn = std::function<double(std::span<const double>)>;

/// Central differences per coordinate compared with `analytic`. Relative error
/// is |a - n| / max(|a|, |n|, abs_floor). Coordinates with skip[i] set are ignored.
GradCheckReport finite_difference_check(const ScalarFn& fn, std::span<const double> x,
                                        std::span<const double> analytic, double h, double tol,
                                        const std::vector<bool>& skip = {},
                                        double abs_floor = 1e-10);

// ---------------------------------------------------------------------------
// Randomized gradient checks
// ---------------------------------------------------------------------------

enum class LossKind { kDpo, kGspo };
std::string_view to_string(LossKind kind);
std::optional<LossKind> loss_kind_from_string(std::string_view s);

/// Random preference items with margins of order one, so sigmoid terms stay
/// well away from saturation.
std::vector<PreferenceItem> random_preference_items(std::mt19937_64& rng, std::size_t n);

/// Random groups of cfg.group_size rollouts whose ratios straddle the clip
/// band, so all three branches occur.
std::vector<RolloutGroup> random_rollout_groups(std::mt19937_64& rng, std::size_t n_groups,
                                                const LossConfig& cfg);

struct GradCheckTrials {
  int trials = 0;
  int passed = 0;
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  bool all_passed() const { return passed == trials; }
};

/// `trials` random instances of the joint DPO loss or the GSPO loss, each
/// compared against central differences. GSPO coordinates near a clip
/// boundary are skipped.
GradCheckTrials gradcheck_trials(LossKind kind, int trials, std::uint64_t seed,
                                 const LossConfig& cfg, double h, double tol);

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

struct PreferenceBatches {
  std::vector<PreferenceItem> response;
  std::vector<PreferenceItem> video;
};

/// One item per line: {id, level, kind, theta_perception, ref_perception,
/// theta_reasoning, ref_reasoning}.
PreferenceBatches parse_preferences(std::istream& in);
PreferenceBatches load_preferences(const std::filesystem::path& path);
void write_preferences(const PreferenceBatches& batches, std::ostream& out);

/// One sequence per line: {id, group_id, logp_theta, logp_old, reward}.
/// Groups keep the order in which their ids first appear.
std::vector<RolloutGroup> parse_rollouts(std::istream& in);
std::vector<RolloutGroup> load_rollouts(const std::filesystem::path& path);
void write_rollouts(std::span<const RolloutGroup> groups, std::ostream& out);

}  // namespace veritas

#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "veritas/core.hpp"
#include "veritas/parsers.hpp"

namespace veritas {

// ---------------------------------------------------------------------------
// Binary detection metrics
// ---------------------------------------------------------------------------

struct Prediction {
  std::string id;
  std::optional<Label> verdict;  // nullopt: unparseable, counted as wrong
};

/// Accepts {id, verdict} or {id, raw_text}; raw text goes through parse_detection.
std::vector<Prediction> parse_predictions(std::istream& in);
std::vector<Prediction> load_predictions(const std::filesystem::path& path);

/// Per-subset scores in [0, 1] with "fake" as the positive class.
struct MetricRow {
  std::string subset_name;
  EvalGroup group = EvalGroup::kID;
  std::size_t total = 0;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t missing = 0;         // manifest entries without a usable prediction
  bool recall_undefined = false;   // subset has no fake samples
  bool precision_undefined = false;
};

enum class Metric { kAccuracy, kRecall, kF1 };
std::string_view to_string(Metric m);
double metric_value(const MetricRow& row, Metric m);

/// One row per subset of the manifest's detection entries, in order of first
/// appearance. Throws ConfigError for a prediction whose id is not in the manifest.
std::vector<MetricRow> binary_metrics(const std::vector<Prediction>& preds,
                                      const DatasetManifest& manifest);

/// Mean over each group's rows, then the mean of the three group means.
/// Throws ConfigError when a group has no rows.
double hierarchical_average(const std::vector<MetricRow>& rows, Metric metric);

/// Half-up rounding to `decimals` places, for presentation only.
double round_half_up(double value, int decimals);

/// Tab-separated table mirroring the benchmark layout: one column per subset
/// (grouped ID / OOD / OOD-MintVid) plus Avg., one line per metric, values x100.
void write_metric_table(const std::vector<MetricRow>& rows, std::ostream& out);
/// Machine-readable version of the same report.
std::string metric_report_json(const std::vector<MetricRow>& rows);

// ---------------------------------------------------------------------------
// Pairwise reasoning-behaviour evaluation
// ---------------------------------------------------------------------------

enum class Dimension {
  kComponentGranularity,
  kSpatiotemporalContinuity,
  kPhysicsDepth,
  kForensicObjectivity,
  kRelationalLogic,
};
inline constexpr std::array<Dimension, 5> kAllDimensions = {
    Dimension::kComponentGranularity, Dimension::kSpatiotemporalContinuity,
    Dimension::kPhysicsDepth, Dimension::kForensicObjectivity, Dimension::kRelationalLogic};

std::string_view to_string(Dimension d);
std::optional<Dimension> dimension_from_string(std::string_view s);
std::string_view dimension_description(Dimension d);

/// Instantiates the pairwise comparison template for one dimension.
std::string build_judge_prompt(Dimension dimension, std::string_view output_a,
                               std::string_view output_b);

struct PairwiseJudgment {
  std::string sample_id;
  Dimension dimension = Dimension::kComponentGranularity;
  std::string judge_id;
  JudgeDecision decision = JudgeDecision::kC;
};

struct WinRate {
  std::size_t total = 0;
  std::size_t wins_a = 0;
  std::size_t wins_b = 0;
  std::size_t ties = 0;

  double rate_a() const;
  double rate_b() const;
  double tie_rate() const;
  /// Wins over decisive judgments only (ties excluded from the denominator).
  double decisive_rate_a() const;
  double decisive_rate_b() const;
};

struct WinRateReport {
  std::map<Dimension, WinRate> overall;
  std::map<std::string, std::map<Dimension, WinRate>> per_judge;
};

/// Ties stay in the denominator of rate_a / rate_b. Throws ConfigError on
/// empty input.
WinRateReport win_rates(const std::vector<PairwiseJudgment>& judgments);
/// Both tie conventions per dimension, overall and per judge.
std::string win_rate_report_json(const WinRateReport& report);

/// Win rate of `subject` (A or B) on one dimension.
double win_rate(const std::vector<PairwiseJudgment>& judgments, JudgeDecision subject,
                Dimension dimension);

}  // namespace veritas

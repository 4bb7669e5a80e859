#pragma once

#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "veritas/core.hpp"

namespace veritas {

struct DetectionVerdict {
  Label verdict = Label::kReal;
  bool had_answer_tags = false;
  friend bool operator==(const DetectionVerdict&, const DetectionVerdict&) = default;
};

struct GroundingResult {
  TimeSpan time;
  SecondIndexedBoxes boxes;
  friend bool operator==(const GroundingResult&, const GroundingResult&) = default;
};

struct TrackingResult {
  SecondIndexedBoxes boxes;
  friend bool operator==(const TrackingResult&, const TrackingResult&) = default;
};

struct CountingResult {
  ShapeCounts counts;
  friend bool operator==(const CountingResult&, const CountingResult&) = default;
};

struct ArtifactGroundingResult {
  std::vector<BoundingBox> boxes;
  friend bool operator==(const ArtifactGroundingResult&, const ArtifactGroundingResult&) = default;
};

enum class JudgeDecision { kA, kB, kC };
std::string_view to_string(JudgeDecision decision);

struct JudgeVerdict {
  std::string analysis;
  JudgeDecision decision = JudgeDecision::kC;
  friend bool operator==(const JudgeVerdict&, const JudgeVerdict&) = default;
};

struct ParseFailure {
  std::string task;
  std::string reason;
  friend bool operator==(const ParseFailure&, const ParseFailure&) = default;
};

using ParsedResponse = std::variant<DetectionVerdict, GroundingResult, TrackingResult,
                                    CountingResult, ArtifactGroundingResult, JudgeVerdict,
                                    ParseFailure>;

inline bool is_failure(const ParsedResponse& r) { return std::holds_alternative<ParseFailure>(r); }

struct AnswerTag {
  std::string content;
  bool had_tags = false;
};

/// Content of the first well-formed <answer>...</answer> pair.
AnswerTag extract_answer_tag(std::string_view text);

// All parsers are total: any byte sequence yields a ParsedResponse.
ParsedResponse parse_detection(std::string_view text);
ParsedResponse parse_grounding(std::string_view text);
ParsedResponse parse_tracking(std::string_view text);
ParsedResponse parse_counting(std::string_view text);
ParsedResponse parse_artifact_grounding(std::string_view text);
ParsedResponse parse_judgment(std::string_view text);

/// Dispatch on task; judge verdicts use parse_judgment directly.
ParsedResponse parse_response(Task task, std::string_view text);

/// Canonical model-output text for a structured result, i.e. what a perfectly
/// formatted response would contain. Reparsing yields an equal value.
std::string format_response(const ParsedResponse& response);

}  // namespace veritas

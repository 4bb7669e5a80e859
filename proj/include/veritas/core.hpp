#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace veritas {

inline constexpr std::string_view kToolkitVersion = "0.3.0";

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid parameters or configuration (bad ranges, frame too small, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file. `line()` is 1-based, 0 when not line-oriented.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line);
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// ---------------------------------------------------------------------------
// Geometry primitives
// ---------------------------------------------------------------------------

/// Axis-aligned box [x1, y1, x2, y2]. Zero-area boxes are allowed.
struct BoundingBox {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double width() const noexcept { return x2 - x1; }
  double height() const noexcept { return y2 - y1; }
  double area() const noexcept { return width() * height(); }
  bool valid() const noexcept;

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

/// Throws ConfigError unless the coordinates describe a valid box.
BoundingBox make_box(double x1, double y1, double x2, double y2);

/// Closed time interval in seconds.
struct TimeSpan {
  double start_s = 0.0;
  double end_s = 0.0;

  double length() const noexcept { return end_s - start_s; }
  bool valid() const noexcept;

  friend bool operator==(const TimeSpan&, const TimeSpan&) = default;
};

TimeSpan make_span(double start_s, double end_s);

/// One box per integer second; keys are non-negative.
using SecondIndexedBoxes = std::map<std::int64_t, BoundingBox>;

enum class ShapeKind { kCircle, kSquare, kTriangle };
inline constexpr std::size_t kNumShapeKinds = 3;
inline constexpr std::array<ShapeKind, kNumShapeKinds> kAllShapeKinds = {
    ShapeKind::kCircle, ShapeKind::kSquare, ShapeKind::kTriangle};

std::string_view to_string(ShapeKind kind);
ShapeKind shape_kind_from_string(std::string_view s);

/// Per-kind shape tally in (circles, squares, triangles) order.
struct ShapeCounts {
  std::int64_t circles = 0;
  std::int64_t squares = 0;
  std::int64_t triangles = 0;

  std::int64_t& operator[](ShapeKind kind);
  std::int64_t operator[](ShapeKind kind) const;
  std::int64_t total() const noexcept { return circles + squares + triangles; }

  friend bool operator==(const ShapeCounts&, const ShapeCounts&) = default;
};

// ---------------------------------------------------------------------------
// Loss configuration
// ---------------------------------------------------------------------------

struct LossConfig {
  double beta = 0.1;                   // DPO temperature
  double alpha = 0.2;                  // format-reward weight
  double eps_count = 1e-6;             // counting-reward stabilizer
  double eps_clip_low = 3e-4;          // lower clip offset
  double eps_clip_high = 4e-4;         // upper clip offset
  std::int64_t group_size = 4;         // rollouts per query
  bool token_normalize = true;         // outer 1/|o| factor (phase-level)
  bool ratio_length_normalize = true;  // 1/|o| exponent inside the ratio
  bool dpo_separate_kind_means = false;
  double advantage_std_floor = 1e-8;

  /// Throws ConfigError on the first violated invariant.
  void validate() const;
};

// ---------------------------------------------------------------------------
// Labels, tasks, groups
// ---------------------------------------------------------------------------

/// "fake" is the positive class.
enum class Label { kReal, kFake };
std::string_view to_string(Label label);
std::optional<Label> label_from_string(std::string_view s);

enum class Task { kDetection, kGrounding, kTracking, kCounting, kArtifactGrounding };
std::string_view to_string(Task task);
std::optional<Task> task_from_string(std::string_view s);

enum class EvalGroup { kID, kOOD, kOODMintVid };
inline constexpr std::array<EvalGroup, 3> kAllEvalGroups = {
    EvalGroup::kID, EvalGroup::kOOD, EvalGroup::kOODMintVid};
std::string_view to_string(EvalGroup group);
std::optional<EvalGroup> eval_group_from_string(std::string_view s);

enum class CoordMode { kPixels, kNormalized1000 };
std::string_view to_string(CoordMode mode);
std::optional<CoordMode> coord_mode_from_string(std::string_view s);

// ---------------------------------------------------------------------------
// Dataset manifest
// ---------------------------------------------------------------------------

struct DetectionAnnotation {
  friend bool operator==(const DetectionAnnotation&, const DetectionAnnotation&) = default;
};

struct GroundingAnnotation {
  TimeSpan span;
  SecondIndexedBoxes boxes;
  friend bool operator==(const GroundingAnnotation&, const GroundingAnnotation&) = default;
};

struct TrackingAnnotation {
  SecondIndexedBoxes boxes;
  friend bool operator==(const TrackingAnnotation&, const TrackingAnnotation&) = default;
};

struct CountingAnnotation {
  ShapeCounts counts;
  friend bool operator==(const CountingAnnotation&, const CountingAnnotation&) = default;
};

/// Several boxes at a single timestamp.
struct ArtifactGroundingAnnotation {
  double time_s = 0.0;
  std::vector<BoundingBox> boxes;
  friend bool operator==(const ArtifactGroundingAnnotation&,
                         const ArtifactGroundingAnnotation&) = default;
};

using Annotation = std::variant<DetectionAnnotation, GroundingAnnotation, TrackingAnnotation,
                                CountingAnnotation, ArtifactGroundingAnnotation>;

/// Task implied by an annotation alternative.
Task annotation_task(const Annotation& annotation);

struct ManifestEntry {
  std::string id;
  std::string media_path;
  std::optional<Label> label;  // required for detection entries
  std::string subset_name;
  EvalGroup group = EvalGroup::kID;
  Task task = Task::kDetection;
  Annotation annotation;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct DatasetManifest {
  CoordMode coord_mode = CoordMode::kPixels;
  double fps_declared = 3.0;
  std::vector<ManifestEntry> entries;

  /// Entry by id, or nullptr.
  const ManifestEntry* find(std::string_view id) const;

  /// Throws ConfigError on duplicate ids, annotation/task mismatch, or
  /// a detection entry without a label.
  void validate() const;

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

DatasetManifest parse_manifest(std::istream& in);
DatasetManifest load_manifest(const std::filesystem::path& path);
void write_manifest(const DatasetManifest& manifest, std::ostream& out);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Artifact taxonomy and QA reports
// ---------------------------------------------------------------------------

struct ArtifactPerspective {
  std::string name;
  std::vector<std::string> aspects;
};

struct ArtifactTaxonomy {
  std::vector<ArtifactPerspective> perspectives;

  bool has_aspect(std::string_view aspect) const;
};

/// The three-perspective, eleven-aspect taxonomy of generated-video artifacts.
const ArtifactTaxonomy& default_taxonomy();

/// True iff there are 3 perspectives and exactly 11 uniquely named aspects.
bool validate_taxonomy(const ArtifactTaxonomy& taxonomy);

struct QAReportItem {
  std::string question;
  std::string answer;
  std::string artifact_aspect;
  std::vector<TimeSpan> timestamps;
};

/// Throws ConfigError if the aspect is not in `taxonomy` or a span is invalid.
void validate_report_item(const QAReportItem& item, const ArtifactTaxonomy& taxonomy);

}  // namespace veritas

#include "veritas/core.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "json_util.hpp"

namespace veritas {

using detail::json;

ParseError::ParseError(const std::string& what, std::size_t line)
    : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

bool BoundingBox::valid() const noexcept {
  return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) && std::isfinite(y2) &&
         x1 >= 0.0 && y1 >= 0.0 && x2 >= x1 && y2 >= y1;
}

BoundingBox make_box(double x1, double y1, double x2, double y2) {
  BoundingBox box{x1, y1, x2, y2};
  if (!box.valid()) throw ConfigError("invalid bounding box");
  return box;
}

bool TimeSpan::valid() const noexcept {
  return std::isfinite(start_s) && std::isfinite(end_s) && end_s >= start_s;
}

TimeSpan make_span(double start_s, double end_s) {
  TimeSpan span{start_s, end_s};
  if (!span.valid()) throw ConfigError("invalid time span");
  return span;
}

std::string_view to_string(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::kCircle: return "circle";
    case ShapeKind::kSquare: return "square";
    case ShapeKind::kTriangle: return "triangle";
  }
  return "?";
}

ShapeKind shape_kind_from_string(std::string_view s) {
  for (auto kind : kAllShapeKinds) {
    if (to_string(kind) == s) return kind;
  }
  throw ConfigError("unknown shape kind '" + std::string(s) + "'");
}

std::int64_t& ShapeCounts::operator[](ShapeKind kind) {
  switch (kind) {
    case ShapeKind::kCircle: return circles;
    case ShapeKind::kSquare: return squares;
    case ShapeKind::kTriangle: return triangles;
  }
  return circles;
}

std::int64_t ShapeCounts::operator[](ShapeKind kind) const {
  return const_cast<ShapeCounts&>(*this)[kind];
}

void LossConfig::validate() const {
  if (!(beta > 0.0)) throw ConfigError("beta must be > 0");
  if (!(alpha >= 0.0)) throw ConfigError("alpha must be >= 0");
  if (!(eps_count > 0.0)) throw ConfigError("eps_count must be > 0");
  if (!(eps_clip_low > 0.0 && eps_clip_low < 1.0))
    throw ConfigError("eps_clip_low must lie in (0, 1)");
  if (!(eps_clip_high > 0.0 && eps_clip_high < 1.0))
    throw ConfigError("eps_clip_high must lie in (0, 1)");
  if (group_size < 2) throw ConfigError("group_size must be >= 2");
  if (!(advantage_std_floor > 0.0)) throw ConfigError("advantage_std_floor must be > 0");
}

// --- enum names -------------------------------------------------------------

namespace {

template <typename E, std::size_t N>
std::optional<E> lookup(std::string_view s, const std::array<E, N>& all) {
  for (auto e : all) {
    if (to_string(e) == s) return e;
  }
  return std::nullopt;
}

constexpr std::array<Label, 2> kAllLabels = {Label::kReal, Label::kFake};
constexpr std::array<Task, 5> kAllTasks = {Task::kDetection, Task::kGrounding, Task::kTracking,
                                           Task::kCounting, Task::kArtifactGrounding};
constexpr std::array<CoordMode, 2> kAllCoordModes = {CoordMode::kPixels,
                                                     CoordMode::kNormalized1000};

}  // namespace

std::string_view to_string(Label label) { return label == Label::kFake ? "fake" : "real"; }
std::optional<Label> label_from_string(std::string_view s) { return lookup(s, kAllLabels); }

std::string_view to_string(Task task) {
  switch (task) {
    case Task::kDetection: return "detection";
    case Task::kGrounding: return "grounding";
    case Task::kTracking: return "tracking";
    case Task::kCounting: return "counting";
    case Task::kArtifactGrounding: return "artifact_grounding";
  }
  return "?";
}
std::optional<Task> task_from_string(std::string_view s) { return lookup(s, kAllTasks); }

std::string_view to_string(EvalGroup group) {
  switch (group) {
    case EvalGroup::kID: return "ID";
    case EvalGroup::kOOD: return "OOD";
    case EvalGroup::kOODMintVid: return "OOD-MintVid";
  }
  return "?";
}
std::optional<EvalGroup> eval_group_from_string(std::string_view s) {
  return lookup(s, kAllEvalGroups);
}

std::string_view to_string(CoordMode mode) {
  return mode == CoordMode::kPixels ? "pixels" : "normalized_1000";
}
std::optional<CoordMode> coord_mode_from_string(std::string_view s) {
  return lookup(s, kAllCoordModes);
}

Task annotation_task(const Annotation& annotation) {
  switch (annotation.index()) {
    case 0: return Task::kDetection;
    case 1: return Task::kGrounding;
    case 2: return Task::kTracking;
    case 3: return Task::kCounting;
    default: return Task::kArtifactGrounding;
  }
}

// --- manifest ---------------------------------------------------------------

const ManifestEntry* DatasetManifest::find(std::string_view id) const {
  for (const auto& e : entries) {
    if (e.id == id) return &e;
  }
  return nullptr;
}

void DatasetManifest::validate() const {
  std::set<std::string_view> seen;
  for (const auto& e : entries) {
    if (e.id.empty()) throw ConfigError("manifest entry with empty id");
    if (!seen.insert(e.id).second) throw ConfigError("duplicate id '" + e.id + "'");
    if (annotation_task(e.annotation) != e.task)
      throw ConfigError("annotation does not match task for id '" + e.id + "'");
    if (e.task == Task::kDetection && !e.label)
      throw ConfigError("detection entry '" + e.id + "' has no label");
  }
  if (!(fps_declared > 0.0)) throw ConfigError("fps_declared must be > 0");
}

namespace {

Annotation annotation_from_json(Task task, const json& j, std::size_t line) {
  std::string reason;
  auto fail = [&](const std::string& what) -> ParseError { return ParseError(what, line); };
  if (task == Task::kDetection) {
    if (!j.is_null() && !(j.is_object() && j.empty()))
      throw fail("detection annotation must be empty");
    return DetectionAnnotation{};
  }
  if (!j.is_object()) throw fail("annotation must be an object");
  switch (task) {
    case Task::kGrounding: {
      if (!j.contains("time") || !j.contains("boxes"))
        throw fail("grounding annotation needs 'time' and 'boxes'");
      auto span = detail::span_from_json(j["time"], reason);
      if (!span) throw fail(reason);
      auto boxes = detail::second_boxes_from_json(j["boxes"], reason);
      if (!boxes) throw fail(reason);
      return GroundingAnnotation{*span, std::move(*boxes)};
    }
    case Task::kTracking: {
      if (!j.contains("boxes")) throw fail("tracking annotation needs 'boxes'");
      auto boxes = detail::second_boxes_from_json(j["boxes"], reason);
      if (!boxes) throw fail(reason);
      return TrackingAnnotation{std::move(*boxes)};
    }
    case Task::kCounting: {
      const auto& c = j.contains("counts") ? j["counts"] : json();
      if (!c.is_array() || c.size() != 3) throw fail("counting annotation needs 'counts' [c,s,t]");
      ShapeCounts counts;
      for (std::size_t i = 0; i < 3; ++i) {
        if (!c[i].is_number_integer() || c[i].get<std::int64_t>() < 0)
          throw fail("counts must be non-negative integers");
        counts[kAllShapeKinds[i]] = c[i].get<std::int64_t>();
      }
      return CountingAnnotation{counts};
    }
    case Task::kArtifactGrounding: {
      if (!j.contains("time") || !j["time"].is_number() || !j.contains("boxes") ||
          !j["boxes"].is_array())
        throw fail("artifact_grounding annotation needs numeric 'time' and a 'boxes' list");
      ArtifactGroundingAnnotation a;
      a.time_s = j["time"].get<double>();
      for (const auto& b : j["boxes"]) {
        auto box = detail::box_from_json(b, reason);
        if (!box) throw fail(reason);
        a.boxes.push_back(*box);
      }
      return a;
    }
    case Task::kDetection: break;
  }
  throw fail("unsupported task");
}

json annotation_to_json(const Annotation& annotation) {
  return std::visit(
      [](const auto& a) -> json {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, DetectionAnnotation>) {
          return json::object();
        } else if constexpr (std::is_same_v<T, GroundingAnnotation>) {
          return {{"time", detail::to_json(a.span)}, {"boxes", detail::to_json(a.boxes)}};
        } else if constexpr (std::is_same_v<T, TrackingAnnotation>) {
          return {{"boxes", detail::to_json(a.boxes)}};
        } else if constexpr (std::is_same_v<T, CountingAnnotation>) {
          return {{"counts", json::array({a.counts.circles, a.counts.squares, a.counts.triangles})}};
        } else {
          json boxes = json::array();
          for (const auto& b : a.boxes) boxes.push_back(detail::to_json(b));
          return {{"time", a.time_s}, {"boxes", boxes}};
        }
      },
      annotation);
}

std::string require_string(const json& j, const char* key, std::size_t line) {
  if (!j.contains(key) || !j[key].is_string())
    throw ParseError(std::string("missing string field '") + key + "'", line);
  return j[key].get<std::string>();
}

}  // namespace

DatasetManifest parse_manifest(std::istream& in) {
  DatasetManifest manifest;
  std::set<std::string> ids;
  std::string text;
  std::size_t line = 0;
  bool header_seen = false;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw ParseError("not a JSON object", line);

    if (!j.contains("id")) {
      // Header record carrying dataset-wide settings.
      if (header_seen || !manifest.entries.empty())
        throw ParseError("header record must be the first line", line);
      header_seen = true;
      if (j.contains("coord_mode")) {
        auto mode = j["coord_mode"].is_string()
                        ? coord_mode_from_string(j["coord_mode"].get<std::string>())
                        : std::nullopt;
        if (!mode) throw ParseError("unknown coord_mode", line);
        manifest.coord_mode = *mode;
      }
      if (j.contains("fps_declared")) {
        if (!j["fps_declared"].is_number() || !(j["fps_declared"].get<double>() > 0.0))
          throw ParseError("fps_declared must be a positive number", line);
        manifest.fps_declared = j["fps_declared"].get<double>();
      }
      continue;
    }

    ManifestEntry e;
    e.id = require_string(j, "id", line);
    if (!ids.insert(e.id).second) throw ParseError("duplicate id '" + e.id + "'", line);
    e.media_path = j.contains("media_path") ? require_string(j, "media_path", line) : "";
    e.subset_name = require_string(j, "subset_name", line);

    auto group = eval_group_from_string(require_string(j, "group", line));
    if (!group) throw ParseError("unknown group '" + j["group"].get<std::string>() + "'", line);
    e.group = *group;

    auto task = task_from_string(require_string(j, "task", line));
    if (!task) throw ParseError("unknown task '" + j["task"].get<std::string>() + "'", line);
    e.task = *task;

    if (j.contains("label") && !j["label"].is_null()) {
      auto label = j["label"].is_string() ? label_from_string(j["label"].get<std::string>())
                                          : std::nullopt;
      if (!label) throw ParseError("label must be 'real' or 'fake'", line);
      e.label = label;
    } else if (e.task == Task::kDetection) {
      throw ParseError("detection entry '" + e.id + "' has no label", line);
    }

    e.annotation = annotation_from_json(e.task, j.contains("annotation") ? j["annotation"] : json(),
                                        line);
    manifest.entries.push_back(std::move(e));
  }
  manifest.validate();
  return manifest;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open manifest " + path.string());
  return parse_manifest(in);
}

void write_manifest(const DatasetManifest& manifest, std::ostream& out) {
  json header = {{"coord_mode", to_string(manifest.coord_mode)},
                 {"fps_declared", manifest.fps_declared}};
  out << header.dump() << '\n';
  for (const auto& e : manifest.entries) {
    json j = {{"id", e.id},
              {"media_path", e.media_path},
              {"subset_name", e.subset_name},
              {"group", to_string(e.group)},
              {"task", to_string(e.task)},
              {"annotation", annotation_to_json(e.annotation)}};
    if (e.label) j["label"] = to_string(*e.label);
    out << j.dump() << '\n';
  }
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write manifest " + path.string());
  write_manifest(manifest, out);
}

// --- taxonomy ---------------------------------------------------------------

bool ArtifactTaxonomy::has_aspect(std::string_view aspect) const {
  for (const auto& p : perspectives) {
    for (const auto& a : p.aspects) {
      if (a == aspect) return true;
    }
  }
  return false;
}

const ArtifactTaxonomy& default_taxonomy() {
  static const ArtifactTaxonomy taxonomy{{
      {"Motion-level",
       {"Unnatural Kinematics and Trajectories", "Object Permanence Failure",
        "Structural Integrity Failure", "Interaction Anomalies",
        "Biological Motion Irregularity"}},
      {"Physical-level",
       {"Inconsistent Lighting and Optics", "Causality and Property Violation",
        "Flawed Material Simulation", "Contextual and Semantic Mismatch"}},
      {"Perceptual-level",
       {"Texture and Surface Instability", "Definition and Clarity Fluctuation"}},
  }};
  return taxonomy;
}

bool validate_taxonomy(const ArtifactTaxonomy& taxonomy) {
  if (taxonomy.perspectives.size() != 3) return false;
  std::set<std::string_view> names;
  std::size_t total = 0;
  for (const auto& p : taxonomy.perspectives) {
    for (const auto& a : p.aspects) {
      ++total;
      if (a.empty() || !names.insert(a).second) return false;
    }
  }
  return total == 11;
}

void validate_report_item(const QAReportItem& item, const ArtifactTaxonomy& taxonomy) {
  if (!taxonomy.has_aspect(item.artifact_aspect))
    throw ConfigError("unknown artifact aspect '" + item.artifact_aspect + "'");
  for (const auto& span : item.timestamps) {
    if (!span.valid()) throw ConfigError("invalid timestamp span in report item");
  }
}

}  // namespace veritas

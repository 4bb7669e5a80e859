#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "veritas/core.hpp"
#include "veritas/image.hpp"

namespace veritas::synth {

enum class Difficulty { kEasy, kMedium, kHard, kSuperHard };
inline constexpr std::array<Difficulty, 4> kAllDifficulties = {
    Difficulty::kEasy, Difficulty::kMedium, Difficulty::kHard, Difficulty::kSuperHard};

std::string_view to_string(Difficulty d);
std::optional<Difficulty> difficulty_from_string(std::string_view s);

/// Open ranges (lo, hi) for the characteristic size in pixels per side and the
/// on-screen duration in seconds.
struct DifficultyPreset {
  std::pair<double, double> size_range_px;
  std::pair<double, double> duration_range_s;
};

DifficultyPreset difficulty_preset(Difficulty level);

struct ShapeSpec {
  ShapeKind kind = ShapeKind::kCircle;
  double side_px = 0.0;  // circle diameter, square side, triangle side
  double center_x = 0.0;
  double center_y = 0.0;
  double rotation_deg = 0.0;
  Rgb color = {255, 255, 255};
  double start_s = 0.0;
  double end_s = 0.0;

  /// Radius of the smallest disc around the center containing the shape
  /// at any rotation.
  double circumradius() const;
  /// Half-open activity interval [start_s, end_s).
  bool active_at(double t) const { return start_s <= t && t < end_s; }
  /// Pixel-center coverage test for the point (x, y) in pixel coordinates.
  bool covers(double x, double y) const;

  friend bool operator==(const ShapeSpec&, const ShapeSpec&) = default;
};

struct PlanConfig {
  Difficulty difficulty = Difficulty::kHard;
  std::pair<int, int> shapes_per_video_range = {3, 12};
  int frame_width = 640;
  int frame_height = 480;
  double duration_s = 5.0;
  double fps = 3.0;
  bool non_overlapping = false;
  /// Shapes are at least this many pixels apart when non_overlapping is set.
  double min_gap_px = 2.0;
};

struct ShapePlan {
  std::vector<ShapeSpec> shapes;
  ShapeCounts gt_counts;
  std::uint64_t seed = 0;
  Difficulty difficulty = Difficulty::kHard;
  double video_duration_s = 5.0;
  double fps = 3.0;
  int frame_width = 640;
  int frame_height = 480;
  bool non_overlapping = false;

  /// round(fps * duration) frames at timestamps k / fps.
  int num_frames() const;
  double frame_time(int k) const { return static_cast<double>(k) / fps; }

  friend bool operator==(const ShapePlan&, const ShapePlan&) = default;
};

/// Per-kind tally of `shapes`.
ShapeCounts tally(const std::vector<ShapeSpec>& shapes);

/// The 12-colour high-contrast palette shapes are drawn from.
const std::vector<Rgb>& palette();

/// Deterministic given (config, seed). `background` is used only to keep
/// shape colours away from the local background colour; when absent a black
/// background is assumed. Throws ConfigError when the frame cannot hold the
/// largest shape or the video is shorter than the longest duration.
ShapePlan sample_plan(const PlanConfig& config, std::uint64_t seed,
                      const Image* background = nullptr);

/// Seed of the i-th episode of a run seeded with `seed`.
std::uint64_t episode_seed(std::uint64_t seed, std::uint64_t episode);

/// Paints `active` opaquely, in order, onto a copy of `background`.
Image rasterize_frame(const Image& background, const std::vector<ShapeSpec>& active);

/// Solid colour or a directory of PNG frames (used in sorted order, cycling).
struct SolidBackground {
  Rgb color = {0, 0, 0};
};
struct FrameDirectory {
  std::filesystem::path path;
};
using BackgroundSource = std::variant<SolidBackground, FrameDirectory>;

/// Frame k of the background source at the plan's frame size. Throws
/// ConfigError on a size mismatch or an empty directory.
class BackgroundFrames {
 public:
  BackgroundFrames(const BackgroundSource& source, int width, int height);
  Image frame(int k) const;
  const BackgroundSource& source() const noexcept { return source_; }

 private:
  BackgroundSource source_;
  int width_;
  int height_;
  std::vector<std::filesystem::path> files_;
};

/// Writes `<dir>/frames/frame_00000.png ...` and `<dir>/manifest.json`.
void synthesize(const ShapePlan& plan, const BackgroundSource& background,
                const std::filesystem::path& dir);

/// Reads a plan back from an episode manifest.
ShapePlan load_plan(const std::filesystem::path& manifest_path);

/// Recounts shapes from a rendered episode with a connected-component pass.
/// Only meaningful for spatially disjoint shapes on a known background.
ShapeCounts count_components(const std::vector<Image>& frames,
                             const std::vector<Image>& backgrounds);

/// Classifies one connected pixel set; exposed for testing.
ShapeKind classify_component(const std::vector<std::pair<int, int>>& pixels);

struct VerifyReport {
  bool ok = true;
  std::vector<std::string> mismatches;
  ShapeCounts manifest_counts;
  ShapeCounts tally_counts;
  std::optional<ShapeCounts> oracle_counts;
  int frames_checked = 0;
};

/// Re-derives counts, per-frame activity and rendered pixels of an episode,
/// and for non-overlapping plans recounts shapes from the frames.
VerifyReport verify_dataset(const std::filesystem::path& dir);

}  // namespace veritas::synth

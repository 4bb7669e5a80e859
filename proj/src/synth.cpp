#include "veritas/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "json_util.hpp"
#include "veritas/prompts.hpp"

namespace veritas::synth {

using detail::json;
namespace fs = std::filesystem;

std::string_view to_string(Difficulty d) {
  switch (d) {
    case Difficulty::kEasy: return "easy";
    case Difficulty::kMedium: return "medium";
    case Difficulty::kHard: return "hard";
    case Difficulty::kSuperHard: return "super_hard";
  }
  return "?";
}

std::optional<Difficulty> difficulty_from_string(std::string_view s) {
  for (auto d : kAllDifficulties) {
    if (to_string(d) == s) return d;
  }
  return std::nullopt;
}

DifficultyPreset difficulty_preset(Difficulty level) {
  switch (level) {
    case Difficulty::kEasy: return {{120.0, 240.0}, {3.0, 5.0}};
    case Difficulty::kMedium: return {{40.0, 120.0}, {2.0, 4.0}};
    case Difficulty::kHard: return {{20.0, 40.0}, {1.0, 3.0}};
    case Difficulty::kSuperHard: return {{15.0, 20.0}, {0.2, 1.0}};
  }
  throw ConfigError("unknown difficulty");
}

// ---------------------------------------------------------------------------
// Shape geometry
// ---------------------------------------------------------------------------

double ShapeSpec::circumradius() const {
  switch (kind) {
    case ShapeKind::kCircle: return side_px / 2.0;
    case ShapeKind::kSquare: return side_px / std::numbers::sqrt2;
    case ShapeKind::kTriangle: return side_px / std::numbers::sqrt3;
  }
  return side_px;
}

bool ShapeSpec::covers(double x, double y) const {
  const double dx = x - center_x;
  const double dy = y - center_y;
  if (kind == ShapeKind::kCircle) {
    const double r = side_px / 2.0;
    return dx * dx + dy * dy <= r * r;
  }
  // Rotate the point into the shape's local frame.
  const double a = rotation_deg * std::numbers::pi / 180.0;
  const double c = std::cos(a);
  const double s = std::sin(a);
  const double u = c * dx + s * dy;
  const double v = -s * dx + c * dy;
  if (kind == ShapeKind::kSquare) {
    const double h = side_px / 2.0;
    return std::abs(u) <= h && std::abs(v) <= h;
  }
  // Equilateral triangle centred on its centroid: inside iff the point is
  // within the inradius along each outward edge normal (at -90, 30, 150 deg).
  const double inradius = side_px / (2.0 * std::numbers::sqrt3);
  const double half_sqrt3 = std::numbers::sqrt3 / 2.0;
  return -v <= inradius && (half_sqrt3 * u + 0.5 * v) <= inradius &&
         (-half_sqrt3 * u + 0.5 * v) <= inradius;
}

ShapeCounts tally(const std::vector<ShapeSpec>& shapes) {
  ShapeCounts counts;
  for (const auto& s : shapes) ++counts[s.kind];
  return counts;
}

int ShapePlan::num_frames() const {
  return static_cast<int>(std::llround(fps * video_duration_s));
}

const std::vector<Rgb>& palette() {
  static const std::vector<Rgb> colors = {
      {230, 25, 75},  {60, 180, 75},  {255, 225, 25}, {0, 130, 200},
      {245, 130, 48}, {145, 30, 180}, {70, 240, 240}, {240, 50, 230},
      {210, 245, 60}, {250, 190, 212}, {0, 128, 128}, {255, 255, 255},
  };
  return colors;
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Portable draws on top of mt19937_64 so plans do not depend on the
// standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  double uniform(double lo, double hi) {
    const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u;
  }

  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(engine_() % span);
  }

 private:
  std::mt19937_64 engine_;
};

constexpr double kMinColorDistance = 100.0;
constexpr int kPlacementAttempts = 500;
constexpr int kPlanAttempts = 200;
constexpr int kTimingAttempts = 10000;

double color_distance(const Rgb& a, const std::array<double, 3>& b) {
  double d = 0.0;
  for (int i = 0; i < 3; ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(d);
}

std::array<double, 3> local_mean(const Image* background, const ShapeSpec& s) {
  if (background == nullptr || background->empty()) return {0.0, 0.0, 0.0};
  const double r = s.circumradius();
  const int x0 = std::max(0, static_cast<int>(std::floor(s.center_x - r)));
  const int x1 = std::min(background->width() - 1, static_cast<int>(std::ceil(s.center_x + r)));
  const int y0 = std::max(0, static_cast<int>(std::floor(s.center_y - r)));
  const int y1 = std::min(background->height() - 1, static_cast<int>(std::ceil(s.center_y + r)));
  std::array<double, 3> sum{0.0, 0.0, 0.0};
  double n = 0.0;
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const Rgb p = background->at(x, y);
      for (int c = 0; c < 3; ++c) sum[c] += p[c];
      n += 1.0;
    }
  }
  if (n == 0.0) return sum;
  for (auto& v : sum) v /= n;
  return sum;
}

bool visible(double start, double end, const ShapePlan& plan) {
  // First frame index with k / fps >= start.
  const int n = plan.num_frames();
  int k = std::max(0, static_cast<int>(std::ceil(start * plan.fps)) - 1);
  for (; k < n; ++k) {
    const double t = plan.frame_time(k);
    if (t >= end) return false;
    if (t >= start) return true;
  }
  return false;
}

void validate_config(const PlanConfig& config, const DifficultyPreset& preset) {
  const auto [lo, hi] = config.shapes_per_video_range;
  if (lo < 0 || hi < lo) throw ConfigError("shapes_per_video_range must satisfy 0 <= lo <= hi");
  if (!(config.fps > 0.0)) throw ConfigError("fps must be > 0");
  if (!(config.duration_s > 0.0)) throw ConfigError("duration must be > 0");
  if (config.frame_width <= 0 || config.frame_height <= 0)
    throw ConfigError("frame size must be positive");
  const double max_extent = 2.0 * preset.size_range_px.second / std::numbers::sqrt2;
  if (max_extent > std::min(config.frame_width, config.frame_height))
    throw ConfigError("frame " + std::to_string(config.frame_width) + "x" +
                      std::to_string(config.frame_height) + " too small for " +
                      std::string(to_string(config.difficulty)) + " shapes (needs " +
                      std::to_string(static_cast<int>(std::ceil(max_extent))) + " px)");
  if (config.duration_s < preset.duration_range_s.second)
    throw ConfigError("video duration shorter than the longest preset duration");
}

}  // namespace

std::uint64_t episode_seed(std::uint64_t seed, std::uint64_t episode) {
  return splitmix64(seed ^ splitmix64(episode + 1));
}

ShapePlan sample_plan(const PlanConfig& config, std::uint64_t seed, const Image* background) {
  const DifficultyPreset preset = difficulty_preset(config.difficulty);
  validate_config(config, preset);

  ShapePlan plan;
  plan.seed = seed;
  plan.difficulty = config.difficulty;
  plan.video_duration_s = config.duration_s;
  plan.fps = config.fps;
  plan.frame_width = config.frame_width;
  plan.frame_height = config.frame_height;
  plan.non_overlapping = config.non_overlapping;

  Rng rng(seed);
  const auto& colors = palette();
  for (int attempt = 0; attempt < kPlanAttempts; ++attempt) {
    plan.shapes.clear();
    const auto n = rng.uniform_int(config.shapes_per_video_range.first,
                                   config.shapes_per_video_range.second);
    bool placed_all = true;
    for (std::int64_t i = 0; i < n && placed_all; ++i) {
      ShapeSpec s;
      s.kind = kAllShapeKinds[static_cast<std::size_t>(rng.uniform_int(0, 2))];
      s.side_px = rng.uniform(preset.size_range_px.first, preset.size_range_px.second);
      s.rotation_deg = rng.uniform(0.0, 360.0);
      const double r = s.circumradius();

      bool placed = false;
      for (int p = 0; p < kPlacementAttempts && !placed; ++p) {
        s.center_x = rng.uniform(r, config.frame_width - r);
        s.center_y = rng.uniform(r, config.frame_height - r);
        placed = true;
        if (config.non_overlapping) {
          for (const auto& o : plan.shapes) {
            const double d = std::hypot(s.center_x - o.center_x, s.center_y - o.center_y);
            if (d < r + o.circumradius() + config.min_gap_px) {
              placed = false;
              break;
            }
          }
        }
      }
      if (!placed) {
        placed_all = false;
        break;
      }

      // Shapes too short to land on any frame timestamp are redrawn.
      bool shown = false;
      for (int t = 0; t < kTimingAttempts && !shown; ++t) {
        const double dur =
            rng.uniform(preset.duration_range_s.first, preset.duration_range_s.second);
        s.start_s = rng.uniform(0.0, config.duration_s - dur);
        s.end_s = s.start_s + dur;
        shown = visible(s.start_s, s.end_s, plan);
      }
      if (!shown) throw ConfigError("cannot make a shape visible at this frame rate");

      const auto bg = local_mean(background, s);
      s.color = colors[static_cast<std::size_t>(rng.uniform_int(0, 11))];
      for (int c = 0; c < 32 && color_distance(s.color, bg) < kMinColorDistance; ++c) {
        s.color = colors[static_cast<std::size_t>(rng.uniform_int(0, 11))];
      }
      if (color_distance(s.color, bg) < kMinColorDistance) {
        s.color = *std::max_element(colors.begin(), colors.end(), [&](const Rgb& a, const Rgb& b) {
          return color_distance(a, bg) < color_distance(b, bg);
        });
      }
      plan.shapes.push_back(s);
    }
    if (placed_all) {
      plan.gt_counts = tally(plan.shapes);
      return plan;
    }
  }
  throw ConfigError("cannot place non-overlapping shapes; enlarge the frame or lower the count");
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

Image rasterize_frame(const Image& background, const std::vector<ShapeSpec>& active) {
  Image out = background;
  for (const auto& s : active) {
    const double r = s.circumradius();
    const int x0 = std::max(0, static_cast<int>(std::floor(s.center_x - r)));
    const int x1 = std::min(out.width() - 1, static_cast<int>(std::ceil(s.center_x + r)));
    const int y0 = std::max(0, static_cast<int>(std::floor(s.center_y - r)));
    const int y1 = std::min(out.height() - 1, static_cast<int>(std::ceil(s.center_y + r)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        if (s.covers(x + 0.5, y + 0.5)) out.set(x, y, s.color);
      }
    }
  }
  return out;
}

BackgroundFrames::BackgroundFrames(const BackgroundSource& source, int width, int height)
    : source_(source), width_(width), height_(height) {
  if (const auto* dir = std::get_if<FrameDirectory>(&source_)) {
    if (!fs::is_directory(dir->path))
      throw ConfigError("background directory not found: " + dir->path.string());
    for (const auto& e : fs::directory_iterator(dir->path)) {
      if (e.is_regular_file() && e.path().extension() == ".png") files_.push_back(e.path());
    }
    std::sort(files_.begin(), files_.end());
    if (files_.empty()) throw ConfigError("no PNG frames in " + dir->path.string());
  }
}

Image BackgroundFrames::frame(int k) const {
  if (const auto* solid = std::get_if<SolidBackground>(&source_)) {
    return Image(width_, height_, solid->color);
  }
  Image img = read_png(files_[static_cast<std::size_t>(k) % files_.size()]);
  if (img.width() != width_ || img.height() != height_)
    throw ConfigError("background frame size " + std::to_string(img.width()) + "x" +
                      std::to_string(img.height()) + " does not match plan " +
                      std::to_string(width_) + "x" + std::to_string(height_));
  return img;
}

// ---------------------------------------------------------------------------
// Episode I/O
// ---------------------------------------------------------------------------

namespace {

std::string frame_name(int k) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%05d.png", k);
  return buf;
}

std::vector<std::vector<int>> active_indices(const ShapePlan& plan) {
  std::vector<std::vector<int>> out(static_cast<std::size_t>(plan.num_frames()));
  for (int k = 0; k < plan.num_frames(); ++k) {
    for (std::size_t i = 0; i < plan.shapes.size(); ++i) {
      if (plan.shapes[i].active_at(plan.frame_time(k))) out[k].push_back(static_cast<int>(i));
    }
  }
  return out;
}

std::vector<ShapeSpec> active_shapes(const ShapePlan& plan, const std::vector<int>& idx) {
  std::vector<ShapeSpec> out;
  for (int i : idx) out.push_back(plan.shapes[static_cast<std::size_t>(i)]);
  return out;
}

json background_to_json(const BackgroundSource& src) {
  if (const auto* solid = std::get_if<SolidBackground>(&src))
    return {{"type", "solid"}, {"rgb", solid->color}};
  return {{"type", "directory"}, {"path", std::get<FrameDirectory>(src).path.string()}};
}

BackgroundSource background_from_json(const json& j) {
  if (j.at("type") == "solid") return SolidBackground{j.at("rgb").get<Rgb>()};
  return FrameDirectory{j.at("path").get<std::string>()};
}

json plan_to_json(const ShapePlan& plan) {
  json shapes = json::array();
  for (const auto& s : plan.shapes) {
    shapes.push_back({{"kind", to_string(s.kind)},
                      {"side_px", s.side_px},
                      {"center", {s.center_x, s.center_y}},
                      {"rotation_deg", s.rotation_deg},
                      {"color", s.color},
                      {"start_s", s.start_s},
                      {"end_s", s.end_s}});
  }
  return {{"seed", plan.seed},
          {"difficulty", to_string(plan.difficulty)},
          {"video_duration_s", plan.video_duration_s},
          {"fps", plan.fps},
          {"frame_size", {plan.frame_width, plan.frame_height}},
          {"non_overlapping", plan.non_overlapping},
          {"shapes", shapes}};
}

ShapePlan plan_from_json(const json& j) {
  ShapePlan plan;
  plan.seed = j.at("seed").get<std::uint64_t>();
  auto d = difficulty_from_string(j.at("difficulty").get<std::string>());
  if (!d) throw ParseError("unknown difficulty in episode manifest", 0);
  plan.difficulty = *d;
  plan.video_duration_s = j.at("video_duration_s").get<double>();
  plan.fps = j.at("fps").get<double>();
  plan.frame_width = j.at("frame_size").at(0).get<int>();
  plan.frame_height = j.at("frame_size").at(1).get<int>();
  plan.non_overlapping = j.at("non_overlapping").get<bool>();
  for (const auto& s : j.at("shapes")) {
    ShapeSpec spec;
    spec.kind = shape_kind_from_string(s.at("kind").get<std::string>());
    spec.side_px = s.at("side_px").get<double>();
    spec.center_x = s.at("center").at(0).get<double>();
    spec.center_y = s.at("center").at(1).get<double>();
    spec.rotation_deg = s.at("rotation_deg").get<double>();
    spec.color = s.at("color").get<Rgb>();
    spec.start_s = s.at("start_s").get<double>();
    spec.end_s = s.at("end_s").get<double>();
    plan.shapes.push_back(spec);
  }
  return plan;
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("missing episode manifest " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ParseError("malformed episode manifest " + path.string(), 0);
  return j;
}

ShapeCounts counts_from_json(const json& j) {
  return {j.at(0).get<std::int64_t>(), j.at(1).get<std::int64_t>(), j.at(2).get<std::int64_t>()};
}

}  // namespace

void synthesize(const ShapePlan& plan, const BackgroundSource& background, const fs::path& dir) {
  if (tally(plan.shapes) != plan.gt_counts) throw ConfigError("plan gt_counts disagree with shapes");
  BackgroundFrames bg(background, plan.frame_width, plan.frame_height);
  std::error_code ec;
  fs::create_directories(dir / "frames", ec);
  if (ec) throw Error("cannot create " + (dir / "frames").string() + ": " + ec.message());

  const auto active = active_indices(plan);
  for (int k = 0; k < plan.num_frames(); ++k) {
    write_png(dir / "frames" / frame_name(k),
              rasterize_frame(bg.frame(k), active_shapes(plan, active[k])));
  }

  json manifest = {{"toolkit_version", kToolkitVersion},
                   {"plan", plan_to_json(plan)},
                   {"gt_counts", {plan.gt_counts.circles, plan.gt_counts.squares,
                                  plan.gt_counts.triangles}},
                   {"num_frames", plan.num_frames()},
                   {"active_per_frame", active},
                   {"background", background_to_json(background)},
                   {"system_prompt", prompts::kPerceptionSystem},
                   {"prompt", prompts::kCountingUser}};
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  if (!out) throw Error("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << '\n';
}

ShapePlan load_plan(const fs::path& manifest_path) {
  const json j = read_json_file(manifest_path);
  ShapePlan plan = plan_from_json(j.at("plan"));
  plan.gt_counts = counts_from_json(j.at("gt_counts"));
  return plan;
}

// ---------------------------------------------------------------------------
// Connected-component recount
// ---------------------------------------------------------------------------

ShapeKind classify_component(const std::vector<std::pair<int, int>>& pixels) {
  // Area over squared distance from the centroid to the farthest pixel
  // centre: pi for a disc, 2 for a square, 3*sqrt(3)/4 ~ 1.3 for an
  // equilateral triangle. Rasterisation pushes small shapes upward a little.
  double cx = 0.0;
  double cy = 0.0;
  for (const auto& [x, y] : pixels) {
    cx += x + 0.5;
    cy += y + 0.5;
  }
  const double n = static_cast<double>(pixels.size());
  cx /= n;
  cy /= n;
  double max_d2 = 0.0;
  for (const auto& [x, y] : pixels) {
    const double dx = x + 0.5 - cx;
    const double dy = y + 0.5 - cy;
    max_d2 = std::max(max_d2, dx * dx + dy * dy);
  }
  // Measure to the far pixel edge rather than its centre.
  const double reach = std::sqrt(max_d2) + 0.5;
  const double ratio = n / (reach * reach);
  if (ratio > 2.55) return ShapeKind::kCircle;
  if (ratio > 1.62) return ShapeKind::kSquare;
  return ShapeKind::kTriangle;
}

ShapeCounts count_components(const std::vector<Image>& frames,
                             const std::vector<Image>& backgrounds) {
  if (frames.empty()) return {};
  if (frames.size() != backgrounds.size()) throw ConfigError("frame/background count mismatch");
  const int w = frames.front().width();
  const int h = frames.front().height();
  std::vector<std::uint8_t> fg(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0);
  for (std::size_t k = 0; k < frames.size(); ++k) {
    const auto& f = frames[k].bytes();
    const auto& b = backgrounds[k].bytes();
    if (f.size() != fg.size() * 3 || b.size() != f.size())
      throw ConfigError("frame sizes differ within an episode");
    for (std::size_t p = 0; p < fg.size(); ++p) {
      if (f[3 * p] != b[3 * p] || f[3 * p + 1] != b[3 * p + 1] || f[3 * p + 2] != b[3 * p + 2])
        fg[p] = 1;
    }
  }

  ShapeCounts counts;
  std::vector<std::pair<int, int>> stack;
  std::vector<std::pair<int, int>> component;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      auto& seed = fg[static_cast<std::size_t>(y) * w + x];
      if (seed != 1) continue;
      seed = 2;
      stack.assign(1, {x, y});
      component.clear();
      while (!stack.empty()) {
        auto [px, py] = stack.back();
        stack.pop_back();
        component.emplace_back(px, py);
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = px + dx;
            const int ny = py + dy;
            if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
            auto& cell = fg[static_cast<std::size_t>(ny) * w + nx];
            if (cell == 1) {
              cell = 2;
              stack.emplace_back(nx, ny);
            }
          }
        }
      }
      ++counts[classify_component(component)];
    }
  }
  return counts;
}

VerifyReport verify_dataset(const fs::path& dir) {
  const json manifest = read_json_file(dir / "manifest.json");
  VerifyReport report;
  ShapePlan plan = plan_from_json(manifest.at("plan"));
  report.manifest_counts = counts_from_json(manifest.at("gt_counts"));
  report.tally_counts = tally(plan.shapes);
  auto mismatch = [&](std::string what) {
    report.ok = false;
    report.mismatches.push_back(std::move(what));
  };
  if (report.manifest_counts != report.tally_counts)
    mismatch("gt_counts do not match the per-kind tally of shapes");

  const auto active = active_indices(plan);
  if (manifest.contains("active_per_frame") &&
      manifest["active_per_frame"].get<std::vector<std::vector<int>>>() != active)
    mismatch("recorded per-frame activity differs from the shape intervals");
  if (manifest.value("num_frames", -1) != plan.num_frames())
    mismatch("num_frames does not equal fps * duration");

  for (std::size_t i = 0; i < plan.shapes.size(); ++i) {
    const bool seen = std::any_of(active.begin(), active.end(), [&](const auto& idx) {
      return std::find(idx.begin(), idx.end(), static_cast<int>(i)) != idx.end();
    });
    if (!seen) mismatch("shape " + std::to_string(i) + " is not visible on any frame");
  }

  BackgroundFrames bg(background_from_json(manifest.at("background")), plan.frame_width,
                      plan.frame_height);
  std::vector<Image> frames;
  std::vector<Image> backgrounds;
  for (int k = 0; k < plan.num_frames(); ++k) {
    const fs::path path = dir / "frames" / frame_name(k);
    if (!fs::exists(path)) throw Error("missing frame " + path.string());
    Image frame = read_png(path);
    Image base = bg.frame(k);
    if (frame != rasterize_frame(base, active_shapes(plan, active[k])))
      mismatch("frame " + std::to_string(k) + " pixels differ from the plan");
    frames.push_back(std::move(frame));
    backgrounds.push_back(std::move(base));
    ++report.frames_checked;
  }

  if (plan.non_overlapping) {
    report.oracle_counts = count_components(frames, backgrounds);
    if (*report.oracle_counts != report.manifest_counts)
      mismatch("connected-component recount differs from gt_counts");
  }
  return report;
}

}  // namespace veritas::synth

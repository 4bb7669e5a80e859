// Acceptance run: one PASS/FAIL line per headline criterion, each with its
// runtime budget. Exits non-zero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "veritas/curriculum.hpp"
#include "veritas/eval.hpp"
#include "veritas/geometry.hpp"
#include "veritas/losses.hpp"
#include "veritas/parsers.hpp"
#include "veritas/rewards.hpp"
#include "veritas/synth.hpp"

using namespace veritas;

namespace {

class Check {
 public:
  void expect(bool ok, const std::string& what) {
    ++count_;
    if (!ok && failures_.size() < 5) failures_.push_back(what);
    failed_ += ok ? 0 : 1;
  }
  void near(double a, double b, double tol, const std::string& what) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), " (got %.12g, want %.12g)", a, b);
    expect(std::abs(a - b) <= tol, what + buf);
  }
  void note(std::string s) { notes_.push_back(std::move(s)); }

  bool ok() const { return failed_ == 0; }
  std::string summary() const {
    std::string s = std::to_string(count_ - failed_) + "/" + std::to_string(count_) + " checks";
    for (const auto& n : notes_) s += "; " + n;
    for (const auto& f : failures_) s += "\n      fail: " + f;
    return s;
  }

 private:
  int count_ = 0;
  int failed_ = 0;
  std::vector<std::string> failures_;
  std::vector<std::string> notes_;
};

// ---------------------------------------------------------------------------

const char* const kSubsets[] = {
    "GenBuster-200K", "GenBuster++",  "LOKI",           "Vidu Q1",   "Gen-4",  "Veo3",
    "Emu3",           "Phantom-14B",  "OmniAvatar",     "FantasyTalking",      "Seedance1.0Pro",
    "Jimeng3.0Pro",   "Kling2.5-Turbo", "Hailuo2.3",    "Wan2.5",    "Sora2",  "Fact"};

std::vector<MetricRow> accuracy_row(const std::vector<double>& percent) {
  std::vector<MetricRow> rows;
  for (std::size_t i = 0; i < percent.size(); ++i) {
    MetricRow r;
    r.subset_name = kSubsets[i];
    r.group = i == 0 ? EvalGroup::kID : i <= 6 ? EvalGroup::kOOD : EvalGroup::kOODMintVid;
    r.accuracy = percent[i] / 100.0;
    rows.push_back(r);
  }
  return rows;
}

void benchmark_averages(Check& c) {
  const std::vector<double> strong = {93.1, 91.4, 78.1, 93.6, 96.7, 94.5, 99.4, 79.0, 56.2,
                                      84.5, 86.6, 80.8, 86.0, 85.8, 86.3, 67.6, 96.1};
  const std::vector<double> baseline = {87.6, 86.8, 71.1, 80.7, 83.4, 79.4, 85.9, 57.4, 55.2,
                                        62.2, 49.2, 46.2, 46.6, 41.1, 49.3, 41.4, 73.3};
  const double a = 100.0 * hierarchical_average(accuracy_row(strong), Metric::kAccuracy);
  const double b = 100.0 * hierarchical_average(accuracy_row(baseline), Metric::kAccuracy);
  c.near(a, 88.8, 0.05, "strong detector row average");
  c.near(b, 73.7, 0.05, "binary baseline row average");
  c.expect(round_half_up(a, 1) == 88.8 && round_half_up(b, 1) == 73.7, "displayed averages");
  char buf[64];
  std::snprintf(buf, sizeof(buf), "avgs %.4f / %.4f", a, b);
  c.note(buf);
}

// ---------------------------------------------------------------------------

void reward_suite(Check& c) {
  const double eps = 1e-6;
  const SecondIndexedBoxes gt{{2, make_box(0, 0, 10, 10)}, {3, make_box(10, 10, 20, 20)}};
  const SecondIndexedBoxes half{{2, make_box(0, 0, 10, 10)}, {3, make_box(50, 50, 60, 60)}};
  c.near(box_iou(make_box(0, 0, 10, 10), make_box(5, 0, 15, 10)), 1.0 / 3, 1e-15, "box IoU 1/3");
  c.near(span_iou(make_span(2, 6), make_span(4, 8)), 1.0 / 3, 1e-15, "span IoU 1/3");
  c.near(mean_box_iou(half, gt), 0.5, 0, "mean box IoU 0.5");
  c.near(track_reward(half, gt).reward, 0.5, 0, "track reward 0.5");
  c.near(ground_reward(GroundingResult{make_span(4, 8), half}, GroundingAnnotation{make_span(2, 6), gt})
             .reward,
         5.0 / 12, 1e-15, "ground reward 5/12");
  c.near(count_reward_shape(3, 4, eps), 3000001.0 / 4000001.0, 1e-15, "count 3 vs 4");
  c.near(count_reward_shape(5, 0, eps), 0.0, 0, "count clamp");
  c.near(count_reward(CountingResult{{3, 1, 4}}, {4, 1, 4}, eps).reward,
         (3000001.0 / 4000001.0 + 2) / 3, 1e-15, "count triple");
  c.near(detection_reward(parse_detection("<answer>fake</answer>"), Label::kFake, 0.2).reward, 1.2,
         0, "detection correct with tags");
  c.near(detection_reward(parse_detection("<answer>fake</answer>"), Label::kReal, 0.2).reward, 0.2,
         0, "detection wrong with tags");
  c.near(detection_reward(parse_detection("<answer>unsure</answer>"), Label::kReal, 0.2).reward, 0.0, 0,
         "detection parse failure");

  // Mixed-task dispatch equals task-filtered runs.
  DatasetManifest m;
  std::vector<ResponseRecord> responses;
  auto add = [&](ManifestEntry e, std::string text) {
    responses.push_back({e.id, std::move(text), e.task});
    m.entries.push_back(std::move(e));
  };
  ManifestEntry d{"d1", "", Label::kFake, "s", EvalGroup::kID, Task::kDetection, DetectionAnnotation{}};
  add(d, "<answer>fake</answer>");
  ManifestEntry k{"c1", "", std::nullopt, "s", EvalGroup::kID, Task::kCounting,
                  CountingAnnotation{{3, 1, 4}}};
  add(k, "3,1,3");
  ManifestEntry g{"g1", "", std::nullopt, "s", EvalGroup::kID, Task::kGrounding,
                  GroundingAnnotation{make_span(2, 6), gt}};
  add(g, R"({"time":[4,8],"boxes":{"2":[0,0,10,10]}})");
  const LossConfig cfg;
  const auto all = score_file(responses, m, cfg);
  for (const auto& r : responses) {
    const auto one = score_file({r}, m, cfg);
    bool found = false;
    for (const auto& x : all) found |= x == one.at(0);
    c.expect(found, "mixed-task record for " + r.id);
  }

  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> cnt(0, 30);
  std::uniform_real_distribution<double> coord(0, 500);
  auto box = [&] {
    const double a = coord(rng), b = coord(rng), x = coord(rng), y = coord(rng);
    return make_box(std::min(a, b), std::min(x, y), std::max(a, b), std::max(x, y));
  };
  int violations = 0;
  for (int i = 0; i < 1000; ++i) {
    const std::int64_t gcount = cnt(rng);
    double prev = 1.0;
    for (std::int64_t err = 0; err <= 30; ++err) {
      const double v = count_reward_shape(gcount + err, gcount, eps);
      violations += v > prev || v < 0 || v > 1;
      if (gcount - err >= 0) violations += count_reward_shape(gcount - err, gcount, eps) != v;
      prev = v;
    }
    SecondIndexedBoxes gb, pb;
    for (int s = 0; s < 5; ++s) {
      gb[s] = box();
      if (rng() & 1) pb[s] = box();
    }
    const double t = track_reward(pb, gb).reward;
    violations += t < 0 || t > 1;
    double t0 = coord(rng), t1 = coord(rng);
    const GroundingAnnotation ga{make_span(std::min(t0, t1), std::max(t0, t1)), gb};
    t0 = coord(rng);
    t1 = coord(rng);
    const double gr =
        ground_reward(GroundingResult{make_span(std::min(t0, t1), std::max(t0, t1)), pb}, ga).reward;
    violations += gr < 0 || gr > 1;
    const double cr = count_reward(CountingResult{{cnt(rng), cnt(rng), cnt(rng)}},
                                   {cnt(rng), cnt(rng), cnt(rng)}, eps)
                          .reward;
    violations += cr < 0 || cr > 1;
    const char* texts[] = {"<answer>fake</answer>", "<answer>real</answer>", "fake", "real", "?"};
    const double dr =
        detection_reward(parse_detection(texts[rng() % 5]), rng() & 1 ? Label::kFake : Label::kReal, 0.2)
            .reward;
    violations += !(dr == 0.0 || dr == 0.2 || dr == 1.0 || dr == 1.2);
  }
  c.expect(violations == 0, std::to_string(violations) + " property violations");
  c.note("1000 randomized property cases");
}

// ---------------------------------------------------------------------------

void gradient_correctness(Check& c) {
  const LossConfig cfg;
  const auto dpo = gradcheck_trials(LossKind::kDpo, 60, 1, cfg, 1e-5, 1e-6);
  const auto gspo = gradcheck_trials(LossKind::kGspo, 60, 2, cfg, 1e-5, 1e-5);
  c.expect(dpo.all_passed(), "DPO " + std::to_string(dpo.passed) + "/60");
  c.expect(gspo.all_passed(), "GSPO " + std::to_string(gspo.passed) + "/60");
  char buf[160];
  std::snprintf(buf, sizeof(buf), "dpo 60 trials max rel err %.2e; gspo 60 trials max rel err %.2e (%zu coords, %zu kink-skipped)",
                dpo.max_rel_err, gspo.max_rel_err, gspo.checked, gspo.skipped);
  c.note(buf);
}

// ---------------------------------------------------------------------------

void gspo_invariants(Check& c) {
  LossConfig cfg;
  cfg.eps_clip_low = 3e-4;
  cfg.eps_clip_high = 4e-4;
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0, 1), scale(0.1, 10), shift(-5, 5);

  int adv_bad = 0;
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> r(4), moved(4);
    for (auto& x : r) x = (t % 2) ? u(rng) : static_cast<double>(rng() & 1);
    const double a = scale(rng), b = shift(rng);
    for (int i = 0; i < 4; ++i) moved[i] = a * r[i] + b;
    const auto A = group_advantages(r, cfg.advantage_std_floor);
    const auto B = group_advantages(moved, cfg.advantage_std_floor);
    for (int i = 0; i < 4; ++i) adv_bad += std::abs(A[i] - B[i]) > 1e-9;
  }
  c.expect(adv_bad == 0, std::to_string(adv_bad) + " advantage invariance violations");

  int zero_bad = 0;
  for (int t = 0; t < 500; ++t) {
    auto groups = random_rollout_groups(rng, 1 + rng() % 4, cfg);
    for (auto& g : groups)
      for (auto& r : g.rollouts) r.logp.theta = r.logp.old;
    const auto res = gspo_loss(groups, cfg);
    zero_bad += std::abs(res.loss) > 1e-14;
    for (const auto& g : res.grad) {
      double net = 0;
      for (const auto& seq : g)
        for (double v : seq) net += v;
      zero_bad += std::abs(net) > 1e-14;
    }
    for (auto& g : groups)
      for (auto& r : g.rollouts) r.reward = 0.25;
    for (double v : flatten_grad(gspo_loss(groups, cfg))) zero_bad += v != 0.0;
  }
  c.expect(zero_bad == 0, std::to_string(zero_bad) + " zero-at-old violations");

  int clip_bad = 0;
  std::size_t clipped = 0;
  for (int t = 0; t < 500; ++t) {
    const auto groups = random_rollout_groups(rng, 1 + rng() % 4, cfg);
    const auto res = gspo_loss(groups, cfg);
    for (std::size_t g = 0; g < groups.size(); ++g) {
      for (std::size_t i = 0; i < groups[g].rollouts.size(); ++i) {
        const auto& d = res.diagnostics[g][i];
        const double lo = 1 - cfg.eps_clip_low, hi = 1 + cfg.eps_clip_high;
        const bool outside_favourable = (d.advantage > 0 && d.ratio > hi) ||
                                        (d.advantage < 0 && d.ratio < lo);
        // With A = 0 both terms of the min coincide, so either label is right.
        if (d.advantage != 0.0)
          clip_bad += outside_favourable != (d.branch == ClipBranch::kClipped);
        if (d.branch != ClipBranch::kClipped) continue;
        ++clipped;
        for (double v : res.grad[g][i]) clip_bad += v != 0.0;
      }
    }
  }
  c.expect(clipped > 100, "clipped sequences exercised: " + std::to_string(clipped));
  c.expect(clip_bad == 0, std::to_string(clip_bad) + " clipped-gradient violations");
  c.note(std::to_string(clipped) + " clipped sequences");
}

// ---------------------------------------------------------------------------

void synth_soundness(Check& c) {
  namespace fs = std::filesystem;
  using namespace veritas::synth;
  const std::uint64_t run_seed = 20260101;
  int agree = 0, total = 0;
  for (auto level : kAllDifficulties) {
    PlanConfig cfg;
    cfg.difficulty = level;
    cfg.non_overlapping = true;
    const auto preset = difficulty_preset(level);
    const Image black(cfg.frame_width, cfg.frame_height);
    int level_agree = 0;
    for (std::uint64_t i = 0; i < 100; ++i) {
      const auto plan = sample_plan(cfg, episode_seed(run_seed, i), &black);
      c.expect(plan == sample_plan(cfg, episode_seed(run_seed, i), &black), "plan determinism");
      for (const auto& s : plan.shapes) {
        const double dur = s.end_s - s.start_s;
        c.expect(s.side_px >= preset.size_range_px.first && s.side_px <= preset.size_range_px.second,
                 "size in range");
        c.expect(dur >= preset.duration_range_s.first - 1e-9 &&
                     dur <= preset.duration_range_s.second + 1e-9,
                 "duration in range");
      }
      std::vector<Image> frames, bgs;
      for (int k = 0; k < plan.num_frames(); ++k) {
        std::vector<ShapeSpec> active;
        for (const auto& s : plan.shapes)
          if (s.active_at(plan.frame_time(k))) active.push_back(s);
        frames.push_back(rasterize_frame(black, active));
        bgs.push_back(black);
      }
      const bool same = count_components(frames, bgs) == plan.gt_counts;
      level_agree += same;
      ++total;
    }
    agree += level_agree;
    c.expect(level_agree == 100, std::string(to_string(level)) + " oracle agreement " +
                                     std::to_string(level_agree) + "/100");
  }
  c.note("oracle " + std::to_string(agree) + "/" + std::to_string(total));

  // On-disk path: two episodes per preset written twice, compared byte for
  // byte and re-verified from the files.
  const fs::path root = fs::temp_directory_path() / ("veritas_accept_" + std::to_string(::getpid()));
  int files = 0;
  for (auto level : kAllDifficulties) {
    PlanConfig cfg;
    cfg.difficulty = level;
    cfg.non_overlapping = true;
    for (std::uint64_t i = 0; i < 2; ++i) {
      const auto plan = sample_plan(cfg, episode_seed(run_seed, i));
      const auto name = std::string(to_string(level)) + "_" + std::to_string(i);
      synthesize(plan, SolidBackground{}, root / "a" / name);
      synthesize(sample_plan(cfg, episode_seed(run_seed, i)), SolidBackground{}, root / "b" / name);
      const auto report = verify_dataset(root / "a" / name);
      c.expect(report.ok, name + " verify_dataset");
      for (const auto& e : fs::recursive_directory_iterator(root / "a" / name)) {
        if (!e.is_regular_file()) continue;
        std::ifstream fa(e.path(), std::ios::binary);
        std::ifstream fb(root / "b" / name / fs::relative(e.path(), root / "a" / name), std::ios::binary);
        std::stringstream sa, sb;
        sa << fa.rdbuf();
        sb << fb.rdbuf();
        c.expect(sa.str() == sb.str(), "byte-identical " + e.path().filename().string());
        ++files;
      }
    }
  }
  std::error_code ec;
  fs::remove_all(root, ec);
  c.note(std::to_string(files) + " files re-synthesized byte-identically");
}

// ---------------------------------------------------------------------------

void parser_corpus(Check& c) {
  const auto g = parse_grounding(R"({"time": [8.125, 13.483], "boxes": {"9": [317, 422, 582, 997]}})");
  const auto* gr = std::get_if<GroundingResult>(&g);
  c.expect(gr && gr->time.start_s == 8.125 && gr->time.end_s == 13.483 && gr->boxes.size() == 1 &&
               gr->boxes.at(9) == make_box(317, 422, 582, 997),
           "grounding example");
  const auto t = parse_tracking(R"({"boxes": {"1":[405,230,654,463],"2":[435,223,678,446]}})");
  const auto* tr = std::get_if<TrackingResult>(&t);
  c.expect(tr && tr->boxes.size() == 2 && tr->boxes.at(1) == make_box(405, 230, 654, 463) &&
               tr->boxes.at(2) == make_box(435, 223, 678, 446),
           "tracking example");
  const auto k = parse_counting("3,1,4");
  const auto* kr = std::get_if<CountingResult>(&k);
  c.expect(kr && kr->counts == ShapeCounts{3, 1, 4}, "counting example");

  std::mt19937_64 rng(555);
  const std::string alphabet = "{}[]\":,0123456789.-eE abxyz<>/answer\\\n\tfakerealboxestime";
  const std::vector<std::string> seeds = {
      R"({"time": [8.125, 13.483], "boxes": {"9": [317, 422, 582, 997]}})",
      R"({"boxes": {"1":[405,230,654,463],"2":[435,223,678,446]}})", "3,1,4",
      "<answer>fake</answer>", R"({"analysis":"a","judgment":"[[A]]"})"};
  int crashes = 0;
  for (int i = 0; i < 10000; ++i) {
    std::string s;
    if (i % 3 == 0) {
      s.resize(rng() % 64);
      for (auto& ch : s) ch = static_cast<char>(rng() & 0xff);
    } else if (i % 3 == 1) {
      s.resize(rng() % 96);
      for (auto& ch : s) ch = alphabet[rng() % alphabet.size()];
    } else {
      s = seeds[rng() % seeds.size()];
      for (int m = static_cast<int>(rng() % 4); m >= 0; --m) {
        const auto pos = rng() % (s.size() + 1);
        if (rng() & 1) s.insert(pos, 1, alphabet[rng() % alphabet.size()]);
        else if (pos < s.size()) s.erase(pos, 1);
      }
    }
    try {
      for (auto task : {Task::kDetection, Task::kGrounding, Task::kTracking, Task::kCounting,
                        Task::kArtifactGrounding}) {
        const ParsedResponse r = parse_response(task, s);
        if (r.valueless_by_exception()) ++crashes;
      }
      if (parse_judgment(s).valueless_by_exception()) ++crashes;
    } catch (...) {
      ++crashes;
    }
  }
  c.expect(crashes == 0, std::to_string(crashes) + " fuzz crashes");
  c.note("10000 fuzz inputs x 6 parsers");
}

// ---------------------------------------------------------------------------

// Multiplicity, batch-size and ordering invariants; returns a failure
// description or an empty string.
std::string schedule_violation(const MixtureConfig& cfg, const Schedule& s) {
  std::vector<std::map<std::string, int>> seen(static_cast<std::size_t>(cfg.epochs));
  int last_epoch = 0;
  std::vector<long> last_perc(cfg.epochs, -1), first_det(cfg.epochs, -1);
  for (std::size_t i = 0; i < s.batches.size(); ++i) {
    const auto& b = s.batches[i];
    if (b.epoch < last_epoch || b.epoch >= cfg.epochs) return "epoch order";
    last_epoch = b.epoch;
    if (b.samples.empty() || b.samples.size() > static_cast<std::size_t>(cfg.batch_size))
      return "batch size";
    for (const auto& x : b.samples) {
      ++seen[static_cast<std::size_t>(b.epoch)][x.id];
      if (is_perception(x.task)) last_perc[b.epoch] = static_cast<long>(i);
      else if (first_det[b.epoch] < 0) first_det[b.epoch] = static_cast<long>(i);
    }
  }
  const std::size_t expected =
      static_cast<std::size_t>(cfg.n_grounding + cfg.n_counting + cfg.n_detection);
  for (int e = 0; e < cfg.epochs; ++e) {
    if (seen[e].size() != expected) return "epoch " + std::to_string(e) + " sample count";
    for (const auto& [id, n] : seen[e])
      if (n != 1) return "duplicate " + id;
    if (cfg.mode == ScheduleMode::kPhaseLevel && first_det[e] >= 0 && last_perc[e] > first_det[e])
      return "perception after detection in epoch " + std::to_string(e);
  }
  return "";
}

void schedule_contract(Check& c) {
  const auto def = default_mixture();
  c.expect(def.n_grounding == 3000 && def.n_counting == 2000 && def.n_detection == 10000,
           "default counts");
  c.expect(def.mode == ScheduleMode::kPhaseLevel, "default phase-level");
  const auto s = build_schedule(def, 0);
  const auto v = schedule_violation(def, s);
  c.expect(v.empty(), "default schedule: " + v);
  c.expect(!s.batches.empty() && s.batches.front().phase == Phase::kPerception,
           "perception phase first");

  std::mt19937_64 rng(8);
  for (int t = 0; t < 100; ++t) {
    MixtureConfig cfg;
    cfg.n_grounding = static_cast<std::int64_t>(rng() % 50);
    cfg.n_counting = static_cast<std::int64_t>(rng() % 50);
    cfg.n_detection = static_cast<std::int64_t>(rng() % 80);
    cfg.epochs = 1 + static_cast<int>(rng() % 3);
    cfg.batch_size = 1 + static_cast<int>(rng() % 12);
    cfg.mode = rng() & 1 ? ScheduleMode::kBatchLevel : ScheduleMode::kPhaseLevel;
    cfg.perception_order = rng() & 1 ? PerceptionOrder::kSubPhases : PerceptionOrder::kPooled;
    cfg.detection_fraction = static_cast<double>(rng() % 11) / 10.0;
    const auto seed = rng();
    const auto sched = build_schedule(cfg, seed);
    const auto bad = schedule_violation(cfg, sched);
    c.expect(bad.empty(), "config " + std::to_string(t) + ": " + bad);
    c.expect(sched == build_schedule(cfg, seed), "determinism " + std::to_string(t));
  }
  c.note("100 random configs");
}

struct Criterion {
  const char* name;
  double budget_s;
  std::function<void(Check&)> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {"benchmark-average-reproduction", 1.0, benchmark_averages},
      {"reward-formula-suite", 10.0, reward_suite},
      {"gradient-correctness", 30.0, gradient_correctness},
      {"gspo-invariants", 60.0, gspo_invariants},
      {"synthesizer-soundness", 120.0, synth_soundness},
      {"parser-corpus", 60.0, parser_corpus},
      {"schedule-contract", 60.0, schedule_contract},
  };
  int failed = 0;
  for (const auto& cr : criteria) {
    Check c;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      cr.run(c);
    } catch (const std::exception& e) {
      c.expect(false, std::string("exception: ") + e.what());
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < cr.budget_s;
    const bool pass = c.ok() && in_time;
    failed += pass ? 0 : 1;
    std::printf("%s %-32s %7.2fs (limit %.0fs%s)  %s\n", pass ? "PASS" : "FAIL", cr.name, secs,
                cr.budget_s, in_time ? "" : ", exceeded", c.summary().c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}

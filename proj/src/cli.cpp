#include "veritas/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json_util.hpp"
#include "veritas/curriculum.hpp"
#include "veritas/eval.hpp"
#include "veritas/judge.hpp"
#include "veritas/losses.hpp"
#include "veritas/prompts.hpp"
#include "veritas/rewards.hpp"
#include "veritas/synth.hpp"

namespace veritas::cli {

using detail::json;

namespace {

// Raised by handlers for bad flag combinations that CLI11 cannot express.
class UsageError : public Error {
 public:
  using Error::Error;
};

void summary(std::ostream& out, const std::string& command, json fields) {
  fields["command"] = command;
  fields["status"] = "ok";
  out << fields.dump() << '\n';
}

// Writes to `path`, or to `fallback` when the path is empty or "-".
template <typename Fn>
void with_output(const std::string& path, std::ostream& fallback, Fn&& fn) {
  if (path.empty() || path == "-") {
    fn(fallback);
    return;
  }
  std::ofstream f(path);
  if (!f) throw Error("cannot open " + path + " for writing");
  fn(f);
  if (!f) throw Error("failed writing " + path);
}

void add_loss_overrides(CLI::App* app, LossConfig& cfg) {
  app->add_option("--beta", cfg.beta, "DPO temperature");
  app->add_option("--alpha", cfg.alpha, "format-reward weight");
  app->add_option("--eps-count", cfg.eps_count, "counting-reward stabilizer");
  app->add_option("--clip-low", cfg.eps_clip_low, "lower clip offset");
  app->add_option("--clip-high", cfg.eps_clip_high, "upper clip offset");
  app->add_option("--group-size", cfg.group_size, "rollouts per group");
  app->add_option("--std-floor", cfg.advantage_std_floor, "advantage std floor");
  app->add_flag("!--no-token-normalize", cfg.token_normalize,
                "drop the outer 1/|o| factor (batch-level variant)");
  app->add_flag("!--no-ratio-length-normalize", cfg.ratio_length_normalize,
                "use the unnormalized sequence likelihood ratio");
  app->add_flag("--separate-kind-means", cfg.dpo_separate_kind_means,
                "average DPO kinds separately and sum the means");
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string difficulty = "hard";
  int n = 1;
  std::string out;
  int jobs = 1;
  bool non_overlapping = false;
  int width = 640;
  int height = 480;
  double duration = 5.0;
  double fps = 3.0;
  int min_shapes = 3;
  int max_shapes = 12;
  std::string background = "#000000";
};

synth::BackgroundSource parse_background(const std::string& spec) {
  if (spec.size() == 7 && spec[0] == '#') {
    unsigned r = 0, g = 0, b = 0;
    if (std::sscanf(spec.c_str() + 1, "%2x%2x%2x", &r, &g, &b) != 3)
      throw UsageError("bad background colour " + spec);
    return synth::SolidBackground{{static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g),
                                   static_cast<std::uint8_t>(b)}};
  }
  if (!std::filesystem::is_directory(spec))
    throw UsageError("background must be #rrggbb or a directory of PNG frames: " + spec);
  return synth::FrameDirectory{spec};
}

json counts_json(const ShapeCounts& c) { return json::array({c.circles, c.squares, c.triangles}); }

void cmd_synth(const SynthArgs& a, std::uint64_t seed, std::ostream& out) {
  const auto level = synth::difficulty_from_string(a.difficulty);
  if (!level) throw UsageError("unknown difficulty " + a.difficulty);
  if (a.n < 1) throw UsageError("--n must be >= 1");
  synth::PlanConfig cfg;
  cfg.difficulty = *level;
  cfg.shapes_per_video_range = {a.min_shapes, a.max_shapes};
  cfg.frame_width = a.width;
  cfg.frame_height = a.height;
  cfg.duration_s = a.duration;
  cfg.fps = a.fps;
  cfg.non_overlapping = a.non_overlapping;
  const auto background = parse_background(a.background);
  const synth::BackgroundFrames frames(background, a.width, a.height);
  const Image first = frames.frame(0);

  std::filesystem::create_directories(a.out);
  std::vector<ShapeCounts> counts(static_cast<std::size_t>(a.n));
  std::vector<std::string> errors(static_cast<std::size_t>(a.n));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < a.n; i = next++) {
      try {
        char name[32];
        std::snprintf(name, sizeof(name), "episode_%05d", i);
        const auto plan = synth::sample_plan(
            cfg, synth::episode_seed(seed, static_cast<std::uint64_t>(i)), &first);
        synth::synthesize(plan, background, std::filesystem::path(a.out) / name);
        counts[static_cast<std::size_t>(i)] = plan.gt_counts;
      } catch (const std::exception& e) {
        errors[static_cast<std::size_t>(i)] = e.what();
      }
    }
  };
  const int jobs = std::clamp(a.jobs, 1, a.n);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int k = 0; k < jobs; ++k) pool.emplace_back(worker);
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw Error(e);
  }
  ShapeCounts total;
  for (const auto& c : counts) {
    for (auto k : kAllShapeKinds) total[k] += c[k];
  }
  summary(out, "synth",
          {{"episodes", a.n},
           {"out", a.out},
           {"seed", seed},
           {"difficulty", a.difficulty},
           {"total_counts", counts_json(total)}});
}

void cmd_verify(const std::string& dir, std::ostream& out) {
  std::vector<std::filesystem::path> episodes;
  if (std::filesystem::exists(std::filesystem::path(dir) / "manifest.json")) {
    episodes.push_back(dir);
  } else {
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
      if (e.is_directory() && std::filesystem::exists(e.path() / "manifest.json"))
        episodes.push_back(e.path());
    }
    std::sort(episodes.begin(), episodes.end());
  }
  if (episodes.empty()) throw Error("no episodes under " + dir);
  json failures = json::array();
  std::size_t oracle_checked = 0;
  for (const auto& ep : episodes) {
    const auto report = synth::verify_dataset(ep);
    if (report.oracle_counts) ++oracle_checked;
    if (!report.ok) failures.push_back({{"episode", ep.string()}, {"mismatches", report.mismatches}});
  }
  summary(out, "verify",
          {{"episodes", episodes.size()},
           {"oracle_checked", oracle_checked},
           {"failed", failures.size()},
           {"failures", failures}});
  if (!failures.empty()) throw Error(std::to_string(failures.size()) + " episode(s) failed verification");
}

void cmd_score(const std::string& manifest_path, const std::string& responses_path,
               const std::string& out_path, const LossConfig& cfg, std::ostream& out) {
  cfg.validate();
  const auto manifest = load_manifest(manifest_path);
  const auto records = score_file(load_responses(responses_path), manifest, cfg);
  std::size_t failures = 0;
  double sum = 0.0;
  for (const auto& r : records) {
    failures += r.parse_ok ? 0 : 1;
    sum += r.reward;
  }
  with_output(out_path, out, [&](std::ostream& s) { write_rewards(records, s); });
  summary(out, "score",
          {{"scored", records.size()},
           {"parse_failures", failures},
           {"mean_reward", records.empty() ? 0.0 : sum / static_cast<double>(records.size())}});
}

json preference_grad_json(const std::vector<PreferenceGradient>& grad) {
  json a = json::array();
  for (const auto& g : grad) a.push_back({g.perception_side, g.reasoning_side});
  return a;
}

std::string_view branch_name(ClipBranch b) {
  switch (b) {
    case ClipBranch::kInside: return "inside";
    case ClipBranch::kUnclipped: return "unclipped";
    case ClipBranch::kClipped: return "clipped";
  }
  return "?";
}

void cmd_loss(const std::string& kind_name, const std::string& input, const std::string& out_path,
              const LossConfig& cfg, std::ostream& out) {
  const auto kind = loss_kind_from_string(kind_name);
  if (!kind) throw UsageError("--kind must be dpo or gspo");
  cfg.validate();
  json detail;
  json fields;
  if (*kind == LossKind::kDpo) {
    const auto batches = load_preferences(input);
    const auto res =
        joint_dpo_loss(batches.response, batches.video, cfg.beta, cfg.dpo_separate_kind_means);
    detail = {{"loss", res.loss},
              {"response_loss", res.response_loss},
              {"video_loss", res.video_loss},
              {"response_grad", preference_grad_json(res.response_grad)},
              {"video_grad", preference_grad_json(res.video_grad)}};
    fields = {{"kind", "dpo"},
              {"loss", res.loss},
              {"response_loss", res.response_loss},
              {"video_loss", res.video_loss},
              {"items", batches.response.size() + batches.video.size()}};
  } else {
    const auto groups = load_rollouts(input);
    const auto res = gspo_loss(groups, cfg);
    json seqs = json::array();
    std::size_t clipped = 0;
    for (std::size_t g = 0; g < groups.size(); ++g) {
      for (std::size_t i = 0; i < groups[g].rollouts.size(); ++i) {
        const auto& d = res.diagnostics[g][i];
        clipped += d.branch == ClipBranch::kClipped ? 1 : 0;
        seqs.push_back({{"id", groups[g].rollouts[i].id},
                        {"group_id", groups[g].group_id},
                        {"ratio", d.ratio},
                        {"advantage", d.advantage},
                        {"branch", branch_name(d.branch)},
                        {"grad", res.grad[g][i]}});
      }
    }
    detail = {{"loss", res.loss}, {"sequences", seqs}};
    fields = {{"kind", "gspo"}, {"loss", res.loss}, {"groups", groups.size()},
              {"clipped_sequences", clipped}};
  }
  if (!out_path.empty())
    with_output(out_path, out, [&](std::ostream& s) { s << detail.dump() << '\n'; });
  summary(out, "loss", fields);
}

bool cmd_gradcheck(const std::string& kind_name, int trials, std::uint64_t seed, double h,
                   std::optional<double> tol, const LossConfig& cfg, std::ostream& out) {
  const auto kind = loss_kind_from_string(kind_name);
  if (!kind) throw UsageError("--loss must be dpo or gspo");
  const double t = tol.value_or(*kind == LossKind::kDpo ? 1e-6 : 1e-5);
  const auto res = gradcheck_trials(*kind, trials, seed, cfg, h, t);
  json fields = {{"loss", kind_name},   {"trials", res.trials},   {"passed", res.passed},
                 {"tol", t},            {"h", h},                 {"max_rel_err", res.max_rel_err},
                 {"checked", res.checked}, {"skipped", res.skipped}, {"ok", res.all_passed()}};
  fields["command"] = "gradcheck";
  fields["status"] = res.all_passed() ? "ok" : "failed";
  out << fields.dump() << '\n';
  return res.all_passed();
}

struct ScheduleArgs {
  MixtureConfig mix = default_mixture();
  std::string mode = "phase_level";
  std::string perception_order = "pooled";
  std::string out;
};

void cmd_schedule(ScheduleArgs a, std::uint64_t seed, std::ostream& out) {
  if (a.mode == "phase_level") {
    a.mix.mode = ScheduleMode::kPhaseLevel;
  } else if (a.mode == "batch_level") {
    a.mix.mode = ScheduleMode::kBatchLevel;
  } else {
    throw UsageError("--mode must be phase_level or batch_level");
  }
  if (a.perception_order == "pooled") {
    a.mix.perception_order = PerceptionOrder::kPooled;
  } else if (a.perception_order == "sub_phases") {
    a.mix.perception_order = PerceptionOrder::kSubPhases;
  } else {
    throw UsageError("--perception-order must be pooled or sub_phases");
  }
  const auto schedule = build_schedule(a.mix, seed);
  std::size_t samples = 0;
  for (const auto& b : schedule.batches) samples += b.samples.size();
  with_output(a.out, out, [&](std::ostream& s) { write_schedule(schedule, s); });
  summary(out, "schedule",
          {{"batches", schedule.batches.size()},
           {"samples", samples},
           {"mode", a.mode},
           {"seed", seed}});
}

void cmd_eval(const std::string& manifest_path, const std::string& preds_path,
              const std::string& json_out, std::ostream& out) {
  const auto manifest = load_manifest(manifest_path);
  const auto rows = binary_metrics(load_predictions(preds_path), manifest);
  write_metric_table(rows, out);
  const std::string report = metric_report_json(rows);
  if (!json_out.empty())
    with_output(json_out, out, [&](std::ostream& s) { s << report << '\n'; });
  json avg = json::object();
  for (auto m : {Metric::kAccuracy, Metric::kRecall, Metric::kF1})
    avg[std::string(to_string(m))] = hierarchical_average(rows, m);
  std::size_t missing = 0;
  for (const auto& r : rows) missing += r.missing;
  summary(out, "eval", {{"subsets", rows.size()}, {"average", avg}, {"missing", missing}});
}

void cmd_judge(const std::string& pairs_path, bool mock, const std::vector<std::string>& judges,
               const std::vector<std::string>& dims, int jobs, const std::string& out_path,
               std::ostream& out) {
  std::vector<Dimension> dimensions;
  for (const auto& d : dims) {
    const auto parsed = dimension_from_string(d);
    if (!parsed) throw UsageError("unknown dimension " + d);
    dimensions.push_back(*parsed);
  }
  if (dimensions.empty()) dimensions.assign(kAllDimensions.begin(), kAllDimensions.end());
  std::vector<judge::Client> clients;
  for (const auto& id : judges) clients.push_back(judge::make_client(id, mock));
  const auto pairs = judge::load_pairs(pairs_path);
  const auto run = judge::run_pairwise(pairs, dimensions, clients, jobs);
  if (!out_path.empty()) {
    with_output(out_path, out, [&](std::ostream& s) {
      for (const auto& j : run.judgments) {
        s << json{{"id", j.sample_id},
                  {"dimension", to_string(j.dimension)},
                  {"judge", j.judge_id},
                  {"decision", to_string(j.decision)}}
                 .dump()
          << '\n';
      }
    });
  }
  json fields = {{"judgments", run.judgments.size()},
                 {"failures", run.failures},
                 {"mock", mock}};
  if (!run.judgments.empty()) fields["win_rates"] = json::parse(win_rate_report_json(win_rates(run.judgments)));
  summary(out, "judge", fields);
}

void cmd_prompt(const std::string& task_name, std::ostream& out) {
  const auto task = task_from_string(task_name);
  if (!task) throw UsageError("unknown task " + task_name);
  summary(out, "prompt",
          {{"task", task_name},
           {"system", prompts::system_prompt(*task)},
           {"user", prompts::user_prompt_template(*task)}});
}

void report_error(std::ostream& err, const std::string& command, const std::string& kind,
                  const std::string& message) {
  err << json{{"command", command}, {"status", "error"}, {"error", kind}, {"message", message}}
             .dump(-1, ' ', false, json::error_handler_t::replace)
      << '\n';
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Reward, loss, synthesis and evaluation toolkit for video forensics models",
               "veritas"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolkitVersion));

  std::uint64_t seed = kDefaultSeed;
  LossConfig cfg;

  SynthArgs sa;
  auto* synth_cmd = app.add_subcommand("synth", "render seeded shape-counting episodes");
  synth_cmd->add_option("--difficulty", sa.difficulty, "easy|medium|hard|super_hard");
  synth_cmd->add_option("--n", sa.n, "number of episodes");
  synth_cmd->add_option("--seed", seed, "base seed");
  synth_cmd->add_option("--out", sa.out, "output directory")->required();
  synth_cmd->add_option("--jobs", sa.jobs, "parallel workers");
  synth_cmd->add_flag("--non-overlapping", sa.non_overlapping, "keep shapes spatially disjoint");
  synth_cmd->add_option("--width", sa.width, "frame width");
  synth_cmd->add_option("--height", sa.height, "frame height");
  synth_cmd->add_option("--duration", sa.duration, "video duration in seconds");
  synth_cmd->add_option("--fps", sa.fps, "frame rate");
  synth_cmd->add_option("--min-shapes", sa.min_shapes, "fewest shapes per video");
  synth_cmd->add_option("--max-shapes", sa.max_shapes, "most shapes per video");
  synth_cmd->add_option("--background", sa.background, "#rrggbb or a directory of PNG frames");

  std::string verify_dir;
  auto* verify_cmd = app.add_subcommand("verify", "re-derive and check synthesized episodes");
  verify_cmd->add_option("--dir", verify_dir, "episode or run directory")
      ->required()
      ->check(CLI::ExistingDirectory);

  std::string manifest_path, responses_path, preds_path, out_path, input_path, pairs_path;
  auto* score_cmd = app.add_subcommand("score", "score model responses against a manifest");
  score_cmd->add_option("--manifest", manifest_path)->required()->check(CLI::ExistingFile);
  score_cmd->add_option("--responses", responses_path)->required()->check(CLI::ExistingFile);
  score_cmd->add_option("--out", out_path, "reward records (JSONL); stdout by default");
  add_loss_overrides(score_cmd, cfg);

  std::string loss_kind;
  auto* loss_cmd = app.add_subcommand("loss", "evaluate a loss and its gradient");
  loss_cmd->add_option("--kind", loss_kind, "dpo|gspo")->required();
  loss_cmd->add_option("--input", input_path, "preference or rollout JSONL")
      ->required()
      ->check(CLI::ExistingFile);
  loss_cmd->add_option("--out", out_path, "full result with gradients (JSON)");
  add_loss_overrides(loss_cmd, cfg);

  std::string check_kind;
  int trials = 50;
  double h = 1e-5;
  std::optional<double> tol;
  auto* check_cmd = app.add_subcommand("gradcheck", "compare analytic and numeric gradients");
  check_cmd->add_option("--loss", check_kind, "dpo|gspo")->required();
  check_cmd->add_option("--trials", trials, "random instances");
  check_cmd->add_option("--seed", seed, "instance seed");
  check_cmd->add_option("--step", h, "central-difference step");
  check_cmd->add_option("--tol", tol, "max relative error (1e-6 dpo, 1e-5 gspo)");
  add_loss_overrides(check_cmd, cfg);

  ScheduleArgs sched;
  auto* sched_cmd = app.add_subcommand("schedule", "build a training-data schedule");
  sched_cmd->add_option("--grounding", sched.mix.n_grounding);
  sched_cmd->add_option("--counting", sched.mix.n_counting);
  sched_cmd->add_option("--detection", sched.mix.n_detection);
  sched_cmd->add_option("--epochs", sched.mix.epochs);
  sched_cmd->add_option("--batch-size", sched.mix.batch_size);
  sched_cmd->add_option("--mode", sched.mode, "phase_level|batch_level");
  sched_cmd->add_option("--perception-order", sched.perception_order, "pooled|sub_phases");
  sched_cmd->add_option("--detection-fraction", sched.mix.detection_fraction,
                        "detection share of each batch-level batch");
  sched_cmd->add_option("--seed", seed, "shuffle seed");
  sched_cmd->add_option("--out", sched.out, "schedule JSONL; stdout by default");

  std::string json_out;
  auto* eval_cmd = app.add_subcommand("eval", "detection metrics per subset and group");
  eval_cmd->add_option("--manifest", manifest_path)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--preds", preds_path)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--json", json_out, "machine-readable report path");

  bool mock = false;
  int jobs = 1;
  std::vector<std::string> judges = {"judge-1", "judge-2"};
  std::vector<std::string> dims;
  auto* judge_cmd = app.add_subcommand("judge", "pairwise reasoning comparison by LLM judges");
  judge_cmd->add_option("--pairs", pairs_path, "JSONL {id, output_a, output_b}")
      ->required()
      ->check(CLI::ExistingFile);
  judge_cmd->add_flag("--mock", mock, "offline deterministic judge");
  judge_cmd->add_option("--judge", judges, "judge ids (model names for the HTTP client)");
  judge_cmd->add_option("--dimension", dims, "restrict to these dimensions");
  judge_cmd->add_option("--jobs", jobs, "requests in flight");
  judge_cmd->add_option("--out", out_path, "judgments JSONL");

  std::string task_name;
  auto* prompt_cmd = app.add_subcommand("prompt", "print the prompts for a task");
  prompt_cmd->add_option("--task", task_name)->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return 0;
    }
    report_error(err, "", "usage", e.what());
    return 2;
  }

  const auto* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    report_error(err, name, "usage", e.what());
    return 2;
  }
  try {
    if (sub == synth_cmd) cmd_synth(sa, seed, out);
    else if (sub == verify_cmd) cmd_verify(verify_dir, out);
    else if (sub == score_cmd) cmd_score(manifest_path, responses_path, out_path, cfg, out);
    else if (sub == loss_cmd) cmd_loss(loss_kind, input_path, out_path, cfg, out);
    else if (sub == check_cmd) return cmd_gradcheck(check_kind, trials, seed, h, tol, cfg, out) ? 0 : 1;
    else if (sub == sched_cmd) cmd_schedule(sched, seed, out);
    else if (sub == eval_cmd) cmd_eval(manifest_path, preds_path, json_out, out);
    else if (sub == judge_cmd) cmd_judge(pairs_path, mock, judges, dims, jobs, out_path, out);
    else if (sub == prompt_cmd) cmd_prompt(task_name, out);
  } catch (const UsageError& e) {
    report_error(err, name, "usage", e.what());
    return 2;
  } catch (const ConfigError& e) {
    report_error(err, name, "config", e.what());
    return 1;
  } catch (const ParseError& e) {
    report_error(err, name, "parse", e.what());
    return 1;
  } catch (const std::exception& e) {
    report_error(err, name, "runtime", e.what());
    return 1;
  }
  return 0;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace veritas::cli

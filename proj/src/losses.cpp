#include "veritas/losses.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>

#include "json_util.hpp"

namespace veritas {

using detail::json;

std::string_view to_string(PreferenceKind kind) {
  return kind == PreferenceKind::kPerception ? "perception" : "reasoning";
}

std::string_view to_string(PreferenceLevel level) {
  return level == PreferenceLevel::kResponse ? "response" : "video";
}

const LogProbPair& PreferenceItem::winner() const {
  return kind == PreferenceKind::kPerception ? perception_side : reasoning_side;
}

const LogProbPair& PreferenceItem::loser() const {
  return kind == PreferenceKind::kPerception ? reasoning_side : perception_side;
}

double dpo_margin(const PreferenceItem& item, double beta) {
  const auto& w = item.winner();
  const auto& l = item.loser();
  return beta * ((w.theta - w.ref) - (l.theta - l.ref));
}

namespace {

// log(sigmoid(u)) without overflow for large |u|.
double log_sigmoid(double u) {
  return u < 0.0 ? u - std::log1p(std::exp(u)) : -std::log1p(std::exp(-u));
}

double sigmoid(double u) {
  if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

}  // namespace

DpoResult dpo_loss(std::span<const PreferenceItem> items, double beta, bool separate_kind_means) {
  if (items.empty()) throw ConfigError("empty preference batch");
  if (!(beta > 0.0)) throw ConfigError("beta must be > 0");

  // Weight of each item in the mean(s).
  std::size_t n_perception = 0;
  for (const auto& it : items) n_perception += it.kind == PreferenceKind::kPerception;
  const std::size_t n_reasoning = items.size() - n_perception;
  auto weight = [&](const PreferenceItem& it) {
    if (!separate_kind_means) return 1.0 / static_cast<double>(items.size());
    return 1.0 / static_cast<double>(it.kind == PreferenceKind::kPerception ? n_perception
                                                                           : n_reasoning);
  };

  DpoResult out;
  out.grad.resize(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& it = items[i];
    const double w = weight(it);
    const double u = dpo_margin(it, beta);
    out.loss -= w * log_sigmoid(u);
    // d(-log sigmoid(u))/du = -sigmoid(-u)
    const double d_u = -w * sigmoid(-u);
    const double d_winner = d_u * beta;
    const double d_loser = -d_u * beta;
    if (it.kind == PreferenceKind::kPerception) {
      out.grad[i] = {d_winner, d_loser};
    } else {
      out.grad[i] = {d_loser, d_winner};
    }
  }
  return out;
}

JointDpoResult joint_dpo_loss(std::span<const PreferenceItem> response_batch,
                              std::span<const PreferenceItem> video_batch, double beta,
                              bool separate_kind_means) {
  if (response_batch.empty() && video_batch.empty())
    throw ConfigError("both preference batches are empty");
  JointDpoResult out;
  if (!response_batch.empty()) {
    auto r = dpo_loss(response_batch, beta, separate_kind_means);
    out.response_loss = r.loss;
    out.response_grad = std::move(r.grad);
  }
  if (!video_batch.empty()) {
    auto v = dpo_loss(video_batch, beta, separate_kind_means);
    out.video_loss = v.loss;
    out.video_grad = std::move(v.grad);
  }
  out.loss = out.response_loss + out.video_loss;
  return out;
}

// ---------------------------------------------------------------------------

void SequenceLogProbs::validate() const {
  if (theta.empty()) throw ConfigError("sequence has no tokens");
  if (old.size() != theta.size()) throw ConfigError("theta/old log-prob lengths differ");
  auto ok = [](double v) { return std::isfinite(v) && v <= 0.0; };
  if (!std::all_of(theta.begin(), theta.end(), ok) || !std::all_of(old.begin(), old.end(), ok))
    throw ConfigError("log-probabilities must be finite and <= 0");
}

double gspo_ratio(const SequenceLogProbs& seq, bool length_normalize) {
  double diff = 0.0;
  for (std::size_t t = 0; t < seq.theta.size(); ++t) diff += seq.theta[t] - seq.old[t];
  if (length_normalize) diff /= static_cast<double>(seq.length());
  return std::exp(diff);
}

std::vector<double> group_advantages(std::span<const double> rewards, double std_floor) {
  if (rewards.size() < 2) throw ConfigError("advantages need at least two rewards");
  const double n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= n;
  const double denom = std::max(std::sqrt(var), std_floor);
  std::vector<double> adv;
  adv.reserve(rewards.size());
  for (double r : rewards) adv.push_back((r - mean) / denom);
  return adv;
}

GspoResult gspo_loss(std::span<const RolloutGroup> groups, const LossConfig& cfg) {
  cfg.validate();
  if (groups.empty()) throw ConfigError("empty rollout batch");
  const double lo = 1.0 - cfg.eps_clip_low;
  const double hi = 1.0 + cfg.eps_clip_high;
  const double G = static_cast<double>(cfg.group_size);
  const double scale = 1.0 / (static_cast<double>(groups.size()) * G);

  GspoResult out;
  out.grad.resize(groups.size());
  out.diagnostics.resize(groups.size());
  double objective = 0.0;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& group = groups[g];
    if (static_cast<std::int64_t>(group.rollouts.size()) != cfg.group_size)
      throw ConfigError("group-size mismatch in group '" + group.group_id + "': expected " +
                        std::to_string(cfg.group_size) + ", got " +
                        std::to_string(group.rollouts.size()));
    std::vector<double> rewards;
    for (const auto& r : group.rollouts) {
      r.logp.validate();
      if (!std::isfinite(r.reward)) throw ConfigError("non-finite reward");
      rewards.push_back(r.reward);
    }
    const auto adv = group_advantages(rewards, cfg.advantage_std_floor);

    double group_obj = 0.0;
    for (std::size_t i = 0; i < group.rollouts.size(); ++i) {
      const auto& seq = group.rollouts[i].logp;
      const double len = static_cast<double>(seq.length());
      const double ratio = gspo_ratio(seq, cfg.ratio_length_normalize);
      const double a = adv[i];
      const double clipped = std::clamp(ratio, lo, hi);
      const double norm = cfg.token_normalize ? 1.0 / len : 1.0;
      // Every token carries the sequence advantage, so the token sum is |o| copies.
      const double raw_term = ratio * a;
      const double clip_term = clipped * a;

      SequenceDiagnostics diag{ratio, a, ClipBranch::kInside};
      if (ratio < lo || ratio > hi) {
        diag.branch = raw_term < clip_term ? ClipBranch::kUnclipped : ClipBranch::kClipped;
      }
      group_obj += norm * len * std::min(raw_term, clip_term);

      double token_grad = 0.0;
      if (diag.branch != ClipBranch::kClipped) {
        const double dr = ratio * (cfg.ratio_length_normalize ? 1.0 / len : 1.0);
        token_grad = -scale * norm * len * a * dr;
      }
      out.grad[g].emplace_back(seq.length(), token_grad);
      out.diagnostics[g].push_back(diag);
    }
    objective += group_obj / G;
  }
  out.loss = -objective / static_cast<double>(groups.size());
  return out;
}

// ---------------------------------------------------------------------------

std::vector<double> flatten_theta(std::span<const PreferenceItem> items) {
  std::vector<double> x;
  x.reserve(items.size() * 2);
  for (const auto& it : items) {
    x.push_back(it.perception_side.theta);
    x.push_back(it.reasoning_side.theta);
  }
  return x;
}

std::vector<PreferenceItem> with_theta(std::span<const PreferenceItem> items,
                                       std::span<const double> theta) {
  if (theta.size() != items.size() * 2) throw ConfigError("theta vector size mismatch");
  std::vector<PreferenceItem> out(items.begin(), items.end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].perception_side.theta = theta[2 * i];
    out[i].reasoning_side.theta = theta[2 * i + 1];
  }
  return out;
}

std::vector<double> flatten_grad(std::span<const PreferenceGradient> grad) {
  std::vector<double> x;
  x.reserve(grad.size() * 2);
  for (const auto& g : grad) {
    x.push_back(g.perception_side);
    x.push_back(g.reasoning_side);
  }
  return x;
}

std::vector<double> flatten_theta(std::span<const RolloutGroup> groups) {
  std::vector<double> x;
  for (const auto& g : groups) {
    for (const auto& r : g.rollouts) x.insert(x.end(), r.logp.theta.begin(), r.logp.theta.end());
  }
  return x;
}

std::vector<RolloutGroup> with_theta(std::span<const RolloutGroup> groups,
                                     std::span<const double> theta) {
  std::vector<RolloutGroup> out(groups.begin(), groups.end());
  std::size_t k = 0;
  for (auto& g : out) {
    for (auto& r : g.rollouts) {
      for (auto& v : r.logp.theta) {
        if (k >= theta.size()) throw ConfigError("theta vector size mismatch");
        v = theta[k++];
      }
    }
  }
  if (k != theta.size()) throw ConfigError("theta vector size mismatch");
  return out;
}

std::vector<double> flatten_grad(const GspoResult& result) {
  std::vector<double> x;
  for (const auto& g : result.grad) {
    for (const auto& seq : g) x.insert(x.end(), seq.begin(), seq.end());
  }
  return x;
}

std::vector<bool> gspo_kink_mask(std::span<const RolloutGroup> groups, const LossConfig& cfg,
                                 double h, double min_band) {
  const double lo = 1.0 - cfg.eps_clip_low;
  const double hi = 1.0 + cfg.eps_clip_high;
  std::vector<bool> mask;
  for (const auto& g : groups) {
    for (const auto& r : g.rollouts) {
      const double len = static_cast<double>(r.logp.length());
      const double ratio = gspo_ratio(r.logp, cfg.ratio_length_normalize);
      const double dr = ratio * (cfg.ratio_length_normalize ? 1.0 / len : 1.0);
      const double band = std::max(min_band, 4.0 * h * dr);
      const bool kink = std::abs(ratio - lo) < band || std::abs(ratio - hi) < band;
      mask.insert(mask.end(), r.logp.length(), kink);
    }
  }
  return mask;
}

GradCheckReport finite_difference_check(const ScalarFn& fn, std::span<const double> x,
                                        std::span<const double> analytic, double h, double tol,
                                        const std::vector<bool>& skip, double abs_floor) {
  if (!(h > 0.0)) throw ConfigError("finite-difference step must be > 0");
  if (analytic.size() != x.size()) throw ConfigError("gradient size mismatch");
  GradCheckReport report;
  std::vector<double> probe(x.begin(), x.end());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (i < skip.size() && skip[i]) {
      ++report.skipped;
      continue;
    }
    probe[i] = x[i] + h;
    const double f_plus = fn(probe);
    probe[i] = x[i] - h;
    const double f_minus = fn(probe);
    probe[i] = x[i];
    const double numeric = (f_plus - f_minus) / (2.0 * h);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), abs_floor});
    const double rel = std::abs(analytic[i] - numeric) / denom;
    ++report.checked;
    report.max_rel_err = std::max(report.max_rel_err, rel);
    if (!(rel < tol)) report.failing.push_back(i);
  }
  report.passed = report.failing.empty();
  return report;
}

// ---------------------------------------------------------------------------

std::string_view to_string(LossKind kind) { return kind == LossKind::kDpo ? "dpo" : "gspo"; }

std::optional<LossKind> loss_kind_from_string(std::string_view s) {
  if (s == "dpo") return LossKind::kDpo;
  if (s == "gspo") return LossKind::kGspo;
  return std::nullopt;
}

namespace {

double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * unit(rng); }
std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng() % (hi - lo + 1));
}

}  // namespace

std::vector<PreferenceItem> random_preference_items(std::mt19937_64& rng, std::size_t n) {
  std::vector<PreferenceItem> items;
  for (std::size_t i = 0; i < n; ++i) {
    PreferenceItem it;
    it.id = "p" + std::to_string(i);
    it.kind = (rng() & 1) ? PreferenceKind::kPerception : PreferenceKind::kReasoning;
    it.perception_side.ref = uniform(rng, -60.0, -1.0);
    it.reasoning_side.ref = uniform(rng, -60.0, -1.0);
    it.perception_side.theta = it.perception_side.ref + uniform(rng, -5.0, 5.0);
    it.reasoning_side.theta = it.reasoning_side.ref + uniform(rng, -5.0, 5.0);
    items.push_back(std::move(it));
  }
  return items;
}

std::vector<RolloutGroup> random_rollout_groups(std::mt19937_64& rng, std::size_t n_groups,
                                                const LossConfig& cfg) {
  std::vector<RolloutGroup> groups;
  const bool binary = (rng() & 1) != 0;
  for (std::size_t g = 0; g < n_groups; ++g) {
    RolloutGroup group{"g" + std::to_string(g), {}};
    for (std::int64_t i = 0; i < cfg.group_size; ++i) {
      Rollout r;
      r.id = group.group_id + "-" + std::to_string(i);
      const std::size_t len = pick(rng, 1, 24);
      // Mean per-token log-ratio of a few clip widths either side of zero.
      const double shift = uniform(rng, -2e-3, 2e-3) / (cfg.ratio_length_normalize ? 1.0 : len);
      std::vector<double> noise(len);
      double mean = 0.0;
      for (auto& v : noise) mean += (v = uniform(rng, -1e-3, 1e-3));
      mean /= static_cast<double>(len);
      for (std::size_t t = 0; t < len; ++t) {
        const double old = uniform(rng, -8.0, -0.01);
        r.logp.old.push_back(old);
        r.logp.theta.push_back(old + shift + noise[t] - mean);
      }
      r.reward = binary ? static_cast<double>(rng() & 1) : unit(rng);
      group.rollouts.push_back(std::move(r));
    }
    groups.push_back(std::move(group));
  }
  return groups;
}

GradCheckTrials gradcheck_trials(LossKind kind, int trials, std::uint64_t seed,
                                 const LossConfig& cfg, double h, double tol) {
  cfg.validate();
  if (trials < 1) throw ConfigError("trials must be >= 1");
  std::mt19937_64 rng(seed);
  GradCheckTrials out;
  out.trials = trials;
  for (int k = 0; k < trials; ++k) {
    GradCheckReport report;
    if (kind == LossKind::kDpo) {
      const auto resp = random_preference_items(rng, pick(rng, 1, 6));
      const auto video = random_preference_items(rng, pick(rng, 0, 6));
      const bool separate = cfg.dpo_separate_kind_means;
      auto x = flatten_theta(resp);
      const auto xv = flatten_theta(video);
      x.insert(x.end(), xv.begin(), xv.end());
      const auto split = [&](std::span<const double> v) {
        return std::pair{with_theta(resp, v.first(resp.size() * 2)),
                         with_theta(video, v.subspan(resp.size() * 2))};
      };
      const auto res = joint_dpo_loss(resp, video, cfg.beta, separate);
      auto grad = flatten_grad(res.response_grad);
      const auto gv = flatten_grad(res.video_grad);
      grad.insert(grad.end(), gv.begin(), gv.end());
      const ScalarFn fn = [&](std::span<const double> v) {
        const auto [r, vid] = split(v);
        return joint_dpo_loss(r, vid, cfg.beta, separate).loss;
      };
      report = finite_difference_check(fn, x, grad, h, tol);
    } else {
      const auto groups = random_rollout_groups(rng, pick(rng, 1, 4), cfg);
      const auto x = flatten_theta(groups);
      const auto grad = flatten_grad(gspo_loss(groups, cfg));
      const ScalarFn fn = [&](std::span<const double> v) {
        return gspo_loss(with_theta(groups, v), cfg).loss;
      };
      report = finite_difference_check(fn, x, grad, h, tol, gspo_kink_mask(groups, cfg, h));
    }
    out.passed += report.passed ? 1 : 0;
    out.max_rel_err = std::max(out.max_rel_err, report.max_rel_err);
    out.checked += report.checked;
    out.skipped += report.skipped;
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

double require_number(const json& j, const char* key, std::size_t line) {
  if (!j.contains(key) || !j[key].is_number())
    throw ParseError(std::string("missing numeric field '") + key + "'", line);
  return j[key].get<double>();
}

std::vector<double> require_numbers(const json& j, const char* key, std::size_t line) {
  if (!j.contains(key) || !j[key].is_array())
    throw ParseError(std::string("missing array field '") + key + "'", line);
  std::vector<double> out;
  for (const auto& v : j[key]) {
    if (!v.is_number()) throw ParseError(std::string("non-numeric entry in '") + key + "'", line);
    out.push_back(v.get<double>());
  }
  return out;
}

template <typename Fn>
void for_each_record(std::istream& in, Fn&& fn) {
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw ParseError("not a JSON object", line);
    fn(j, line);
  }
}

}  // namespace

PreferenceBatches parse_preferences(std::istream& in) {
  PreferenceBatches out;
  for_each_record(in, [&](const json& j, std::size_t line) {
    PreferenceItem item;
    if (!j.contains("id") || !j["id"].is_string()) throw ParseError("missing string 'id'", line);
    item.id = j["id"].get<std::string>();
    const std::string kind = j.value("kind", "");
    if (kind == "perception") {
      item.kind = PreferenceKind::kPerception;
    } else if (kind == "reasoning") {
      item.kind = PreferenceKind::kReasoning;
    } else {
      throw ParseError("kind must be 'perception' or 'reasoning'", line);
    }
    item.perception_side = {require_number(j, "theta_perception", line),
                            require_number(j, "ref_perception", line)};
    item.reasoning_side = {require_number(j, "theta_reasoning", line),
                           require_number(j, "ref_reasoning", line)};
    for (double v : {item.perception_side.theta, item.perception_side.ref,
                     item.reasoning_side.theta, item.reasoning_side.ref}) {
      if (!std::isfinite(v) || v > 0.0) throw ParseError("log-probabilities must be <= 0", line);
    }
    const std::string level = j.value("level", "");
    if (level == "response") {
      out.response.push_back(std::move(item));
    } else if (level == "video") {
      out.video.push_back(std::move(item));
    } else {
      throw ParseError("level must be 'response' or 'video'", line);
    }
  });
  return out;
}

PreferenceBatches load_preferences(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open preferences " + path.string());
  return parse_preferences(in);
}

void write_preferences(const PreferenceBatches& batches, std::ostream& out) {
  auto emit = [&](const std::vector<PreferenceItem>& items, PreferenceLevel level) {
    for (const auto& it : items) {
      json j = {{"id", it.id},
                {"level", to_string(level)},
                {"kind", to_string(it.kind)},
                {"theta_perception", it.perception_side.theta},
                {"ref_perception", it.perception_side.ref},
                {"theta_reasoning", it.reasoning_side.theta},
                {"ref_reasoning", it.reasoning_side.ref}};
      out << j.dump() << '\n';
    }
  };
  emit(batches.response, PreferenceLevel::kResponse);
  emit(batches.video, PreferenceLevel::kVideo);
}

std::vector<RolloutGroup> parse_rollouts(std::istream& in) {
  std::vector<RolloutGroup> groups;
  std::map<std::string, std::size_t> index;
  for_each_record(in, [&](const json& j, std::size_t line) {
    if (!j.contains("id") || !j["id"].is_string()) throw ParseError("missing string 'id'", line);
    if (!j.contains("group_id") || !j["group_id"].is_string())
      throw ParseError("missing string 'group_id'", line);
    Rollout r;
    r.id = j["id"].get<std::string>();
    r.logp.theta = require_numbers(j, "logp_theta", line);
    r.logp.old = require_numbers(j, "logp_old", line);
    r.reward = require_number(j, "reward", line);
    try {
      r.logp.validate();
    } catch (const ConfigError& e) {
      throw ParseError(e.what(), line);
    }
    const auto gid = j["group_id"].get<std::string>();
    auto [it, inserted] = index.emplace(gid, groups.size());
    if (inserted) groups.push_back(RolloutGroup{gid, {}});
    groups[it->second].rollouts.push_back(std::move(r));
  });
  return groups;
}

std::vector<RolloutGroup> load_rollouts(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open rollouts " + path.string());
  return parse_rollouts(in);
}

void write_rollouts(std::span<const RolloutGroup> groups, std::ostream& out) {
  for (const auto& g : groups) {
    for (const auto& r : g.rollouts) {
      json j = {{"id", r.id},
                {"group_id", g.group_id},
                {"logp_theta", r.logp.theta},
                {"logp_old", r.logp.old},
                {"reward", r.reward}};
      out << j.dump() << '\n';
    }
  }
}

}  // namespace veritas

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "veritas/losses.hpp"

using namespace veritas;

namespace {

PreferenceItem item(PreferenceKind kind, double theta_p, double ref_p, double theta_r, double ref_r) {
  return {"i", kind, {theta_p, ref_p}, {theta_r, ref_r}};
}

// Sequence of `len` tokens whose length-normalized ratio is exactly exp(log_r).
SequenceLogProbs seq_with_log_ratio(std::size_t len, double log_r, double base = -1.0) {
  SequenceLogProbs s;
  for (std::size_t t = 0; t < len; ++t) {
    const double old = base - 0.1 * static_cast<double>(t);
    s.old.push_back(old);
    s.theta.push_back(old + log_r);
  }
  return s;
}

RolloutGroup group_of(std::vector<SequenceLogProbs> seqs, std::vector<double> rewards) {
  RolloutGroup g{"g", {}};
  for (std::size_t i = 0; i < seqs.size(); ++i)
    g.rollouts.push_back({"r" + std::to_string(i), std::move(seqs[i]), rewards[i]});
  return g;
}

double sum(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// DPO

TEST(DpoMargin, Examples) {
  EXPECT_EQ(dpo_margin(item(PreferenceKind::kPerception, -3, -3, -7, -7), 0.1), 0.0);
  // Winner (perception side) log-ratio 0.5, loser 0.2.
  const auto it = item(PreferenceKind::kPerception, -2.5, -3.0, -6.8, -7.0);
  EXPECT_NEAR(dpo_margin(it, 0.1), 0.03, 1e-15);
  EXPECT_NEAR(dpo_margin(it, 0.2), 2.0 * dpo_margin(it, 0.1), 1e-15);
  // Reasoning kind flips which side wins.
  auto flipped = it;
  flipped.kind = PreferenceKind::kReasoning;
  EXPECT_NEAR(dpo_margin(flipped, 0.1), -0.03, 1e-15);
}

TEST(DpoLoss, ReferencePolicyGivesLn2) {
  const std::vector<PreferenceItem> batch = {item(PreferenceKind::kPerception, -3, -3, -7, -7),
                                             item(PreferenceKind::kReasoning, -1, -1, -2, -2)};
  EXPECT_NEAR(dpo_loss(batch, 0.1).loss, std::numbers::ln2, 1e-15);
  const auto joint = joint_dpo_loss(batch, batch, 0.1);
  EXPECT_NEAR(joint.loss, 2.0 * std::numbers::ln2, 1e-15);
}

TEST(DpoLoss, SaturationAndPositivity) {
  const std::vector<PreferenceItem> strong = {item(PreferenceKind::kPerception, 0, -1000, -1000, 0)};
  const double l = dpo_loss(strong, 1.0).loss;
  EXPECT_GE(l, 0.0);
  EXPECT_LT(l, 1e-300);
  const std::vector<PreferenceItem> wrong = {item(PreferenceKind::kPerception, -1000, 0, 0, -1000)};
  EXPECT_NEAR(dpo_loss(wrong, 1.0).loss, 2000.0, 1e-9);
  EXPECT_TRUE(std::isfinite(dpo_loss(wrong, 1.0).grad[0].perception_side));

  std::mt19937_64 rng(4);
  for (int i = 0; i < 200; ++i) {
    const auto items = random_preference_items(rng, 1 + rng() % 5);
    EXPECT_GT(dpo_loss(items, 0.1).loss, 0.0);
  }
}

TEST(DpoLoss, ConstantShiftOfBothSidesIsInvariant) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 200; ++i) {
    auto items = random_preference_items(rng, 4);
    const double before = dpo_loss(items, 0.1).loss;
    for (auto& it : items) {
      const double c = static_cast<double>(rng() % 100) - 50.0;
      it.perception_side.theta += c;
      it.reasoning_side.theta += c;
    }
    EXPECT_NEAR(dpo_loss(items, 0.1).loss, before, 1e-12);
  }
}

TEST(DpoLoss, EmptyBatchErrors) {
  EXPECT_THROW(dpo_loss({}, 0.1), ConfigError);
  EXPECT_THROW(joint_dpo_loss({}, {}, 0.1), ConfigError);
}

TEST(DpoLoss, JointWithEmptyVideoBatchEqualsResponseLoss) {
  std::mt19937_64 rng(2);
  const auto items = random_preference_items(rng, 5);
  const auto single = dpo_loss(items, 0.1);
  const auto joint = joint_dpo_loss(items, {}, 0.1);
  EXPECT_EQ(joint.loss, single.loss);
  EXPECT_EQ(joint.video_loss, 0.0);
  EXPECT_EQ(flatten_grad(joint.response_grad), flatten_grad(single.grad));
}

TEST(DpoLoss, SeparateKindMeans) {
  // Two perception items with margin 0 and one reasoning item with margin u.
  const auto a = item(PreferenceKind::kPerception, -1, -1, -1, -1);
  // Reasoning side preferred: u = 0.1 * (2 - 0) = 0.2.
  const auto b = item(PreferenceKind::kReasoning, -1, -1, -1, -3);
  const std::vector<PreferenceItem> batch = {a, a, b};
  const double lb = std::log1p(std::exp(-0.2));
  EXPECT_NEAR(dpo_loss(batch, 0.1).loss, (2 * std::numbers::ln2 + lb) / 3.0, 1e-15);
  EXPECT_NEAR(dpo_loss(batch, 0.1, true).loss, std::numbers::ln2 + lb, 1e-15);
}

// ---------------------------------------------------------------------------
// GSPO

TEST(GspoRatio, Examples) {
  const auto same = seq_with_log_ratio(5, 0.0);
  EXPECT_EQ(gspo_ratio(same), 1.0);
  SequenceLogProbs s{{-1.0, -1.0, -1.0, -1.0}, {-1.05, -1.05, -1.05, -1.05}};
  EXPECT_NEAR(gspo_ratio(s), std::exp(0.05), 1e-15);
  EXPECT_NEAR(gspo_ratio(s), 1.051271, 1e-6);
  EXPECT_NEAR(gspo_ratio(s, false), std::exp(0.2), 1e-14);
  auto shifted = s;
  for (auto& v : shifted.theta) v -= 3.0;
  for (auto& v : shifted.old) v -= 3.0;
  EXPECT_NEAR(gspo_ratio(shifted), gspo_ratio(s), 1e-14);
}

TEST(GspoRatio, Validation) {
  EXPECT_THROW((SequenceLogProbs{{}, {}}.validate()), ConfigError);
  EXPECT_THROW((SequenceLogProbs{{-1.0}, {-1.0, -2.0}}.validate()), ConfigError);
  EXPECT_THROW((SequenceLogProbs{{0.5}, {-1.0}}.validate()), ConfigError);
  EXPECT_THROW((SequenceLogProbs{{NAN}, {-1.0}}.validate()), ConfigError);
}

TEST(GroupAdvantages, Examples) {
  const std::vector<double> flat = {0.3, 0.3, 0.3, 0.3};
  for (double a : group_advantages(flat, 1e-8)) EXPECT_EQ(a, 0.0);
  const std::vector<double> one_hot = {1, 0, 0, 0};
  const auto a = group_advantages(one_hot, 1e-8);
  EXPECT_NEAR(a[0], 1.732051, 1e-6);
  for (int i = 1; i < 4; ++i) EXPECT_NEAR(a[i], -0.577350, 1e-6);
  EXPECT_NEAR(a[0], 0.75 / std::sqrt(0.1875), 1e-15);
}

TEST(GroupAdvantages, AffineInvariance) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-3, 3), scale(0.1, 10);
  for (int i = 0; i < 500; ++i) {
    std::vector<double> r(4);
    for (auto& v : r) v = u(rng);
    const double a = scale(rng), b = u(rng);
    std::vector<double> mapped;
    for (double v : r) mapped.push_back(a * v + b);
    const auto x = group_advantages(r, 1e-8), y = group_advantages(mapped, 1e-8);
    for (int k = 0; k < 4; ++k) EXPECT_NEAR(x[k], y[k], 1e-9);
  }
}

TEST(GspoLoss, HandComputedInsideBand) {
  LossConfig cfg;
  const double log_r = 1e-4;  // inside [1 - 3e-4, 1 + 4e-4]
  std::vector<RolloutGroup> groups = {group_of(
      {seq_with_log_ratio(2, log_r), seq_with_log_ratio(3, 0), seq_with_log_ratio(1, 0),
       seq_with_log_ratio(5, 0)},
      {1, 0, 0, 0})};
  const auto res = gspo_loss(groups, cfg);
  const double a0 = 0.75 / std::sqrt(0.1875);
  EXPECT_NEAR(res.loss, -0.25 * a0 * (std::exp(log_r) - 1.0), 1e-15);
  EXPECT_EQ(res.diagnostics[0][0].branch, ClipBranch::kInside);
  // d loss / d theta_t = -(1/G) * A * r / |o| for the token-normalized objective.
  EXPECT_NEAR(res.grad[0][0][0], -0.25 * a0 * std::exp(log_r) / 2.0, 1e-15);
}

TEST(GspoLoss, BatchLevelDropsOuterNormalization) {
  LossConfig cfg;
  cfg.token_normalize = false;
  const double log_r = 1e-4;
  std::vector<RolloutGroup> groups = {group_of(
      {seq_with_log_ratio(2, log_r), seq_with_log_ratio(3, 0), seq_with_log_ratio(1, 0),
       seq_with_log_ratio(5, 0)},
      {1, 0, 0, 0})};
  const double a0 = 0.75 / std::sqrt(0.1875);
  const double a1 = -0.25 / std::sqrt(0.1875);
  const double expected = -0.25 * (2 * a0 * std::exp(log_r) + (3 + 1 + 5) * a1);
  EXPECT_NEAR(gspo_loss(groups, cfg).loss, expected, 1e-14);
}

TEST(GspoLoss, ZeroAtOldPolicy) {
  std::mt19937_64 rng(17);
  LossConfig cfg;
  for (int trial = 0; trial < 200; ++trial) {
    auto groups = random_rollout_groups(rng, 1 + rng() % 4, cfg);
    for (auto& g : groups) {
      for (auto& r : g.rollouts) r.logp.theta = r.logp.old;
    }
    const auto res = gspo_loss(groups, cfg);
    EXPECT_NEAR(res.loss, 0.0, 1e-15);
    for (const auto& g : res.grad) {
      double net = 0.0;
      for (const auto& seq : g) net += sum(seq);
      EXPECT_NEAR(net, 0.0, 1e-15);
    }
  }
}

TEST(GspoLoss, ZeroAdvantageGivesExactZero) {
  std::mt19937_64 rng(19);
  LossConfig cfg;
  for (int trial = 0; trial < 100; ++trial) {
    auto groups = random_rollout_groups(rng, 2, cfg);
    for (auto& g : groups) {
      for (auto& r : g.rollouts) r.reward = 0.5;
    }
    const auto res = gspo_loss(groups, cfg);
    EXPECT_EQ(res.loss, 0.0);
    for (double v : flatten_grad(res)) EXPECT_EQ(v, 0.0);
  }
}

TEST(GspoLoss, ClippedSequencesGetNoGradient) {
  LossConfig cfg;  // 3e-4 / 4e-4
  // r = 1.01 with A > 0 and r = 0.99 with A < 0 are both clipped.
  std::vector<RolloutGroup> groups = {group_of(
      {seq_with_log_ratio(3, std::log(1.01)), seq_with_log_ratio(4, std::log(0.99)),
       seq_with_log_ratio(2, 0), seq_with_log_ratio(2, 0)},
      {1.0, 0.0, 0.5, 0.5})};
  const auto res = gspo_loss(groups, cfg);
  ASSERT_GT(res.diagnostics[0][0].advantage, 0.0);
  ASSERT_LT(res.diagnostics[0][1].advantage, 0.0);
  EXPECT_EQ(res.diagnostics[0][0].branch, ClipBranch::kClipped);
  EXPECT_EQ(res.diagnostics[0][1].branch, ClipBranch::kClipped);
  for (double v : res.grad[0][0]) EXPECT_EQ(v, 0.0);
  for (double v : res.grad[0][1]) EXPECT_EQ(v, 0.0);

  // The same ratios with opposite advantages take the raw branch.
  groups[0].rollouts[0].reward = 0.0;
  groups[0].rollouts[1].reward = 1.0;
  const auto flipped = gspo_loss(groups, cfg);
  EXPECT_EQ(flipped.diagnostics[0][0].branch, ClipBranch::kUnclipped);
  EXPECT_EQ(flipped.diagnostics[0][1].branch, ClipBranch::kUnclipped);
  for (double v : flipped.grad[0][0]) EXPECT_NE(v, 0.0);
}

TEST(GspoLoss, RandomizedClippedBranchHasZeroGradient) {
  std::mt19937_64 rng(23);
  LossConfig cfg;
  std::size_t clipped = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const auto groups = random_rollout_groups(rng, 3, cfg);
    const auto res = gspo_loss(groups, cfg);
    for (std::size_t g = 0; g < groups.size(); ++g) {
      for (std::size_t i = 0; i < groups[g].rollouts.size(); ++i) {
        const auto& d = res.diagnostics[g][i];
        const bool outside = d.ratio < 1 - cfg.eps_clip_low || d.ratio > 1 + cfg.eps_clip_high;
        const bool picks_clip = (d.ratio > 1 && d.advantage > 0) || (d.ratio < 1 && d.advantage < 0);
        if (outside && picks_clip) {
          ++clipped;
          ASSERT_EQ(d.branch, ClipBranch::kClipped);
          for (double v : res.grad[g][i]) ASSERT_EQ(v, 0.0);
        }
      }
    }
  }
  EXPECT_GT(clipped, 100u);
}

TEST(GspoLoss, GroupSizeMismatch) {
  LossConfig cfg;
  std::vector<RolloutGroup> groups = {
      group_of({seq_with_log_ratio(2, 0), seq_with_log_ratio(2, 0)}, {1, 0})};
  try {
    gspo_loss(groups, cfg);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("group-size mismatch"), std::string::npos);
  }
  EXPECT_THROW(gspo_loss({}, cfg), ConfigError);
}

// ---------------------------------------------------------------------------
// Finite differences

TEST(FiniteDifference, QuadraticCalibration) {
  const ScalarFn f = [](std::span<const double> x) {
    return 3.0 * x[0] * x[0] + x[0] * x[1] - 2.0 * x[1] * x[1] + 5.0 * x[1];
  };
  const std::vector<double> x = {0.7, -1.3};
  const std::vector<double> g = {6.0 * x[0] + x[1], x[0] - 4.0 * x[1] + 5.0};
  const auto r = finite_difference_check(f, x, g, 1e-5, 1e-9);
  EXPECT_TRUE(r.passed);
  EXPECT_LT(r.max_rel_err, 1e-9);
  EXPECT_EQ(r.checked, 2u);

  const std::vector<double> wrong = {g[0], g[1] + 0.01};
  const auto bad = finite_difference_check(f, x, wrong, 1e-5, 1e-9);
  EXPECT_FALSE(bad.passed);
  EXPECT_EQ(bad.failing, std::vector<std::size_t>{1});

  const auto skipped = finite_difference_check(f, x, wrong, 1e-5, 1e-9, {false, true});
  EXPECT_TRUE(skipped.passed);
  EXPECT_EQ(skipped.skipped, 1u);
  EXPECT_THROW(finite_difference_check(f, x, g, 0.0, 1e-9), ConfigError);
}

TEST(FiniteDifference, DpoRandomInstances) {
  LossConfig cfg;
  const auto r = gradcheck_trials(LossKind::kDpo, 60, 1, cfg, 1e-5, 1e-6);
  EXPECT_TRUE(r.all_passed()) << r.max_rel_err;
  cfg.dpo_separate_kind_means = true;
  cfg.beta = 0.5;
  const auto s = gradcheck_trials(LossKind::kDpo, 60, 2, cfg, 1e-5, 1e-6);
  EXPECT_TRUE(s.all_passed()) << s.max_rel_err;
}

TEST(FiniteDifference, GspoRandomInstancesAllVariants) {
  for (bool token_norm : {true, false}) {
    for (bool ratio_norm : {true, false}) {
      LossConfig cfg;
      cfg.token_normalize = token_norm;
      cfg.ratio_length_normalize = ratio_norm;
      const auto r = gradcheck_trials(LossKind::kGspo, 50, 7, cfg, 1e-5, 1e-5);
      EXPECT_TRUE(r.all_passed()) << token_norm << ratio_norm << " " << r.max_rel_err;
      EXPECT_GT(r.checked, 1000u);
    }
  }
}

TEST(FiniteDifference, KinkMaskFlagsBoundarySequences) {
  LossConfig cfg;
  std::vector<RolloutGroup> groups = {group_of(
      {seq_with_log_ratio(3, std::log1p(4e-4)), seq_with_log_ratio(2, 0.0),
       seq_with_log_ratio(2, 0.0), seq_with_log_ratio(2, 0.0)},
      {1, 0, 0, 0})};
  const auto mask = gspo_kink_mask(groups, cfg, 1e-5);
  ASSERT_EQ(mask.size(), 9u);
  EXPECT_TRUE(mask[0] && mask[1] && mask[2]);
  for (std::size_t i = 3; i < mask.size(); ++i) EXPECT_FALSE(mask[i]);
}

// ---------------------------------------------------------------------------
// File formats

TEST(Files, PreferenceRoundTrip) {
  std::mt19937_64 rng(3);
  PreferenceBatches b{random_preference_items(rng, 3), random_preference_items(rng, 2)};
  std::ostringstream out;
  write_preferences(b, out);
  std::istringstream in(out.str());
  const auto back = parse_preferences(in);
  ASSERT_EQ(back.response.size(), 3u);
  ASSERT_EQ(back.video.size(), 2u);
  EXPECT_EQ(flatten_theta(back.response), flatten_theta(b.response));
  EXPECT_EQ(back.video[1].kind, b.video[1].kind);
  EXPECT_EQ(back.video[1].reasoning_side.ref, b.video[1].reasoning_side.ref);

  std::istringstream bad(R"({"id":"x","level":"response","kind":"sideways","theta_perception":-1,"ref_perception":-1,"theta_reasoning":-1,"ref_reasoning":-1})");
  EXPECT_THROW(parse_preferences(bad), ParseError);
}

TEST(Files, RolloutRoundTripKeepsGroupOrder) {
  std::mt19937_64 rng(5);
  LossConfig cfg;
  const auto groups = random_rollout_groups(rng, 3, cfg);
  std::ostringstream out;
  write_rollouts(groups, out);
  std::istringstream in(out.str());
  const auto back = parse_rollouts(in);
  ASSERT_EQ(back.size(), 3u);
  EXPECT_EQ(back[2].group_id, groups[2].group_id);
  EXPECT_EQ(flatten_theta(back), flatten_theta(groups));
  EXPECT_EQ(gspo_loss(back, cfg).loss, gspo_loss(groups, cfg).loss);
}

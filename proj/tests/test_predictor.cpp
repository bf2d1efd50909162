#include <gtest/gtest.h>

#include <cmath>

#include "gcnav/errors.hpp"
#include "gcnav/predictor.hpp"
#include "test_support.hpp"

using namespace gcnav;
using gcnav::testing::busy_scenario;
using gcnav::testing::collect_samples;
using gcnav::testing::tiny_network;

namespace {

Predictor tiny_predictor(bool goal = true, std::uint64_t seed = 1) {
  PredictorConfig pc;
  pc.encoder = tiny_network();
  pc.goal_conditioning = goal;
  return Predictor(pc, seed);
}

VectorState busy_state(std::uint64_t seed = 4) {
  World w = reset(busy_scenario(ScenarioId::kGoStraight, 0.4), seed);
  for (int i = 0; i < 20; ++i) step(w, ActionDelta{0.3, 0, 0});
  return encode_state(w);
}

std::size_t valid_slots(const VectorState& s) {
  std::size_t n = 0;
  for (const auto& slot : s.slots) n += slot.valid;
  return n;
}

}  // namespace

TEST(Predictor, OutputShapeAndValidity) {
  const Predictor p = tiny_predictor();
  const VectorState s = busy_state();
  const VectorState* ptr = &s;
  const Pose g{5, 0, 0};
  const dc::Tensor out = p.forward(build_inputs({&ptr, 1}, kVehicleSlots), {&g, 1});
  EXPECT_EQ(out.shape(), (dc::Shape{1, 6, 10, 3}));
  const World empty = reset(busy_scenario(ScenarioId::kGoStraight, 0.0), 0);
  const PredictedTrajectories pr = p.predict(encode_state(empty), g);
  EXPECT_TRUE(pr.valid[0]);
  for (std::size_t i = 1; i < kVehicleSlots; ++i) EXPECT_FALSE(pr.valid[i]);
}

TEST(Predictor, InvalidSlotsDoNotInfluenceValidOnes) {
  const Predictor p = tiny_predictor();
  VectorState s = busy_state();
  ASSERT_GE(valid_slots(s), 3u);
  SlotEncoding& junk = s.slots[kVehicleSlots - 1];
  junk = SlotEncoding{};  // an absent vehicle, zero-filled
  const PredictedTrajectories a = p.predict(s, Pose{5, 0, 0});
  for (Pose& h : junk.history) h = Pose{3, -4, 1.0, 7.0};
  for (auto& r : junk.routes) for (Pose& w : r) w = Pose{-8, 2, 0.3};
  const PredictedTrajectories b = p.predict(s, Pose{5, 0, 0});
  for (std::size_t i = 0; i < kVehicleSlots; ++i) {
    if (!a.valid[i]) continue;
    for (std::size_t t = 0; t < kFutureSteps; ++t) {
      EXPECT_NEAR(a.poses[i][t].x, b.poses[i][t].x, 1e-12);
      EXPECT_NEAR(a.poses[i][t].y, b.poses[i][t].y, 1e-12);
    }
  }
}

TEST(Predictor, SubgoalChangesEveryVehiclesPrediction) {
  const Predictor p = tiny_predictor();
  const VectorState s = busy_state();
  ASSERT_GE(valid_slots(s), 2u);
  const double h = 1e-5;
  const PredictedTrajectories up = p.predict(s, Pose{5 + h, 1, 0});
  const PredictedTrajectories down = p.predict(s, Pose{5 - h, 1, 0});
  for (std::size_t i = 0; i < kVehicleSlots; ++i) {
    if (!up.valid[i]) continue;
    double jac = 0;
    for (std::size_t t = 0; t < kFutureSteps; ++t) {
      jac += std::pow((up.poses[i][t].x - down.poses[i][t].x) / (2 * h), 2);
      jac += std::pow((up.poses[i][t].y - down.poses[i][t].y) / (2 * h), 2);
    }
    EXPECT_GT(jac, 0.0) << "slot " << i;
  }
}

TEST(Predictor, GoalConditioningOffIgnoresSubgoal) {
  const Predictor p = tiny_predictor(false);
  const VectorState s = busy_state();
  const PredictedTrajectories a = p.predict(s, Pose{5, 0, 0});
  const PredictedTrajectories b = p.predict(s, Pose{-12, 7, 2.0});
  for (std::size_t i = 0; i < kVehicleSlots; ++i) {
    for (std::size_t t = 0; t < kFutureSteps; ++t) EXPECT_EQ(a.poses[i][t], b.poses[i][t]);
  }
  const Pose goals[2] = {Pose{1, 2, 0}, Pose{3, 4, 1}};
  const dc::Tensor emb = p.subgoal_embedding(goals);
  for (double v : emb.data()) EXPECT_EQ(v, 0.0);
}

TEST(Predictor, PredictAllMatchesSingleCalls) {
  const Predictor p = tiny_predictor();
  const VectorState s = busy_state();
  std::vector<Pose> goals;
  for (int k = 0; k < 12; ++k) goals.push_back(Pose{5.0 * (1 + k % 4), 3.5 * (k / 4 - 1.0), 0.1 * k});
  const auto all = p.predict_all(s, goals);
  ASSERT_EQ(all.size(), goals.size());
  for (std::size_t k = 0; k < goals.size(); ++k) {
    const PredictedTrajectories one = p.predict(s, goals[k]);
    for (std::size_t i = 0; i < kVehicleSlots; ++i) {
      EXPECT_EQ(one.valid[i], all[k].valid[i]);
      for (std::size_t t = 0; t < kFutureSteps; ++t) EXPECT_EQ(one.poses[i][t], all[k].poses[i][t]);
    }
  }
}

TEST(Predictor, ConstantVelocityExamples) {
  VectorState s;
  s.slots[0].valid = true;
  s.slots[0].history.fill(Pose{0, 0, 0, 5.0});
  s.slots[1].valid = true;
  s.slots[1].history.fill(Pose{2, 3, 0.4, 0.0});
  s.slots[2].valid = true;
  s.slots[2].history.fill(Pose{0, 0, kPi / 2, 2.0});
  const PredictedTrajectories p = cv_predict(s);
  for (std::size_t t = 0; t < kFutureSteps; ++t) {
    EXPECT_NEAR(p.poses[0][t].x, 0.5 * (t + 1), 1e-12);
    EXPECT_NEAR(p.poses[0][t].y, 0.0, 1e-12);
    EXPECT_EQ(p.poses[1][t].x, 2);
    EXPECT_EQ(p.poses[1][t].y, 3);
    EXPECT_NEAR(p.poses[2][t].x, 0.0, 1e-12);
    EXPECT_NEAR(p.poses[2][t].y, 0.2 * (t + 1), 1e-12);
  }
  EXPECT_FALSE(p.valid[3]);
}

TEST(Predictor, AdeFdeExamples) {
  std::vector<Pose> a(10), b(10), c(10);
  for (int t = 0; t < 10; ++t) {
    a[t] = Pose{0.5 * t, 0, 0};
    b[t] = Pose{0.5 * t, 1.0, 0};
    c[t] = Pose{0.5 * t, 0.1 * (t + 1), 0};
  }
  EXPECT_EQ(ade_fde(a, a).ade, 0.0);
  EXPECT_EQ(ade_fde(a, a).fde, 0.0);
  EXPECT_DOUBLE_EQ(ade_fde(a, b).ade, 1.0);
  EXPECT_DOUBLE_EQ(ade_fde(a, b).fde, 1.0);
  EXPECT_NEAR(ade_fde(a, c).ade, 0.55, 1e-12);
  EXPECT_NEAR(ade_fde(a, c).fde, 1.0, 1e-12);
  std::vector<Pose> short_traj(9);
  EXPECT_THROW(ade_fde(a, short_traj), PredictionError);
}

namespace {

// Replaces the futures of every sample by the model's own prediction plus `offset`.
std::vector<PredictionSample> targets_from_predictions(const Predictor& p,
                                                       std::vector<PredictionSample> batch,
                                                       double offset) {
  for (PredictionSample& s : batch) {
    const PredictedTrajectories pr = p.predict(*s.state, s.subgoal);
    for (std::size_t i = 0; i < kVehicleSlots; ++i) {
      for (std::size_t t = 0; t < kFutureSteps; ++t) {
        const Pose& q = pr.poses[i][t];
        s.future[i][t] = Pose{q.x + offset, q.y + offset, q.heading + offset};
      }
    }
  }
  return batch;
}

}  // namespace

TEST(Predictor, LossZeroOnPerfectPrediction) {
  const Predictor p = tiny_predictor();
  const auto batch = targets_from_predictions(p, collect_samples(busy_scenario(ScenarioId::kTurnLeft), 3, 4), 0.0);
  EXPECT_NEAR(p.loss(batch).item(), 0.0, 1e-15);
}

TEST(Predictor, LossOfConstantThreeMetreOffset) {
  const Predictor p = tiny_predictor();
  const auto batch = targets_from_predictions(p, collect_samples(busy_scenario(ScenarioId::kTurnLeft), 3, 4), 3.0);
  EXPECT_NEAR(p.loss(batch).item(), 2.5, 1e-12);
}

TEST(Predictor, LossMatchesIndependentRecomputation) {
  const Predictor p = tiny_predictor(true, 9);
  auto batch = collect_samples(busy_scenario(ScenarioId::kGoStraight, 0.4), 11, 6);
  ASSERT_EQ(batch.size(), 6u);
  batch[2].future_valid[0] = false;  // exercise exclusion
  double total = 0;
  std::size_t count = 0;
  for (const PredictionSample& s : batch) {
    const PredictedTrajectories pr = p.predict(*s.state, s.subgoal);
    for (std::size_t i = 0; i < kVehicleSlots; ++i) {
      if (!s.future_valid[i] || !s.state->slots[i].valid) continue;
      double per = 0;
      for (std::size_t t = 0; t < kFutureSteps; ++t) {
        const double d[3] = {pr.poses[i][t].x - s.future[i][t].x, pr.poses[i][t].y - s.future[i][t].y,
                             normalize_angle(pr.poses[i][t].heading - s.future[i][t].heading)};
        for (double v : d) per += std::abs(v) < 1 ? 0.5 * v * v : std::abs(v) - 0.5;
      }
      total += per / 30.0;
      ++count;
    }
  }
  EXPECT_NEAR(p.loss(batch).item(), total / count, 1e-10);
}

TEST(Predictor, LossErrors) {
  const Predictor p = tiny_predictor();
  EXPECT_THROW(p.loss({}), PredictionError);
  auto batch = collect_samples(busy_scenario(ScenarioId::kGoStraight), 1, 1);
  batch[0].future_valid.fill(false);
  EXPECT_THROW(p.loss(batch), PredictionError);
}

TEST(Predictor, LossDecreasesOnFixedData) {
  Predictor p = tiny_predictor(true, 5);
  const auto batch = collect_samples(busy_scenario(ScenarioId::kTurnRight, 0.4), 21, 8);
  double prev = p.train_step(batch);
  for (int i = 1; i < 50; ++i) {
    const double l = p.train_step(batch);
    EXPECT_LT(l, prev) << "step " << i;
    prev = l;
  }
  EXPECT_EQ(p.params().steps(), 50u);
}


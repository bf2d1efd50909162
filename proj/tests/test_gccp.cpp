#include <gtest/gtest.h>

#include <sstream>

#include "gcnav/errors.hpp"
#include "gcnav/gccp.hpp"
#include "test_support.hpp"

using namespace gcnav;
using gcnav::testing::busy_scenario;
using gcnav::testing::tiny_network;

namespace {

Predictor tiny_predictor() {
  PredictorConfig pc;
  pc.encoder = tiny_network();
  return Predictor(pc, 3);
}

// Forces every predicted trajectory to run straight along the ego x axis at 5 m/s.
void force_straight_decoder(Predictor& p) {
  dc::ParamStore& ps = p.params();
  auto w = ps.param(*ps.find("decoder.1.weight"));
  for (double& v : w.mutable_data()) v = 0.0;
  auto b = ps.param(*ps.find("decoder.1.bias"));
  for (std::size_t t = 0; t < kFutureSteps; ++t) {
    b.mutable_data()[t * 3] = 0.1 * static_cast<double>(t + 1);  // x5 output scale
    b.mutable_data()[t * 3 + 1] = 0.0;
    b.mutable_data()[t * 3 + 2] = 0.0;
  }
}

VectorState crossing_scene(double other_y) {
  VectorState s;
  s.slots[0].valid = true;
  s.slots[0].vehicle_id = 0;
  s.slots[0].history.fill(Pose{0, 0, 0, 5.0});
  s.slots[1].valid = true;
  s.slots[1].vehicle_id = 4;
  s.slots[1].history.fill(Pose{3, other_y, kPi / 2, 8.0});
  return s;
}

SubgoalSet straight_subgoals() {
  SubgoalSet g;
  for (std::size_t k = 0; k < kNumSubgoals; ++k) g.goals[k] = Pose{5.0 * (1 + k % 4), 0, 0};
  return g;
}

bool oracle_collides(const PredictedTrajectories& p, BoxDims dims) {
  for (std::size_t i = 1; i < kVehicleSlots; ++i) {
    if (!p.valid[i]) continue;
    for (std::size_t t = 0; t < kFutureSteps; ++t) {
      if (sat_overlap(OrientedBox(p.poses[0][t], dims), OrientedBox(p.poses[i][t], dims))) return true;
    }
  }
  return false;
}

}  // namespace

TEST(Gccp, ModeNames) {
  for (GccpMode m : {GccpMode::kLearned, GccpMode::kCv, GccpMode::kDisabled}) {
    EXPECT_EQ(gccp_mode_from_string(to_string(m)), m);
  }
  EXPECT_THROW(gccp_mode_from_string("sometimes"), ConfigError);
}

TEST(Gccp, EmptyMapAllZero) {
  const Predictor p = tiny_predictor();
  World w = reset(busy_scenario(ScenarioId::kGoStraight, 0.0), 0);
  const Observation obs = observe(w);
  for (GccpMode m : {GccpMode::kLearned, GccpMode::kCv, GccpMode::kDisabled}) {
    const GccpResult r = compute_mask(obs.state, obs.subgoals, p, m);
    for (double v : r.mask.entries) EXPECT_EQ(v, 0.0);
  }
}

TEST(Gccp, DisabledIgnoresTraffic) {
  Predictor p = tiny_predictor();
  force_straight_decoder(p);
  const GccpResult r = compute_mask(crossing_scene(-4), straight_subgoals(), p, GccpMode::kDisabled);
  for (double v : r.mask.entries) EXPECT_EQ(v, 0.0);
  EXPECT_TRUE(r.predictions.empty());
}

TEST(Gccp, CvCrossingFlagsSubgoals) {
  Predictor p = tiny_predictor();
  force_straight_decoder(p);
  const SubgoalSet goals = straight_subgoals();
  const GccpResult hit = compute_mask(crossing_scene(-4), goals, p, GccpMode::kCv);
  const GccpResult miss = compute_mask(crossing_scene(-40), goals, p, GccpMode::kCv);
  ASSERT_EQ(hit.predictions.size(), kNumSubgoals);
  for (std::size_t k = 0; k < kNumSubgoals; ++k) {
    // Surrounding trajectories come from constant-velocity extrapolation.
    EXPECT_NEAR(hit.predictions[k].poses[1][4].y, -4 + 0.8 * 5, 1e-12);
    EXPECT_NEAR(hit.predictions[k].poses[0][4].x, 2.5, 1e-12);
    EXPECT_EQ(hit.mask.entries[k], oracle_collides(hit.predictions[k], {}) ? kUnsafeMaskValue : 0.0);
    EXPECT_EQ(hit.mask.entries[k], kUnsafeMaskValue);
    EXPECT_EQ(miss.mask.entries[k], 0.0);
  }
}

TEST(Gccp, LearnedMaskMatchesSatOracle) {
  const Predictor p = tiny_predictor();
  World w = reset(busy_scenario(ScenarioId::kTurnLeft, 0.5), 12);
  for (int i = 0; i < 30; ++i) step(w, ActionDelta{0.2, 0, 0});
  const Observation obs = observe(w);
  for (GccpMode m : {GccpMode::kLearned, GccpMode::kCv}) {
    const GccpResult r = compute_mask(obs.state, obs.subgoals, p, m);
    for (std::size_t k = 0; k < kNumSubgoals; ++k) {
      const double v = r.mask.entries[k];
      EXPECT_TRUE(v == 0.0 || v == kUnsafeMaskValue);
      EXPECT_EQ(v == kUnsafeMaskValue, oracle_collides(r.predictions[k], {}));
    }
  }
}

TEST(Gccp, AllUnsafeFallsBackToZeros) {
  RiskMask m;
  m.entries.fill(kUnsafeMaskValue);
  bool fell_back = false;
  const RiskMask c = consumable_mask(m, &fell_back);
  EXPECT_TRUE(fell_back);
  EXPECT_FALSE(c.any_unsafe());
  m.entries[3] = 0.0;
  const RiskMask d = consumable_mask(m, &fell_back);
  EXPECT_FALSE(fell_back);
  EXPECT_EQ(d.unsafe_count(), 11u);
}

TEST(Gccp, DebugRecordsCarryPredictions) {
  Predictor p = tiny_predictor();
  force_straight_decoder(p);
  const SubgoalSet goals = straight_subgoals();
  const GccpResult r = compute_mask(crossing_scene(-4), goals, p, GccpMode::kCv);
  std::ostringstream os;
  write_gccp_debug(os, goals, r);
  std::istringstream is(os.str());
  std::string line;
  std::size_t k = 0;
  while (std::getline(is, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j["subgoal_index"], k);
    EXPECT_EQ(j["mask"].get<double>(), kUnsafeMaskValue);
    EXPECT_EQ(j["predictions"].size(), 2u);
    EXPECT_EQ(j["predictions"][0]["trajectory"].size(), kFutureSteps);
    EXPECT_EQ(j, nlohmann::json::parse(gccp_debug_record(goals, r, k).dump()));
    ++k;
  }
  EXPECT_EQ(k, kNumSubgoals);
}

#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <sstream>

#include <json.hpp>

#include "gcnav/errors.hpp"
#include "gcnav/sim.hpp"

using namespace gcnav;

namespace {

std::shared_ptr<const Scenario> scenario(ScenarioId id, double spawn_rate) {
  TrafficFlowSpec t;
  t.spawn_rate = spawn_rate;
  return std::make_shared<const Scenario>(build_scenario(id, {}, t));
}

std::shared_ptr<const Scenario> open_plane() {
  // Huge drivable square so the ego never leaves the road.
  auto sc = std::make_shared<Scenario>(build_scenario(ScenarioId::kGoStraight, {}, TrafficFlowSpec{0, 0.0}));
  RoadNetwork net;
  net.add_lane(LaneKind::kInbound, Segment{{-500, 0}, 0.0, 1000, 0.0});
  net.add_drivable(ConvexPolygon{{{-1000, -1000}, {1000, -1000}, {1000, 1000}, {-1000, 1000}}});
  sc->network = std::move(net);
  sc->entry_lanes.clear();
  sc->ego_spawn = Pose{0, 0, 0, 0.0};
  sc->task_goal = Pose{900, 900, 0};
  return sc;
}

TrafficVehicle vehicle_on(const Scenario& sc, int lane, double s, double speed, int id) {
  TrafficVehicle v;
  v.id = id;
  v.lanes = {lane};
  for (int next = lane; !sc.network.lane(next).successors.empty();) {
    next = sc.network.lane(next).successors.front();
    v.lanes.push_back(next);
  }
  v.path = LanePath(sc.network, v.lanes, 0.0);
  v.s = s;
  v.nominal_speed = speed;
  const Vec2 p = v.path.point_at(s);
  const Vec2 t = v.path.tangent_at(s);
  v.pose = Pose{p.x, p.y, std::atan2(t.y, t.x), speed};
  v.history.assign(kHistorySteps, v.pose);
  return v;
}

bool same_world(const World& a, const World& b) {
  if (!(a.ego == b.ego) || a.ego_history != b.ego_history || a.traffic.size() != b.traffic.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.traffic.size(); ++i) {
    if (a.traffic[i].id != b.traffic[i].id || !(a.traffic[i].pose == b.traffic[i].pose) ||
        a.traffic[i].history != b.traffic[i].history || a.traffic[i].s != b.traffic[i].s) {
      return false;
    }
  }
  return a.spawner == b.spawner && a.step_count == b.step_count;
}

}  // namespace

TEST(Sim, ResetIsDeterministic) {
  const auto sc = scenario(ScenarioId::kTurnLeft, 0.2);
  const World a = reset(sc, 42);
  const World b = reset(sc, 42);
  EXPECT_TRUE(same_world(a, b));
  EXPECT_FALSE(a.traffic.empty());
}

TEST(Sim, ResetPlacesEgoAtSpawn) {
  const auto sc = scenario(ScenarioId::kGoStraight, 0.15);
  const World w = reset(sc, 3);
  EXPECT_EQ(w.ego.x, sc->ego_spawn.x);
  EXPECT_EQ(w.ego.y, sc->ego_spawn.y);
  EXPECT_EQ(w.ego.heading, sc->ego_spawn.heading);
  EXPECT_EQ(*w.ego.speed, 0.0);
  ASSERT_EQ(w.ego_history.size(), kHistorySteps);
  for (const Pose& p : w.ego_history) EXPECT_EQ(p, w.ego);
}

TEST(Sim, SpawnCountMatchesReplayedSpawner) {
  TrafficFlowSpec t;
  t.spawn_rate = 0.2;
  t.warmup_steps = 0;
  t.max_vehicles = 1000;
  auto sc = std::make_shared<const Scenario>(build_scenario(ScenarioId::kGoStraight, {}, t));
  SimConfig cfg;
  cfg.entry_clearance = 0.0;  // no blocking: every trigger spawns
  World w = reset(sc, 99, cfg);
  std::size_t peak = 0;
  for (int i = 0; i < 100; ++i) {
    step(w, ActionDelta{0, 0, 0});
    peak = std::max(peak, w.traffic.size());
  }

  Rng replay(99);
  std::size_t triggers = 0;
  for (int i = 0; i < 100; ++i) {
    for (std::size_t lane = 0; lane < sc->entry_lanes.size(); ++lane) {
      triggers += draw_spawn(replay).trigger < t.spawn_rate * kStepSeconds;
    }
  }
  EXPECT_EQ(replay, w.spawner);
  // Nothing despawns within 10 s on 100 m arms, so the live count is the trigger count.
  EXPECT_EQ(w.traffic.size(), triggers);
  EXPECT_EQ(peak, triggers);
  EXPECT_GT(triggers, 0u);
}

TEST(Sim, KeepActionOnEmptyMap) {
  World w = reset(open_plane(), 0);
  const StepOutcome out = step(w, ActionDelta{0.5, 0, 0});
  EXPECT_DOUBLE_EQ(w.ego.x, 0.5);
  EXPECT_DOUBLE_EQ(w.ego.y, 0.0);
  EXPECT_DOUBLE_EQ(w.ego.heading, 0.0);
  EXPECT_DOUBLE_EQ(*w.ego.speed, 5.0);
  EXPECT_FALSE(out.events.any());
  EXPECT_EQ(out.vehicles.front().id, 0);
}

TEST(Sim, ActionAppliedInEgoFrame) {
  const Pose p = apply_action(Pose{1, 1, kPi / 2, 0.0}, ActionDelta{0.5, 0, 0.15});
  EXPECT_NEAR(p.x, 1.0, 1e-12);
  EXPECT_NEAR(p.y, 1.5, 1e-12);
  EXPECT_NEAR(p.heading, kPi / 2 + 0.15, 1e-12);
}

TEST(Sim, CollisionDetected) {
  auto sc = scenario(ScenarioId::kGoStraight, 0.0);
  World w = reset(sc, 0);
  const int lane = sc->entry_lanes.front();
  TrafficVehicle v = vehicle_on(*sc, lane, 30.0, 0.0, 7);
  w.ego = v.pose;
  w.ego.speed = 0.0;
  w.traffic.push_back(v);
  const StepOutcome out = step(w, ActionDelta{0.2, 0, 0});
  EXPECT_TRUE(out.events.collision);
  EXPECT_FALSE(out.events.goal_reached);
  EXPECT_TRUE(w.terminated);
  EXPECT_THROW(step(w, ActionDelta{}), EpisodeError);
}

TEST(Sim, TimeoutAfter600Steps) {
  World w = reset(open_plane(), 0);
  StepOutcome out;
  for (int i = 0; i < 600; ++i) {
    ASSERT_FALSE(w.terminated) << i;
    out = step(w, ActionDelta{0.2, 0, 0});
  }
  EXPECT_TRUE(out.events.timeout);
  EXPECT_EQ(out.step, 600u);
}

TEST(Sim, OffRoadAndGoal) {
  auto sc = scenario(ScenarioId::kGoStraight, 0.0);
  World w = reset(sc, 0);
  w.ego = Pose{80, 80, 0, 0.0};
  EXPECT_TRUE(step(w, ActionDelta{}).events.off_road);

  World g = reset(sc, 0);
  g.ego = sc->task_goal;
  g.ego.y -= 1.5;
  g.ego.speed = 0.0;
  const StepOutcome out = step(g, ActionDelta{0.2, 0, 0.1});
  EXPECT_TRUE(out.events.goal_reached);
}

TEST(Sim, TrafficFreeRoadAdvancesAtNominal) {
  auto sc = scenario(ScenarioId::kGoStraight, 0.0);
  World w = reset(sc, 0);
  const int lane = sc->entry_lanes.back();
  w.traffic.push_back(vehicle_on(*sc, lane, 10.0, 6.0, 1));
  const Pose next = traffic_policy(w.traffic[0], w);
  EXPECT_NEAR(distance(next, w.traffic[0].pose), 0.6, 1e-9);
  EXPECT_DOUBLE_EQ(*next.speed, 6.0);
}

TEST(Sim, CarFollowingGapFormula) {
  auto sc = scenario(ScenarioId::kGoStraight, 0.0);
  for (auto [gap, expected] : {std::pair{4.0, 0.0}, std::pair{9.0, 3.0}, std::pair{20.0, 6.0}}) {
    World w = reset(sc, 0);
    w.ego = Pose{200, 200, 0, 0.0};  // out of the way
    const int lane = sc->entry_lanes.back();
    w.traffic.push_back(vehicle_on(*sc, lane, 10.0, 6.0, 1));
    w.traffic.push_back(vehicle_on(*sc, lane, 10.0 + gap, 0.0, 2));
    const Pose next = traffic_policy(w.traffic[0], w);
    EXPECT_NEAR(*next.speed, expected, 1e-9) << "gap " << gap;
  }
}

TEST(Sim, TrafficStaysOnPathAndHistoryLength) {
  auto sc = scenario(ScenarioId::kTurnLeft, 0.3);
  World w = reset(sc, 17);
  for (int i = 0; i < 200 && !w.terminated; ++i) {
    step(w, ActionDelta{0.0, 0, 0});
    ASSERT_EQ(w.ego_history.size(), kHistorySteps);
    for (const TrafficVehicle& v : w.traffic) {
      ASSERT_EQ(v.history.size(), kHistorySteps);
      const Vec2 on_path = v.path.point_at(v.s);
      EXPECT_LT(norm(on_path - v.pose.position()), 1e-6);
      EXPECT_GE(*v.pose.speed, 0.0);
      EXPECT_GT(v.pose.heading, -kPi);
      EXPECT_LE(v.pose.heading, kPi);
    }
  }
}

TEST(Sim, EpisodeDeterminism) {
  auto sc = scenario(ScenarioId::kTurnRight, 0.25);
  World a = reset(sc, 5), b = reset(sc, 5);
  for (int i = 0; i < 150 && !a.terminated; ++i) {
    const ActionDelta act{0.2 + 0.05 * (i % 3), 0, (i % 5 == 0) ? 0.05 : 0.0};
    step(a, act);
    step(b, act);
    ASSERT_TRUE(same_world(a, b)) << "step " << i;
  }
}

TEST(Sim, TrajectoryLogFormat) {
  World w = reset(scenario(ScenarioId::kGoStraight, 0.2), 1);
  std::ostringstream os;
  write_trajectory_log(os, snapshot_records(w));
  std::istringstream is(os.str());
  std::string line;
  std::size_t lines = 0;
  while (std::getline(is, line)) {
    const auto j = nlohmann::json::parse(line);
    for (const char* k : {"t", "id", "x", "y", "heading", "speed"}) EXPECT_TRUE(j.contains(k));
    ++lines;
  }
  EXPECT_EQ(lines, 1 + w.traffic.size());
}

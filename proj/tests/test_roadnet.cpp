#include <gtest/gtest.h>

#include <cmath>

#include "gcnav/errors.hpp"
#include "gcnav/roadnet.hpp"

using namespace gcnav;

namespace {

RoadNetwork single_lane_road(double length) {
  RoadNetwork net;
  net.add_lane(LaneKind::kInbound, Segment{{0, 0}, 0.0, length, 0.0});
  net.add_drivable(ConvexPolygon{{{0, -2}, {length, -2}, {length, 2}, {0, 2}}});
  return net;
}

bool inside_drivable(const RoadNetwork& net, Vec2 p) { return net.is_drivable(p); }

}  // namespace

TEST(Roadnet, LaneCenterlinesAreUnitChords) {
  const Scenario sc = build_scenario(ScenarioId::kGoStraight);
  for (const Lane& lane : sc.network.lanes()) {
    ASSERT_GE(lane.centerline.size(), 2u);
    for (std::size_t i = 1; i < lane.centerline.size(); ++i) {
      const double d = distance(lane.centerline[i - 1], lane.centerline[i]);
      EXPECT_NEAR(d, 1.0, 1e-6) << "lane " << lane.id;
    }
  }
  EXPECT_TRUE(sc.network.is_acyclic());
}

TEST(Roadnet, GoalHeadings) {
  const Scenario straight = build_scenario(ScenarioId::kGoStraight);
  EXPECT_NEAR(angle_distance(straight.task_goal.heading, straight.ego_spawn.heading), 0, 1e-12);
  const Scenario left = build_scenario(ScenarioId::kTurnLeft);
  EXPECT_NEAR(angle_distance(left.task_goal.heading, normalize_angle(left.ego_spawn.heading + kPi / 2)),
              0, 1e-12);
  const Scenario right = build_scenario(ScenarioId::kTurnRight);
  EXPECT_NEAR(
      angle_distance(right.task_goal.heading, normalize_angle(right.ego_spawn.heading - kPi / 2)), 0,
      1e-12);
}

TEST(Roadnet, SpawnAndGoalDistances) {
  for (ScenarioId id : kAllScenarios) {
    const Scenario sc = build_scenario(id);
    EXPECT_FALSE(sc.task_goal.speed.has_value());
    // Spawn 40 m before the junction mouth at 12 m from the centre.
    EXPECT_NEAR(std::abs(sc.ego_spawn.y), 52.0, 1e-9);
    const double goal_from_centre = std::max(std::abs(sc.task_goal.x), std::abs(sc.task_goal.y));
    EXPECT_NEAR(goal_from_centre, 42.0, 1e-9);
    EXPECT_TRUE(is_on_road(sc.network, OrientedBox(sc.ego_spawn, 4.0, 1.8)));
    EXPECT_TRUE(inside_drivable(sc.network, sc.task_goal.position()));
  }
}

TEST(Roadnet, UnknownScenarioName) {
  EXPECT_THROW(build_scenario("roundabout"), ConfigError);
  EXPECT_EQ(build_scenario("turn_left").id, ScenarioId::kTurnLeft);
}

TEST(Roadnet, AllRouteWaypointsOnDrivableArea) {
  for (ScenarioId id : kAllScenarios) {
    const Scenario sc = build_scenario(id);
    for (const Lane& lane : sc.network.lanes()) {
      for (const Pose& p : lane.centerline) EXPECT_TRUE(inside_drivable(sc.network, p.position()));
    }
    const auto routes = routes_toward(sc.network, sc.ego_spawn, sc.task_goal);
    for (const Route& r : routes) {
      for (std::size_t k = 0; k < r.valid_waypoints; ++k) {
        EXPECT_TRUE(inside_drivable(sc.network, r.waypoints[k].position()))
            << to_string(id) << " waypoint " << k;
      }
    }
  }
}

TEST(Roadnet, SingleLaneGivesThreeIdenticalRoutes) {
  const RoadNetwork net = single_lane_road(200);
  const auto routes = routes_toward(net, Pose{10, 0.3, 0}, Pose{150, 0, 0});
  ASSERT_EQ(routes.size(), kNumRoutes);
  for (const Route& r : routes) {
    ASSERT_EQ(r.waypoints.size(), kRouteWaypoints);
    for (std::size_t k = 0; k < kRouteWaypoints; ++k) {
      EXPECT_EQ(r.waypoints[k], routes[0].waypoints[k]);
    }
  }
  EXPECT_NEAR(routes[0].waypoints[0].x, 10, 1e-9);
  EXPECT_NEAR(routes[0].waypoints[0].y, 0, 1e-9);
}

TEST(Roadnet, ShortPathIsExtrapolated) {
  const RoadNetwork net = single_lane_road(20);
  const auto routes = routes_toward(net, Pose{5, 0, 0}, Pose{19, 0, 0});
  const Route& r = routes[0];
  ASSERT_EQ(r.waypoints.size(), kRouteWaypoints);
  EXPECT_EQ(r.valid_waypoints, 16u);
  for (std::size_t k = 1; k < kRouteWaypoints; ++k) {
    EXPECT_NEAR(distance(r.waypoints[k - 1], r.waypoints[k]), 1.0, 1e-6);
    EXPECT_NEAR(r.waypoints[k].heading, 0.0, 1e-12);
  }
  EXPECT_NEAR(r.waypoints.back().x, 54, 1e-6);
}

TEST(Roadnet, RoutesAreUnitChordsEverywhere) {
  for (ScenarioId id : kAllScenarios) {
    const Scenario sc = build_scenario(id);
    for (double ahead : {0.0, 20.0, 38.0, 45.0, 60.0}) {
      Pose p = sc.ego_spawn;
      p.y += ahead;
      if (!is_on_road(sc.network, OrientedBox(p, 4.0, 1.8))) continue;
      for (const Route& r : routes_toward(sc.network, p, sc.task_goal)) {
        ASSERT_EQ(r.waypoints.size(), kRouteWaypoints);
        for (std::size_t k = 1; k < kRouteWaypoints; ++k) {
          EXPECT_NEAR(distance(r.waypoints[k - 1], r.waypoints[k]), 1.0, 1e-6);
        }
      }
    }
  }
}

TEST(Roadnet, TwoLaneRoadOffersLaneChange) {
  const Scenario sc = build_scenario(ScenarioId::kGoStraight);
  const auto routes = routes_toward(sc.network, sc.ego_spawn, sc.task_goal);
  const Route* change = nullptr;
  for (const Route& r : routes) {
    if (r.lane_change) change = &r;
  }
  ASSERT_NE(change, nullptr);
  // The lane-change route ends one lane width to the side of the spawn lane.
  const double lateral = change->waypoints[30].x - sc.ego_spawn.x;
  EXPECT_NEAR(std::abs(lateral), sc.params.lane_width, 1e-6);
  EXPECT_FALSE(routes[0].lane_change);
}

TEST(Roadnet, RoutesDeterministic) {
  const Scenario sc = build_scenario(ScenarioId::kTurnLeft);
  const auto a = routes_toward(sc.network, sc.ego_spawn, sc.task_goal);
  const auto b = routes_toward(sc.network, sc.ego_spawn, sc.task_goal);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t r = 0; r < a.size(); ++r) EXPECT_EQ(a[r].waypoints, b[r].waypoints);
}

TEST(Roadnet, OffNetworkRoutesThrow) {
  const Scenario sc = build_scenario(ScenarioId::kGoStraight);
  EXPECT_THROW(routes_toward(sc.network, Pose{60, 60, 0}, sc.task_goal), OffRoadError);
}

TEST(Roadnet, RasterResolutionAndValues) {
  EXPECT_EQ(BevRaster::resolution, 0.78125);
  const Scenario sc = build_scenario(ScenarioId::kGoStraight);
  const BevRaster r = rasterize_drivable(sc.network, sc.ego_spawn);
  for (auto v : r.grid) EXPECT_TRUE(v == 0 || v == 1);
}

TEST(Roadnet, RasterCentreInJunction) {
  const Scenario sc = build_scenario(ScenarioId::kGoStraight);
  const BevRaster r = rasterize_drivable(sc.network, Pose{0, 0, kPi / 2});
  EXPECT_EQ(r.at(32, 32), 1);
}

TEST(Roadnet, RasterAllDrivableInsideLargeArea) {
  RoadNetwork net;
  net.add_drivable(ConvexPolygon{{{-100, -100}, {100, -100}, {100, 100}, {-100, 100}}});
  const BevRaster r = rasterize_drivable(net, Pose{3, -2, 0.8});
  EXPECT_EQ(r.drivable_fraction(), 1.0);
}

TEST(Roadnet, RasterFractionMatchesSupersampledReference) {
  const Scenario sc = build_scenario(ScenarioId::kGoStraight);
  const Pose ego = sc.ego_spawn;
  const BevRaster r = rasterize_drivable(sc.network, ego);
  // 10x10 samples per pixel.
  const double c = std::cos(ego.heading), s = std::sin(ego.heading);
  const double half = kBevSpan / 2;
  const int n = static_cast<int>(kBevSize) * 10;
  const double step = kBevSpan / n;
  std::size_t hits = 0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double ex = -half + (i + 0.5) * step;
      const double ey = -half + (j + 0.5) * step;
      const Vec2 w{ego.x + c * ex - s * ey, ego.y + s * ex + c * ey};
      hits += sc.network.is_drivable(w);
    }
  }
  const double reference = static_cast<double>(hits) / (static_cast<double>(n) * n);
  EXPECT_NEAR(r.drivable_fraction(), reference, 0.02);
}

TEST(Roadnet, RasterTranslationConsistent) {
  const Scenario sc = build_scenario(ScenarioId::kTurnLeft);
  const Pose ego{1.3, -30.0, kPi / 2 + 0.2};
  Pose shifted = ego;
  shifted.x += BevRaster::resolution * std::cos(ego.heading);
  shifted.y += BevRaster::resolution * std::sin(ego.heading);
  const BevRaster a = rasterize_drivable(sc.network, ego);
  const BevRaster b = rasterize_drivable(sc.network, shifted);
  std::size_t mismatches = 0;
  for (std::size_t row = 1; row + 1 < kBevSize; ++row) {
    for (std::size_t col = 0; col < kBevSize; ++col) {
      mismatches += a.at(row + 1, col) != b.at(row, col);
    }
  }
  // Pixel centres coincide up to floating-point rounding at polygon edges.
  EXPECT_LE(mismatches, 4u);
}

TEST(Roadnet, IsOnRoad) {
  const Scenario sc = build_scenario(ScenarioId::kTurnRight);
  EXPECT_TRUE(is_on_road(sc.network, OrientedBox(sc.ego_spawn, 4.0, 1.8)));
  EXPECT_FALSE(is_on_road(sc.network, OrientedBox(Pose{250, 250, 0}, 4.0, 1.8)));
}

TEST(Roadnet, BoxStraddlingEdgeIsOffRoad) {
  const RoadNetwork net = single_lane_road(100);
  // Road spans y in [-2, 2]; a 1.8 m wide box centred at y = 1.5 pokes out.
  const OrientedBox box(Pose{50, 1.5, 0}, 4.0, 1.8);
  int outside = 0;
  for (const Vec2& c : box.corners()) outside += !net.is_drivable(c);
  EXPECT_EQ(outside, 2);
  EXPECT_FALSE(is_on_road(net, box));
  EXPECT_TRUE(is_on_road(net, OrientedBox(Pose{50, 0.5, 0}, 4.0, 1.8)));
}

TEST(Roadnet, TrafficSpecValidation) {
  TrafficFlowSpec t;
  t.speed_min = 9;
  t.speed_max = 3;
  EXPECT_THROW(t.validate(), ConfigError);
  t = {};
  t.spawn_rate = -1;
  EXPECT_THROW(t.validate(), ConfigError);
}

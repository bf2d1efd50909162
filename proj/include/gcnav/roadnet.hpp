#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "gcnav/geometry.hpp"

namespace gcnav {

inline constexpr std::size_t kNumRoutes = 3;        // N_r
inline constexpr std::size_t kRouteWaypoints = 50;  // N_p
inline constexpr double kWaypointSpacing = 1.0;     // meters
inline constexpr double kMaxLaneDistance = 5.0;     // routes_toward requires a lane this close

/// A single straight or constant-curvature piece of lane centerline.
struct Segment {
  Vec2 start;
  double start_heading = 0.0;
  double length = 0.0;
  double curvature = 0.0;  // signed, 1/m; zero for straight lanes

  Vec2 point_at(double s) const;
  double heading_at(double s) const;
  /// Arc-length of the closest point, clamped to [0, length].
  double project(Vec2 p) const;
};

enum class LaneKind : std::uint8_t { kInbound, kConnector, kOutbound };

struct Lane {
  int id = 0;
  LaneKind kind = LaneKind::kInbound;
  Segment geometry;
  std::vector<int> successors;
  std::vector<int> neighbors;   // parallel same-direction lanes one lane width away
  std::vector<Pose> centerline;  // 1 m chord spacing, no speed
};

struct ConvexPolygon {
  std::vector<Vec2> vertices;  // counter-clockwise
  /// Closed containment test (boundary counts as inside).
  bool contains(Vec2 p) const;
};

/// Lane graph plus drivable area. Immutable once built.
class RoadNetwork {
 public:
  int add_lane(LaneKind kind, const Segment& geometry);
  void connect(int from, int to);
  void make_neighbors(int a, int b);
  void add_drivable(ConvexPolygon polygon);

  const std::vector<Lane>& lanes() const { return lanes_; }
  const Lane& lane(int id) const { return lanes_.at(static_cast<std::size_t>(id)); }
  const std::vector<ConvexPolygon>& drivable() const { return drivable_; }

  bool is_drivable(Vec2 p) const;
  /// True when the successor graph has no cycles.
  bool is_acyclic() const;

 private:
  std::vector<Lane> lanes_;
  std::vector<ConvexPolygon> drivable_;
};

/// Piecewise-continuous curve over a sequence of lanes, extended along the
/// final heading past its end.
class LanePath {
 public:
  LanePath() = default;
  LanePath(const RoadNetwork& net, std::vector<int> lane_ids, double start_s);

  Vec2 point_at(double u) const;
  Vec2 tangent_at(double u) const;
  /// Length from the start offset to the end of the last lane.
  double length() const { return length_; }
  const std::vector<int>& lane_ids() const { return lane_ids_; }

 private:
  std::vector<Segment> segments_;
  std::vector<int> lane_ids_;
  double start_s_ = 0.0;
  double length_ = 0.0;
};

struct Route {
  std::vector<Pose> waypoints;    // exactly kRouteWaypoints, 1 m chords
  std::size_t valid_waypoints = 0;  // leading waypoints on the map (rest are extrapolated)
  std::vector<int> lane_ids;
  bool lane_change = false;
};

/// Returns exactly kNumRoutes routes from the lane point nearest `pose`
/// toward `goal`. Throws OffRoadError when no lane is within 5 m.
std::vector<Route> routes_toward(const RoadNetwork& net, const Pose& pose, const Pose& goal);

/// Straight-line fallback route along `pose.heading`.
Route straight_route(const Pose& pose);

/// Samples a LanePath-like curve at exact 1 m chords. Exposed for tests.
std::vector<Pose> resample_chords(const LanePath& path, std::size_t count);

inline constexpr std::size_t kBevSize = 64;
inline constexpr double kBevSpan = 50.0;

struct BevRaster {
  static constexpr double resolution = kBevSpan / static_cast<double>(kBevSize);  // 0.78125 m/px
  std::array<std::uint8_t, kBevSize * kBevSize> grid{};

  /// Row index runs along the ego x axis, column along ego y.
  std::uint8_t at(std::size_t row, std::size_t col) const { return grid[row * kBevSize + col]; }
  /// Ego-frame coordinates of a pixel centre. Ego sits on the lower corner of pixel (32, 32).
  static Vec2 pixel_center(std::size_t row, std::size_t col);
  double drivable_fraction() const;
};

BevRaster rasterize_drivable(const RoadNetwork& net, const Pose& ego);

bool is_on_road(const RoadNetwork& net, const OrientedBox& box);

// ---------------------------------------------------------------------------
// Scenarios

enum class ScenarioId : std::uint8_t { kTurnLeft, kGoStraight, kTurnRight };

std::string_view to_string(ScenarioId id);
/// Throws ConfigError for unknown names.
ScenarioId scenario_from_string(std::string_view name);
inline constexpr std::array<ScenarioId, 3> kAllScenarios{
    ScenarioId::kTurnLeft, ScenarioId::kGoStraight, ScenarioId::kTurnRight};

struct TrafficFlowSpec {
  std::uint64_t seed = 0;
  double spawn_rate = 0.15;  // vehicles / second / entry lane
  double speed_min = 4.0;
  double speed_max = 8.0;
  std::size_t max_vehicles = 10;
  std::size_t warmup_steps = 100;
  void validate() const;
};

struct IntersectionParams {
  double lane_width = 3.5;
  std::size_t lanes_per_direction = 2;
  double arm_length = 100.0;     // from junction centre to map edge
  double junction_half = 12.0;   // junction mouth distance from the centre
  double spawn_distance = 40.0;  // ego spawn before the mouth
  double goal_distance = 30.0;   // task goal past the mouth
};

/// Builds the 4-way intersection used by every scenario.
RoadNetwork build_intersection(const IntersectionParams& params);

struct Scenario {
  ScenarioId id = ScenarioId::kGoStraight;
  RoadNetwork network;
  Pose ego_spawn;
  Pose task_goal;  // no speed
  TrafficFlowSpec traffic;
  IntersectionParams params;
  /// Inbound lanes where traffic enters, in spawn order.
  std::vector<int> entry_lanes;
};

Scenario build_scenario(ScenarioId id, const IntersectionParams& params = {},
                        const TrafficFlowSpec& traffic = {});
/// Name-based overload; throws ConfigError for unknown names.
Scenario build_scenario(std::string_view id, const IntersectionParams& params = {},
                        const TrafficFlowSpec& traffic = {});

}  // namespace gcnav

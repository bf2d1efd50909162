#include "gcnav/roadnet.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>

#include "gcnav/errors.hpp"

namespace gcnav {

// ---------------------------------------------------------------------------
// Segment

Vec2 Segment::point_at(double s) const {
  if (curvature == 0.0) {
    return start + s * Vec2{std::cos(start_heading), std::sin(start_heading)};
  }
  const double h = start_heading + curvature * s;
  return start + (1.0 / curvature) * Vec2{std::sin(h) - std::sin(start_heading),
                                          std::cos(start_heading) - std::cos(h)};
}

double Segment::heading_at(double s) const {
  return normalize_angle(start_heading + curvature * s);
}

double Segment::project(Vec2 p) const {
  if (curvature == 0.0) {
    const Vec2 dir{std::cos(start_heading), std::sin(start_heading)};
    return std::clamp(dot(p - start, dir), 0.0, length);
  }
  const Vec2 left{-std::sin(start_heading), std::cos(start_heading)};
  const Vec2 center = start + (1.0 / curvature) * left;
  const Vec2 r0 = start - center;
  const Vec2 rp = p - center;
  const double theta = std::atan2(cross(r0, rp), dot(r0, rp));
  const double s = theta / curvature;
  if (s >= 0.0 && s <= length) return s;
  const double d0 = norm(p - point_at(0.0));
  const double d1 = norm(p - point_at(length));
  return d0 <= d1 ? 0.0 : length;
}

namespace {

/// A parametric curve evaluated by the chord walker.
struct Curve {
  std::function<Vec2(double)> point;
  std::function<Vec2(double)> tangent;
};

std::vector<Pose> chord_walk(const Curve& curve, std::size_t count, std::vector<double>* params) {
  std::vector<Pose> out;
  out.reserve(count);
  double u = 0.0;
  Vec2 q = curve.point(0.0);
  auto emit = [&](double param, Vec2 p) {
    const Vec2 t = curve.tangent(param);
    out.push_back(Pose{p.x, p.y, normalize_angle(std::atan2(t.y, t.x)), std::nullopt});
    if (params) params->push_back(param);
  };
  emit(u, q);
  while (out.size() < count) {
    // Newton on |c(v) - q| = 1 starting one unit of parameter ahead.
    double v = u + kWaypointSpacing;
    bool converged = false;
    for (int it = 0; it < 30; ++it) {
      const Vec2 d = curve.point(v) - q;
      const double len = norm(d);
      const double f = len - kWaypointSpacing;
      if (std::abs(f) < 1e-12) {
        converged = true;
        break;
      }
      const double df = dot(curve.tangent(v), (1.0 / len) * d);
      if (!(df > 1e-6)) break;
      v -= f / df;
      if (v <= u) break;
    }
    if (!converged) {
      double lo = u;
      double hi = u + 2.0 * kWaypointSpacing;
      while (norm(curve.point(hi) - q) < kWaypointSpacing) hi += kWaypointSpacing;
      for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (lo + hi);
        (norm(curve.point(mid) - q) < kWaypointSpacing ? lo : hi) = mid;
      }
      v = 0.5 * (lo + hi);
    }
    u = v;
    q = curve.point(u);
    emit(u, q);
  }
  return out;
}

Curve path_curve(const LanePath& path) {
  return Curve{[&path](double u) { return path.point_at(u); },
               [&path](double u) { return path.tangent_at(u); }};
}

}  // namespace

// ---------------------------------------------------------------------------
// RoadNetwork

bool ConvexPolygon::contains(Vec2 p) const {
  const std::size_t n = vertices.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = vertices[i];
    const Vec2 b = vertices[(i + 1) % n];
    if (cross(b - a, p - a) < 0.0) return false;
  }
  return true;
}

int RoadNetwork::add_lane(LaneKind kind, const Segment& geometry) {
  Lane lane;
  lane.id = static_cast<int>(lanes_.size());
  lane.kind = kind;
  lane.geometry = geometry;
  lanes_.push_back(lane);
  const LanePath path(*this, {lane.id}, 0.0);
  const auto count = static_cast<std::size_t>(std::floor(geometry.length + 1e-9)) + 1;
  std::vector<double> params;
  auto samples = chord_walk(path_curve(path), count, &params);
  auto& cl = lanes_.back().centerline;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (params[i] <= geometry.length + 1e-9) cl.push_back(samples[i]);
  }
  return lane.id;
}

void RoadNetwork::connect(int from, int to) {
  lanes_.at(static_cast<std::size_t>(from)).successors.push_back(to);
}

void RoadNetwork::make_neighbors(int a, int b) {
  lanes_.at(static_cast<std::size_t>(a)).neighbors.push_back(b);
  lanes_.at(static_cast<std::size_t>(b)).neighbors.push_back(a);
}

void RoadNetwork::add_drivable(ConvexPolygon polygon) { drivable_.push_back(std::move(polygon)); }

bool RoadNetwork::is_drivable(Vec2 p) const {
  return std::any_of(drivable_.begin(), drivable_.end(),
                     [&](const ConvexPolygon& poly) { return poly.contains(p); });
}

bool RoadNetwork::is_acyclic() const {
  std::vector<int> state(lanes_.size(), 0);  // 0 new, 1 on stack, 2 done
  std::function<bool(int)> visit = [&](int id) {
    auto& st = state[static_cast<std::size_t>(id)];
    if (st == 1) return false;
    if (st == 2) return true;
    st = 1;
    for (int next : lane(id).successors) {
      if (!visit(next)) return false;
    }
    st = 2;
    return true;
  };
  for (const Lane& l : lanes_) {
    if (!visit(l.id)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// LanePath

LanePath::LanePath(const RoadNetwork& net, std::vector<int> lane_ids, double start_s)
    : lane_ids_(std::move(lane_ids)), start_s_(start_s) {
  double total = 0.0;
  for (int id : lane_ids_) {
    segments_.push_back(net.lane(id).geometry);
    total += segments_.back().length;
  }
  length_ = total - start_s_;
}

Vec2 LanePath::point_at(double u) const {
  double s = start_s_ + u;
  for (std::size_t i = 0; i + 1 < segments_.size(); ++i) {
    if (s <= segments_[i].length) return segments_[i].point_at(s);
    s -= segments_[i].length;
  }
  const Segment& last = segments_.back();
  if (s <= last.length) return last.point_at(s);
  const double h = last.heading_at(last.length);
  return last.point_at(last.length) + (s - last.length) * Vec2{std::cos(h), std::sin(h)};
}

Vec2 LanePath::tangent_at(double u) const {
  double s = start_s_ + u;
  for (std::size_t i = 0; i + 1 < segments_.size(); ++i) {
    if (s <= segments_[i].length) {
      const double h = segments_[i].heading_at(s);
      return {std::cos(h), std::sin(h)};
    }
    s -= segments_[i].length;
  }
  const Segment& last = segments_.back();
  const double h = last.heading_at(std::min(s, last.length));
  return {std::cos(h), std::sin(h)};
}

namespace {

constexpr double kLaneChangeLength = 15.0;
constexpr double kTowardGoalRadius = 5.0;

double smoothstep(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * (3.0 - 2.0 * x);
}

double smoothstep_deriv(double x) {
  if (x <= 0.0 || x >= 1.0) return 0.0;
  return 6.0 * x * (1.0 - x);
}

struct LaneProjection {
  int lane = 0;
  double s = 0.0;
  double dist = 0.0;
  double heading_gap = 0.0;
};

struct Candidate {
  std::vector<int> lanes;
  double start_s = 0.0;
  bool lane_change = false;
  int from_lane = 0;     // lane the blend starts on (lane changes only)
  double from_s = 0.0;
  double approach = 0.0;  // closest approach of the path to the goal
  double source_dist = 0.0;
  std::vector<int> effective;  // lane sequence without lanes already finished
};

double closest_approach(const RoadNetwork& net, const std::vector<int>& lanes, double start_s,
                        Vec2 goal) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < lanes.size(); ++i) {
    const Segment& seg = net.lane(lanes[i]).geometry;
    double s = seg.project(goal);
    if (i == 0) s = std::max(s, std::min(start_s, seg.length));
    best = std::min(best, norm(goal - seg.point_at(s)));
  }
  return best;
}

void enumerate_paths(const RoadNetwork& net, std::vector<int>& prefix,
                     std::vector<std::vector<int>>& out) {
  const Lane& last = net.lane(prefix.back());
  if (last.successors.empty()) {
    out.push_back(prefix);
    return;
  }
  for (int next : last.successors) {
    prefix.push_back(next);
    enumerate_paths(net, prefix, out);
    prefix.pop_back();
  }
}

Route make_route(const RoadNetwork& net, const Candidate& c) {
  Route route;
  route.lane_ids = c.lanes;
  route.lane_change = c.lane_change;
  const LanePath target(net, c.lanes, c.start_s);
  std::vector<double> params;
  if (!c.lane_change) {
    route.waypoints = chord_walk(path_curve(target), kRouteWaypoints, &params);
  } else {
    const LanePath origin(net, {c.from_lane}, c.from_s);
    Curve blend{
        [&](double u) {
          const double w = smoothstep(u / kLaneChangeLength);
          return (1.0 - w) * origin.point_at(u) + w * target.point_at(u);
        },
        [&](double u) {
          const double w = smoothstep(u / kLaneChangeLength);
          const double dw = smoothstep_deriv(u / kLaneChangeLength) / kLaneChangeLength;
          return (1.0 - w) * origin.tangent_at(u) + w * target.tangent_at(u) +
                 dw * (target.point_at(u) - origin.point_at(u));
        }};
    route.waypoints = chord_walk(blend, kRouteWaypoints, &params);
  }
  route.valid_waypoints = static_cast<std::size_t>(
      std::count_if(params.begin(), params.end(),
                    [&](double u) { return u <= target.length() + 1e-9; }));
  return route;
}

}  // namespace

std::vector<Pose> resample_chords(const LanePath& path, std::size_t count) {
  return chord_walk(path_curve(path), count, nullptr);
}

Route straight_route(const Pose& pose) {
  Route r;
  const Vec2 dir{std::cos(pose.heading), std::sin(pose.heading)};
  for (std::size_t k = 0; k < kRouteWaypoints; ++k) {
    const Vec2 p = pose.position() + (static_cast<double>(k) * kWaypointSpacing) * dir;
    r.waypoints.push_back(Pose{p.x, p.y, normalize_angle(pose.heading), std::nullopt});
  }
  r.valid_waypoints = kRouteWaypoints;
  return r;
}

std::vector<Route> routes_toward(const RoadNetwork& net, const Pose& pose, const Pose& goal) {
  std::vector<LaneProjection> near;
  for (const Lane& lane : net.lanes()) {
    const double s = lane.geometry.project(pose.position());
    const double d = norm(pose.position() - lane.geometry.point_at(s));
    if (d <= kMaxLaneDistance) {
      near.push_back({lane.id, s, d, angle_distance(pose.heading, lane.geometry.heading_at(s))});
    }
  }
  if (near.empty()) throw OffRoadError("no lane within 5 m of pose");

  std::vector<LaneProjection> aligned;
  std::copy_if(near.begin(), near.end(), std::back_inserter(aligned),
               [](const LaneProjection& p) { return p.heading_gap < kPi / 2.0; });
  if (!aligned.empty()) near = std::move(aligned);
  std::sort(near.begin(), near.end(), [](const LaneProjection& a, const LaneProjection& b) {
    if (a.dist != b.dist) return a.dist < b.dist;
    if (a.heading_gap != b.heading_gap) return a.heading_gap < b.heading_gap;
    return a.lane < b.lane;
  });
  const LaneProjection best = near.front();

  std::vector<Candidate> candidates;
  auto add_paths = [&](int lane, double s, double source_dist, bool change) {
    std::vector<std::vector<int>> paths;
    std::vector<int> prefix{lane};
    enumerate_paths(net, prefix, paths);
    for (auto& lanes : paths) {
      Candidate c;
      c.start_s = s;
      c.lane_change = change;
      c.from_lane = best.lane;
      c.from_s = best.s;
      c.source_dist = source_dist;
      c.approach = closest_approach(net, lanes, s, goal.position());
      // Lanes whose end we already sit on contribute no geometry.
      std::size_t skip = 0;
      double rem = s;
      while (skip + 1 < lanes.size() && rem >= net.lane(lanes[skip]).geometry.length - 1e-9) {
        rem = 0.0;
        ++skip;
      }
      c.effective.assign(lanes.begin() + static_cast<std::ptrdiff_t>(skip), lanes.end());
      c.lanes = std::move(lanes);
      candidates.push_back(std::move(c));
    }
  };

  for (const LaneProjection& p : near) {
    if (p.dist <= best.dist + 1.0) add_paths(p.lane, p.s, p.dist, false);
  }
  for (int nb : net.lane(best.lane).neighbors) {
    const Segment& g = net.lane(nb).geometry;
    const double s = g.project(pose.position());
    add_paths(nb, s, norm(pose.position() - g.point_at(s)), true);
  }

  const bool any_toward = std::any_of(candidates.begin(), candidates.end(), [](const Candidate& c) {
    return c.approach <= kTowardGoalRadius;
  });
  if (any_toward) {
    std::erase_if(candidates, [](const Candidate& c) { return c.approach > kTowardGoalRadius; });
  }
  std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.lane_change != b.lane_change) return !a.lane_change;
    if (a.approach != b.approach) return a.approach < b.approach;
    if (a.source_dist != b.source_dist) return a.source_dist < b.source_dist;
    return a.lanes < b.lanes;
  });

  std::vector<const Candidate*> chosen;
  for (const Candidate& c : candidates) {
    const bool dup = std::any_of(chosen.begin(), chosen.end(), [&](const Candidate* o) {
      return o->effective == c.effective && o->lane_change == c.lane_change;
    });
    if (!dup) chosen.push_back(&c);
    if (chosen.size() == kNumRoutes) break;
  }

  std::vector<Route> routes;
  for (const Candidate* c : chosen) routes.push_back(make_route(net, *c));
  while (routes.size() < kNumRoutes) routes.push_back(routes.front());
  return routes;
}

// ---------------------------------------------------------------------------
// Raster

Vec2 BevRaster::pixel_center(std::size_t row, std::size_t col) {
  const double half = static_cast<double>(kBevSize / 2);
  return {(static_cast<double>(row) - half + 0.5) * resolution,
          (static_cast<double>(col) - half + 0.5) * resolution};
}

double BevRaster::drivable_fraction() const {
  std::size_t n = 0;
  for (auto v : grid) n += v;
  return static_cast<double>(n) / static_cast<double>(grid.size());
}

BevRaster rasterize_drivable(const RoadNetwork& net, const Pose& ego) {
  BevRaster out;
  const double c = std::cos(ego.heading);
  const double s = std::sin(ego.heading);
  for (std::size_t row = 0; row < kBevSize; ++row) {
    for (std::size_t col = 0; col < kBevSize; ++col) {
      const Vec2 e = BevRaster::pixel_center(row, col);
      const Vec2 w{ego.x + c * e.x - s * e.y, ego.y + s * e.x + c * e.y};
      out.grid[row * kBevSize + col] = net.is_drivable(w) ? 1 : 0;
    }
  }
  return out;
}

bool is_on_road(const RoadNetwork& net, const OrientedBox& box) {
  for (const Vec2& corner : box.corners()) {
    if (!net.is_drivable(corner)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Scenarios

std::string_view to_string(ScenarioId id) {
  switch (id) {
    case ScenarioId::kTurnLeft:
      return "turn_left";
    case ScenarioId::kGoStraight:
      return "go_straight";
    case ScenarioId::kTurnRight:
      return "turn_right";
  }
  return "unknown";
}

ScenarioId scenario_from_string(std::string_view name) {
  for (ScenarioId id : kAllScenarios) {
    if (to_string(id) == name) return id;
  }
  throw ConfigError("unknown scenario '" + std::string(name) + "'");
}

void TrafficFlowSpec::validate() const {
  if (speed_min > speed_max) throw ConfigError("traffic speed_min exceeds speed_max");
  if (speed_min < 0.0) throw ConfigError("traffic speeds must be non-negative");
  if (spawn_rate < 0.0) throw ConfigError("traffic spawn_rate must be non-negative");
}

namespace {

// Arms are indexed counter-clockwise from east; arm a points outward at a * pi/2.
constexpr std::size_t kArms = 4;
constexpr std::size_t kEast = 0, kNorth = 1, kWest = 2, kSouth = 3;

Vec2 unit(double h) { return {std::cos(h), std::sin(h)}; }
Vec2 right_of(double h) { return {std::sin(h), -std::cos(h)}; }
double arm_angle(std::size_t a) { return static_cast<double>(a) * kPi / 2.0; }

struct LaneIndex {
  // [arm][lane], lane 0 is innermost
  std::array<std::vector<int>, kArms> inbound;
  std::array<std::vector<int>, kArms> outbound;
};

Segment quarter_arc(Vec2 from, double heading, Vec2 to, bool left) {
  const double chord = norm(to - from);
  const double radius = chord / std::sqrt(2.0);
  Segment seg;
  seg.start = from;
  seg.start_heading = normalize_angle(heading);
  seg.curvature = (left ? 1.0 : -1.0) / radius;
  seg.length = radius * kPi / 2.0;
  return seg;
}

RoadNetwork build_network(const IntersectionParams& p, LaneIndex& index) {
  if (p.lanes_per_direction == 0) throw ConfigError("lanes_per_direction must be positive");
  if (!(p.arm_length > p.junction_half)) throw ConfigError("arm_length must exceed junction_half");
  const double half_width = static_cast<double>(p.lanes_per_direction) * p.lane_width;
  if (!(p.junction_half >= half_width)) throw ConfigError("junction too small for road width");
  RoadNetwork net;
  const double arm_len = p.arm_length - p.junction_half;

  for (std::size_t a = 0; a < kArms; ++a) {
    const double out_h = arm_angle(a);
    const double in_h = normalize_angle(out_h + kPi);
    for (std::size_t k = 0; k < p.lanes_per_direction; ++k) {
      const double off = (static_cast<double>(k) + 0.5) * p.lane_width;
      Segment in;
      in.start = p.arm_length * unit(out_h) + off * right_of(in_h);
      in.start_heading = in_h;
      in.length = arm_len;
      index.inbound[a].push_back(net.add_lane(LaneKind::kInbound, in));
    }
    for (std::size_t k = 0; k < p.lanes_per_direction; ++k) {
      const double off = (static_cast<double>(k) + 0.5) * p.lane_width;
      Segment out;
      out.start = p.junction_half * unit(out_h) + off * right_of(out_h);
      out.start_heading = normalize_angle(out_h);
      out.length = arm_len;
      index.outbound[a].push_back(net.add_lane(LaneKind::kOutbound, out));
    }
    for (std::size_t k = 0; k + 1 < p.lanes_per_direction; ++k) {
      net.make_neighbors(index.inbound[a][k], index.inbound[a][k + 1]);
      net.make_neighbors(index.outbound[a][k], index.outbound[a][k + 1]);
    }
  }

  const std::size_t inner = 0;
  const std::size_t outer = p.lanes_per_direction - 1;
  for (std::size_t a = 0; a < kArms; ++a) {
    const double in_h = normalize_angle(arm_angle(a) + kPi);
    for (std::size_t k = 0; k < p.lanes_per_direction; ++k) {
      const int in_id = index.inbound[a][k];
      const Vec2 mouth = net.lane(in_id).geometry.point_at(arm_len);
      // Straight through to the opposite arm.
      const std::size_t opp = (a + 2) % kArms;
      Segment straight;
      straight.start = mouth;
      straight.start_heading = in_h;
      straight.length = 2.0 * p.junction_half;
      const int s_id = net.add_lane(LaneKind::kConnector, straight);
      net.connect(in_id, s_id);
      net.connect(s_id, index.outbound[opp][k]);
      if (k == inner) {
        const std::size_t left_arm = (a + 3) % kArms;
        const int out_id = index.outbound[left_arm][k];
        const int c_id = net.add_lane(
            LaneKind::kConnector,
            quarter_arc(mouth, in_h, net.lane(out_id).geometry.start, /*left=*/true));
        net.connect(in_id, c_id);
        net.connect(c_id, out_id);
      }
      if (k == outer) {
        const std::size_t right_arm = (a + 1) % kArms;
        const int out_id = index.outbound[right_arm][k];
        const int c_id = net.add_lane(
            LaneKind::kConnector,
            quarter_arc(mouth, in_h, net.lane(out_id).geometry.start, /*left=*/false));
        net.connect(in_id, c_id);
        net.connect(c_id, out_id);
      }
    }
  }

  const double j = p.junction_half;
  const double L = p.arm_length;
  const double w = half_width;
  net.add_drivable({{{-j, -j}, {j, -j}, {j, j}, {-j, j}}});
  net.add_drivable({{{j, -w}, {L, -w}, {L, w}, {j, w}}});
  net.add_drivable({{{-w, j}, {w, j}, {w, L}, {-w, L}}});
  net.add_drivable({{{-L, -w}, {-j, -w}, {-j, w}, {-L, w}}});
  net.add_drivable({{{-w, -L}, {w, -L}, {w, -j}, {-w, -j}}});
  return net;
}

}  // namespace

RoadNetwork build_intersection(const IntersectionParams& params) {
  LaneIndex index;
  return build_network(params, index);
}

Scenario build_scenario(ScenarioId id, const IntersectionParams& params,
                        const TrafficFlowSpec& traffic) {
  traffic.validate();
  LaneIndex index;
  Scenario sc;
  sc.id = id;
  sc.params = params;
  sc.traffic = traffic;
  sc.network = build_network(params, index);

  const std::size_t inner = 0;
  const std::size_t outer = params.lanes_per_direction - 1;
  std::size_t spawn_lane = inner;
  std::size_t exit_arm = kNorth;
  std::size_t exit_lane = inner;
  switch (id) {
    case ScenarioId::kTurnLeft:
      exit_arm = kWest;
      break;
    case ScenarioId::kGoStraight:
      break;
    case ScenarioId::kTurnRight:
      spawn_lane = outer;
      exit_arm = kEast;
      exit_lane = outer;
      break;
  }
  const Segment& in = sc.network.lane(index.inbound[kSouth][spawn_lane]).geometry;
  const double s_spawn = in.length - params.spawn_distance;
  const Vec2 sp = in.point_at(s_spawn);
  sc.ego_spawn = Pose{sp.x, sp.y, in.heading_at(s_spawn), 0.0};
  const Segment& out = sc.network.lane(index.outbound[exit_arm][exit_lane]).geometry;
  const Vec2 gp = out.point_at(params.goal_distance);
  sc.task_goal = Pose{gp.x, gp.y, out.heading_at(params.goal_distance), std::nullopt};
  for (std::size_t a = 0; a < kArms; ++a) {
    for (int lane : index.inbound[a]) sc.entry_lanes.push_back(lane);
  }
  return sc;
}

Scenario build_scenario(std::string_view id, const IntersectionParams& params,
                        const TrafficFlowSpec& traffic) {
  return build_scenario(scenario_from_string(id), params, traffic);
}

}  // namespace gcnav

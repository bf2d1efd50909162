#include "gcnav/sim.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <json.hpp>

#include "gcnav/errors.hpp"

namespace gcnav {

namespace {

Pose pose_on_path(const LanePath& path, double s, double speed) {
  const Vec2 p = path.point_at(s);
  const Vec2 t = path.tangent_at(s);
  return Pose{p.x, p.y, normalize_angle(std::atan2(t.y, t.x)), speed};
}

void push_history(std::deque<Pose>& history, const Pose& pose) {
  history.push_back(pose);
  while (history.size() > kHistorySteps) history.pop_front();
}

std::deque<Pose> backfilled_history(const Pose& pose) {
  Pose still = pose;
  still.speed = 0.0;
  return std::deque<Pose>(kHistorySteps, still);
}

struct PathProjection {
  double s = 0.0;
  double lateral = 0.0;
  double heading = 0.0;
};

/// Projection of a point onto a lane path (no extrapolation).
PathProjection project_on_path(const RoadNetwork& net, const std::vector<int>& lanes, Vec2 p) {
  PathProjection best{0.0, std::numeric_limits<double>::infinity(), 0.0};
  double offset = 0.0;
  for (int id : lanes) {
    const Segment& seg = net.lane(id).geometry;
    const double s = seg.project(p);
    const double d = norm(p - seg.point_at(s));
    if (d < best.lateral) best = {offset + s, d, seg.heading_at(s)};
    offset += seg.length;
  }
  return best;
}

void spawn_traffic(World& world) {
  const Scenario& sc = *world.scenario;
  const RoadNetwork& net = sc.network;
  for (int entry : sc.entry_lanes) {
    const SpawnDraw draw = draw_spawn(world.spawner);
    if (!(draw.trigger < sc.traffic.spawn_rate * kStepSeconds)) continue;
    if (world.traffic.size() >= sc.traffic.max_vehicles) continue;
    const Vec2 entry_point = net.lane(entry).geometry.point_at(0.0);
    const double clearance = world.config.entry_clearance;
    bool blocked = norm(world.ego.position() - entry_point) < clearance;
    for (const TrafficVehicle& v : world.traffic) {
      if (norm(v.pose.position() - entry_point) < clearance) blocked = true;
    }
    if (blocked) continue;

    const auto& succ = net.lane(entry).successors;
    TrafficVehicle v;
    v.id = world.next_vehicle_id++;
    v.lanes.push_back(entry);
    if (!succ.empty()) {
      const int connector =
          succ[std::min(succ.size() - 1, static_cast<std::size_t>(draw.route * succ.size()))];
      v.lanes.push_back(connector);
      for (int next = connector; !net.lane(next).successors.empty();) {
        next = net.lane(next).successors.front();
        v.lanes.push_back(next);
      }
    }
    v.path = LanePath(net, v.lanes, 0.0);
    v.nominal_speed = sc.traffic.speed_min + (sc.traffic.speed_max - sc.traffic.speed_min) * draw.speed;
    v.s = 0.0;
    v.pose = pose_on_path(v.path, 0.0, v.nominal_speed);
    v.history = backfilled_history(v.pose);
    world.traffic.push_back(std::move(v));
  }
}

/// Moves traffic one step using decisions taken on the pre-step snapshot.
void advance_traffic(World& world, const World& before) {
  std::vector<TrafficVehicle> kept;
  kept.reserve(world.traffic.size());
  for (std::size_t i = 0; i < world.traffic.size(); ++i) {
    TrafficVehicle v = std::move(world.traffic[i]);
    const Pose next = traffic_policy(before.traffic[i], before);
    const double speed = *next.speed;
    v.s += speed * kStepSeconds;
    if (v.s >= v.path.length()) continue;  // past the route end
    v.pose = next;
    push_history(v.history, v.pose);
    kept.push_back(std::move(v));
  }
  world.traffic = std::move(kept);
}

}  // namespace

Pose World::path_end(const TrafficVehicle& v) {
  return pose_on_path(v.path, v.path.length(), 0.0);
}

SpawnDraw draw_spawn(Rng& rng) {
  SpawnDraw d;
  d.trigger = rng.uniform();
  d.speed = rng.uniform();
  d.route = rng.uniform();
  return d;
}

Pose apply_action(const Pose& pose, const ActionDelta& a) {
  const double c = std::cos(pose.heading);
  const double s = std::sin(pose.heading);
  return Pose{pose.x + c * a.dx - s * a.dy, pose.y + s * a.dx + c * a.dy,
              normalize_angle(pose.heading + a.dheading), std::hypot(a.dx, a.dy) / kStepSeconds};
}

Pose traffic_policy(const TrafficVehicle& vehicle, const World& world) {
  const RoadNetwork& net = world.scenario->network;
  const SimConfig& cfg = world.config;
  const double horizon = cfg.stop_gap + cfg.slow_range;
  const double lane_half = 0.5 * world.scenario->params.lane_width;
  double gap = std::numeric_limits<double>::infinity();
  auto consider = [&](const Pose& other) {
    const Vec2 p = other.position();
    if (norm(p - vehicle.pose.position()) > horizon + lane_half) return;
    const PathProjection proj = project_on_path(net, vehicle.lanes, p);
    const double d = proj.s - vehicle.s;
    if (d <= 0.0 || d > horizon) return;
    if (proj.lateral >= lane_half) return;
    if (angle_distance(other.heading, proj.heading) >= kPi / 2.0) return;
    gap = std::min(gap, d);
  };
  consider(world.ego);
  for (const TrafficVehicle& other : world.traffic) {
    if (other.id != vehicle.id) consider(other.pose);
  }
  double speed = vehicle.nominal_speed;
  if (std::isfinite(gap)) {
    speed = std::clamp(vehicle.nominal_speed * (gap - cfg.stop_gap) / cfg.slow_range, 0.0,
                       vehicle.nominal_speed);
  }
  return pose_on_path(vehicle.path, vehicle.s + speed * kStepSeconds, speed);
}

World reset(std::shared_ptr<const Scenario> scenario, std::uint64_t flow_seed,
            const SimConfig& config) {
  World w;
  w.scenario = std::move(scenario);
  w.config = config;
  w.ego = w.scenario->ego_spawn;
  w.ego.speed = 0.0;
  w.ego_history = backfilled_history(w.ego);
  w.spawner = Rng(flow_seed);
  for (std::size_t i = 0; i < w.scenario->traffic.warmup_steps; ++i) {
    const World before = w;
    advance_traffic(w, before);
    spawn_traffic(w);
  }
  return w;
}

StepOutcome step(World& world, const ActionDelta& action) {
  if (world.terminated) throw EpisodeError("step called on a terminated episode");
  const World before = world;
  world.ego = apply_action(world.ego, action);
  advance_traffic(world, before);
  spawn_traffic(world);
  push_history(world.ego_history, world.ego);
  ++world.step_count;

  StepOutcome out;
  out.step = world.step_count;
  const SimConfig& cfg = world.config;
  const OrientedBox ego_box(world.ego, cfg.vehicle_dims);
  for (const TrafficVehicle& v : world.traffic) {
    if (sat_overlap(ego_box, OrientedBox(v.pose, cfg.vehicle_dims))) {
      out.events.collision = true;
      break;
    }
  }
  out.events.off_road = !is_on_road(world.scenario->network, ego_box);
  const Pose& goal = world.scenario->task_goal;
  out.events.goal_reached = !out.events.collision && !out.events.off_road &&
                            distance(world.ego, goal) < cfg.goal_radius &&
                            angle_distance(world.ego.heading, goal.heading) <
                                cfg.goal_heading_tolerance;
  out.events.timeout = world.step_count >= cfg.max_steps;
  world.terminated = out.events.any();

  out.vehicles.push_back({0, world.ego});
  for (const TrafficVehicle& v : world.traffic) out.vehicles.push_back({v.id, v.pose});
  return out;
}

std::vector<TrajectoryRecord> snapshot_records(const World& world) {
  std::vector<TrajectoryRecord> out;
  out.push_back({world.step_count, 0, world.ego});
  for (const TrafficVehicle& v : world.traffic) out.push_back({world.step_count, v.id, v.pose});
  return out;
}

void write_trajectory_log(std::ostream& os, const std::vector<TrajectoryRecord>& records) {
  for (const TrajectoryRecord& r : records) {
    nlohmann::ordered_json j;
    j["t"] = r.step;
    j["id"] = r.vehicle_id;
    j["x"] = r.pose.x;
    j["y"] = r.pose.y;
    j["heading"] = r.pose.heading;
    j["speed"] = r.pose.speed.value_or(0.0);
    os << j.dump() << '\n';
  }
}

}  // namespace gcnav

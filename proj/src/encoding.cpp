#include "gcnav/encoding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gcnav/errors.hpp"

namespace gcnav {

TrajVector SlotEncoding::traj_vector(std::size_t j) const {
  return TrajVector{history[j == 0 ? 0 : j - 1], history[j], vehicle_id};
}

RouteVector SlotEncoding::route_vector(std::size_t r, std::size_t k) const {
  return RouteVector{routes[r][k], routes[r][k + 1], vehicle_id, static_cast<int>(r)};
}

namespace {

std::vector<Route> routes_or_straight(const RoadNetwork& net, const Pose& pose, const Pose& goal) {
  try {
    return routes_toward(net, pose, goal);
  } catch (const OffRoadError&) {
    return std::vector<Route>(kNumRoutes, straight_route(pose));
  }
}

void fill_slot(SlotEncoding& slot, int id, const Pose& frame, const std::deque<Pose>& history,
               const std::vector<Route>& routes) {
  slot.valid = true;
  slot.vehicle_id = id;
  for (std::size_t j = 0; j < kHistorySteps; ++j) {
    slot.history[j] = to_ego_frame(frame, history[j]);
  }
  for (std::size_t r = 0; r < kNumRoutes; ++r) {
    for (std::size_t k = 0; k < kRouteWaypoints; ++k) {
      slot.routes[r][k] = to_ego_frame(frame, routes[r].waypoints[k]);
    }
  }
}

VectorState encode_with_routes(const World& world, const std::vector<Route>& ego_rts) {
  VectorState s;
  s.ego_world = world.ego;
  const RoadNetwork& net = world.scenario->network;
  fill_slot(s.slots[0], 0, world.ego, world.ego_history, ego_rts);
  const auto ids = closest_vehicles(world);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto it = std::find_if(world.traffic.begin(), world.traffic.end(),
                                 [&](const TrafficVehicle& v) { return v.id == ids[i]; });
    const auto routes = routes_or_straight(net, it->pose, World::path_end(*it));
    fill_slot(s.slots[i + 1], it->id, world.ego, it->history, routes);
  }
  s.drivable = rasterize_drivable(net, world.ego);
  return s;
}

}  // namespace

std::vector<int> closest_vehicles(const World& world, std::size_t count) {
  std::vector<std::pair<double, int>> d;
  d.reserve(world.traffic.size());
  for (const TrafficVehicle& v : world.traffic) d.emplace_back(distance(v.pose, world.ego), v.id);
  std::sort(d.begin(), d.end());
  std::vector<int> ids;
  for (std::size_t i = 0; i < std::min(count, d.size()); ++i) ids.push_back(d[i].second);
  return ids;
}

std::vector<Route> ego_routes(const World& world) {
  return routes_or_straight(world.scenario->network, world.ego, world.scenario->task_goal);
}

VectorState encode_state(const World& world) {
  return encode_with_routes(world, ego_routes(world));
}

SubgoalSet subgoals_from_routes(const std::vector<Route>& routes, const Pose& ego,
                                const Pose& task_goal) {
  SubgoalSet set;
  std::array<bool, kNumSubgoals> available{};
  std::array<Pose, kNumSubgoals> world_goals{};
  for (std::size_t r = 0; r < kNumRoutes; ++r) {
    for (std::size_t i = 0; i < kSubgoalsPerRoute; ++i) {
      const auto k = static_cast<std::size_t>(std::lround(kSubgoalSpacing * (i + 1) / kWaypointSpacing));
      const std::size_t slot = r * kSubgoalsPerRoute + i;
      world_goals[slot] = routes[r].waypoints[k];
      available[slot] = k < routes[r].valid_waypoints;
      set.waypoint_index[slot] = k;
    }
  }
  std::size_t closest = kNumSubgoals;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < kNumSubgoals; ++i) {
    if (!available[i]) continue;
    const double d = distance(world_goals[i], task_goal);
    if (d < best) {
      best = d;
      closest = i;
    }
  }
  for (std::size_t i = 0; i < kNumSubgoals; ++i) {
    if (!available[i] && closest < kNumSubgoals) {
      world_goals[i] = world_goals[closest];
      set.padded[i] = true;
      set.waypoint_index[i] = 0;
    }
    Pose g = to_ego_frame(ego, world_goals[i]);
    g.speed.reset();
    set.goals[i] = g;
  }
  return set;
}

SubgoalSet sample_subgoals(const World& world) {
  if (!is_on_road(world.scenario->network, OrientedBox(world.ego, world.config.vehicle_dims))) {
    throw OffRoadError("ego is off the road; no subgoals");
  }
  return subgoals_from_routes(ego_routes(world), world.ego, world.scenario->task_goal);
}

Observation observe(const World& world) {
  Observation obs;
  obs.ego_routes = ego_routes(world);
  obs.state = encode_with_routes(world, obs.ego_routes);
  obs.subgoals_available =
      is_on_road(world.scenario->network, OrientedBox(world.ego, world.config.vehicle_dims));
  obs.subgoals = subgoals_from_routes(obs.ego_routes, world.ego, world.scenario->task_goal);
  return obs;
}

}  // namespace gcnav

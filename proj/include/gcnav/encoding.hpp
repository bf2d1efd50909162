#pragma once

#include <array>
#include <vector>

#include "gcnav/geometry.hpp"
#include "gcnav/roadnet.hpp"
#include "gcnav/sim.hpp"

namespace gcnav {

inline constexpr std::size_t kSurrounding = 5;                 // N_s
inline constexpr std::size_t kVehicleSlots = kSurrounding + 1;  // ego in slot 0
inline constexpr std::size_t kNumSubgoals = 12;                 // N
inline constexpr double kSubgoalSpacing = 5.0;
inline constexpr std::size_t kSubgoalsPerRoute = kNumSubgoals / kNumRoutes;

/// v^i_j = [p_{j-1}, p_j, i]
struct TrajVector {
  Pose prev;
  Pose curr;
  int vehicle_id = 0;
};

/// v^j_k = [p_k, p_{k+1}, i, j]
struct RouteVector {
  Pose curr;
  Pose next;
  int vehicle_id = 0;
  int route_id = 0;
};

/// One vehicle's share of the state, already in the ego frame. Vectors are
/// materialized on demand from the stored pose sequences.
struct SlotEncoding {
  bool valid = false;
  int vehicle_id = -1;
  std::array<Pose, kHistorySteps> history{};  // oldest first, with speed
  std::array<std::array<Pose, kRouteWaypoints>, kNumRoutes> routes{};

  /// j in [0, T_h); the first vector pairs the oldest pose with itself.
  TrajVector traj_vector(std::size_t j) const;
  /// r in [0, N_r), k in [0, N_p - 1).
  RouteVector route_vector(std::size_t r, std::size_t k) const;
};

/// Environment state s: ego + N_s surrounding slots (zero-filled when absent)
/// and the ego-centred drivable raster.
struct VectorState {
  std::array<SlotEncoding, kVehicleSlots> slots{};
  BevRaster drivable;
  Pose ego_world;  // frame origin, world coordinates

  const SlotEncoding& ego() const { return slots[0]; }
};

struct SubgoalSet {
  std::array<Pose, kNumSubgoals> goals{};  // ego frame, no speed
  std::array<bool, kNumSubgoals> padded{};
  /// Waypoint index along the source route for sampled entries (0 when padded).
  std::array<std::size_t, kNumSubgoals> waypoint_index{};
};

/// The ego's routes in world coordinates plus the encoded state built from them.
struct Observation {
  VectorState state;
  std::vector<Route> ego_routes;
  SubgoalSet subgoals;
  bool subgoals_available = false;  // false when the ego is off the road
};

/// Ids of the N_s traffic vehicles closest to the ego, nearest first.
std::vector<int> closest_vehicles(const World& world, std::size_t count = kSurrounding);

VectorState encode_state(const World& world);

/// 4 subgoals per route at 5, 10, 15, 20 m; unavailable slots are filled with
/// the sampled subgoal closest to the task goal. Throws OffRoadError when the
/// ego is off the road.
SubgoalSet sample_subgoals(const World& world);

/// Subgoal sampling from precomputed world-frame routes.
SubgoalSet subgoals_from_routes(const std::vector<Route>& routes, const Pose& ego,
                                const Pose& task_goal);

/// Encodes the state and samples subgoals with a single route computation.
Observation observe(const World& world);

/// Ego routes, falling back to a straight route when no lane is near.
std::vector<Route> ego_routes(const World& world);

}  // namespace gcnav

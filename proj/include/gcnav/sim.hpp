#pragma once

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <memory>
#include <vector>

#include "gcnav/geometry.hpp"
#include "gcnav/rng.hpp"
#include "gcnav/roadnet.hpp"

namespace gcnav {

inline constexpr double kStepSeconds = 0.1;
inline constexpr std::size_t kHistorySteps = 10;  // T_h

/// Pose displacement applied in the ego frame over one 0.1 s step.
struct ActionDelta {
  double dx = 0.0;
  double dy = 0.0;
  double dheading = 0.0;
  friend bool operator==(const ActionDelta&, const ActionDelta&) = default;
};

struct SimConfig {
  BoxDims vehicle_dims{};
  std::size_t max_steps = 600;
  double goal_radius = 2.0;
  double goal_heading_tolerance = kPi / 4.0;
  /// Car-following: speed = clamp(nominal * (gap - stop_gap) / slow_range, 0, nominal).
  double stop_gap = 4.0;
  double slow_range = 10.0;
  double entry_clearance = 10.0;
};

/// Scripted surrounding vehicle following a fixed lane path.
struct TrafficVehicle {
  int id = 0;
  std::vector<int> lanes;
  LanePath path;
  double s = 0.0;  // arc length along the path
  double nominal_speed = 0.0;
  Pose pose;       // with speed
  std::deque<Pose> history;  // oldest first, exactly kHistorySteps entries
};

struct World {
  std::shared_ptr<const Scenario> scenario;
  SimConfig config;
  Pose ego;  // with speed
  std::deque<Pose> ego_history;
  std::vector<TrafficVehicle> traffic;
  std::size_t step_count = 0;
  bool terminated = false;
  int next_vehicle_id = 1;
  Rng spawner;

  /// Final pose of a traffic vehicle's path, used as its routing target.
  static Pose path_end(const TrafficVehicle& v);
};

struct StepEvents {
  bool collision = false;
  bool off_road = false;
  bool goal_reached = false;
  bool timeout = false;
  bool any() const { return collision || off_road || goal_reached || timeout; }
};

struct VehicleSnapshot {
  int id = 0;
  Pose pose;
};

struct StepOutcome {
  StepEvents events;
  std::size_t step = 0;
  std::vector<VehicleSnapshot> vehicles;  // ego (id 0) first
};

/// Starts an episode: ego at spawn with zero speed, traffic spawner seeded with
/// `flow_seed` and warmed up for `traffic.warmup_steps` with the ego parked.
World reset(std::shared_ptr<const Scenario> scenario, std::uint64_t flow_seed,
            const SimConfig& config = {});

/// Advances the world by one 0.1 s step. Throws EpisodeError once terminated.
StepOutcome step(World& world, const ActionDelta& action);

/// Next pose of `vehicle` under gap-based car following on its own path.
Pose traffic_policy(const TrafficVehicle& vehicle, const World& world);

/// Spawn draws for one entry lane at one step. The spawner consumes exactly
/// three uniforms per entry lane per step so the stream is state-independent.
struct SpawnDraw {
  double trigger = 0.0;
  double speed = 0.0;
  double route = 0.0;
};
SpawnDraw draw_spawn(Rng& rng);

/// Applies an ego-frame displacement to a pose and sets speed = |d| / dt.
Pose apply_action(const Pose& pose, const ActionDelta& action);

struct TrajectoryRecord {
  std::size_t step = 0;
  int vehicle_id = 0;
  Pose pose;
};

std::vector<TrajectoryRecord> snapshot_records(const World& world);
/// One JSON object per line: {"t","id","x","y","heading","speed"}.
void write_trajectory_log(std::ostream& os, const std::vector<TrajectoryRecord>& records);

}  // namespace gcnav

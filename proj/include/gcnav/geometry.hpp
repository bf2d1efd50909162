#pragma once

#include <array>
#include <numbers>
#include <optional>
#include <span>

namespace gcnav {

inline constexpr double kPi = std::numbers::pi;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(Vec2, Vec2) = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
double norm(Vec2 v);

/// Wraps an angle into (-pi, pi].
double normalize_angle(double radians);

/// |normalize(a - b)|, in [0, pi].
double angle_distance(double a, double b);

/// Planar pose. History poses carry a speed; route waypoints do not.
struct Pose {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
  std::optional<double> speed;

  Vec2 position() const { return {x, y}; }
  friend bool operator==(const Pose&, const Pose&) = default;
};

double distance(const Pose& a, const Pose& b);

/// Expresses `p` in the frame centred at `ego` with x along ego's heading.
Pose to_ego_frame(const Pose& ego, const Pose& p);

/// Inverse of to_ego_frame.
Pose from_ego_frame(const Pose& ego, const Pose& p);

struct BoxDims {
  double length = 4.0;
  double width = 1.8;
};

struct OrientedBox {
  Pose center;
  double length = 4.0;
  double width = 1.8;

  OrientedBox() = default;
  OrientedBox(const Pose& c, double l, double w);
  OrientedBox(const Pose& c, BoxDims dims) : OrientedBox(c, dims.length, dims.width) {}

  /// Counter-clockwise, starting at the rear-right corner.
  std::array<Vec2, 4> corners() const;
  double area() const { return length * width; }
};

/// Closed-rectangle overlap via the separating axis theorem. Touching counts.
bool sat_overlap(const OrientedBox& a, const OrientedBox& b);

/// True iff the footprints overlap at any shared timestep index.
/// Throws PredictionError when the trajectories differ in length.
bool trajectories_collide(std::span<const Pose> ego_traj, std::span<const Pose> other_traj,
                          BoxDims ego_dims, BoxDims other_dims);

}  // namespace gcnav

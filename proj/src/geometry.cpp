#include "gcnav/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "gcnav/errors.hpp"

namespace gcnav {

double norm(Vec2 v) { return std::hypot(v.x, v.y); }

double normalize_angle(double radians) {
  double h = std::fmod(radians + kPi, 2.0 * kPi);
  if (h <= 0.0) h += 2.0 * kPi;
  return h - kPi;
}

double angle_distance(double a, double b) { return std::abs(normalize_angle(a - b)); }

double distance(const Pose& a, const Pose& b) { return std::hypot(a.x - b.x, a.y - b.y); }

Pose to_ego_frame(const Pose& ego, const Pose& p) {
  const double c = std::cos(ego.heading);
  const double s = std::sin(ego.heading);
  const double dx = p.x - ego.x;
  const double dy = p.y - ego.y;
  return Pose{c * dx + s * dy, -s * dx + c * dy, normalize_angle(p.heading - ego.heading),
              p.speed};
}

Pose from_ego_frame(const Pose& ego, const Pose& p) {
  const double c = std::cos(ego.heading);
  const double s = std::sin(ego.heading);
  return Pose{ego.x + c * p.x - s * p.y, ego.y + s * p.x + c * p.y,
              normalize_angle(p.heading + ego.heading), p.speed};
}

OrientedBox::OrientedBox(const Pose& c, double l, double w) : center(c), length(l), width(w) {
  if (!(l > 0.0) || !(w > 0.0)) throw ShapeError("box dimensions must be positive");
  center.speed.reset();
}

std::array<Vec2, 4> OrientedBox::corners() const {
  const double c = std::cos(center.heading);
  const double s = std::sin(center.heading);
  const Vec2 fwd{c * 0.5 * length, s * 0.5 * length};
  const Vec2 left{-s * 0.5 * width, c * 0.5 * width};
  const Vec2 o = center.position();
  return {o - fwd - left, o + fwd - left, o + fwd + left, o - fwd + left};
}

namespace {

void project(const std::array<Vec2, 4>& pts, Vec2 axis, double& lo, double& hi) {
  lo = std::numeric_limits<double>::infinity();
  hi = -lo;
  for (const Vec2& p : pts) {
    const double d = dot(p, axis);
    lo = std::min(lo, d);
    hi = std::max(hi, d);
  }
}

}  // namespace

bool sat_overlap(const OrientedBox& a, const OrientedBox& b) {
  const auto ca = a.corners();
  const auto cb = b.corners();
  const std::array<Vec2, 4> axes{
      Vec2{std::cos(a.center.heading), std::sin(a.center.heading)},
      Vec2{-std::sin(a.center.heading), std::cos(a.center.heading)},
      Vec2{std::cos(b.center.heading), std::sin(b.center.heading)},
      Vec2{-std::sin(b.center.heading), std::cos(b.center.heading)},
  };
  for (const Vec2& axis : axes) {
    double a_lo, a_hi, b_lo, b_hi;
    project(ca, axis, a_lo, a_hi);
    project(cb, axis, b_lo, b_hi);
    if (a_hi < b_lo || b_hi < a_lo) return false;
  }
  return true;
}

bool trajectories_collide(std::span<const Pose> ego_traj, std::span<const Pose> other_traj,
                          BoxDims ego_dims, BoxDims other_dims) {
  if (ego_traj.size() != other_traj.size()) {
    throw PredictionError("trajectory length mismatch: " + std::to_string(ego_traj.size()) +
                          " vs " + std::to_string(other_traj.size()));
  }
  for (std::size_t t = 0; t < ego_traj.size(); ++t) {
    if (sat_overlap(OrientedBox(ego_traj[t], ego_dims), OrientedBox(other_traj[t], other_dims))) {
      return true;
    }
  }
  return false;
}

}  // namespace gcnav

#include "gcnav/gccp.hpp"

#include <ostream>

#include <json.hpp>

#include "gcnav/errors.hpp"

namespace gcnav {

std::string_view to_string(GccpMode mode) {
  switch (mode) {
    case GccpMode::kLearned: return "learned";
    case GccpMode::kCv: return "cv";
    case GccpMode::kDisabled: return "disabled";
  }
  return "?";
}

GccpMode gccp_mode_from_string(std::string_view name) {
  if (name == "learned") return GccpMode::kLearned;
  if (name == "cv") return GccpMode::kCv;
  if (name == "disabled") return GccpMode::kDisabled;
  throw ConfigError("unknown gccp mode '" + std::string(name) + "'");
}

std::size_t RiskMask::unsafe_count() const {
  std::size_t n = 0;
  for (double e : entries) n += (e == kUnsafeMaskValue);
  return n;
}

GccpResult compute_mask(const VectorState& state, const SubgoalSet& subgoals,
                        const Predictor& predictor, GccpMode mode, BoxDims dims) {
  GccpResult result;
  if (mode == GccpMode::kDisabled) return result;
  result.predictions = predictor.predict_all(state, subgoals.goals);
  if (mode == GccpMode::kCv) {
    const PredictedTrajectories cv = cv_predict(state);
    for (PredictedTrajectories& p : result.predictions) {
      for (std::size_t i = 1; i < kVehicleSlots; ++i) {
        p.poses[i] = cv.poses[i];
        p.valid[i] = cv.valid[i];
      }
    }
  }
  for (std::size_t k = 0; k < kNumSubgoals; ++k) {
    const PredictedTrajectories& p = result.predictions[k];
    for (std::size_t i = 1; i < kVehicleSlots; ++i) {
      if (p.valid[i] && trajectories_collide(p.poses[0], p.poses[i], dims, dims)) {
        result.mask.entries[k] = kUnsafeMaskValue;
        break;
      }
    }
  }
  return result;
}

RiskMask consumable_mask(const RiskMask& mask, bool* fell_back) {
  const bool all = mask.all_unsafe();
  if (fell_back) *fell_back = all;
  return all ? RiskMask{} : mask;
}

nlohmann::ordered_json gccp_debug_record(const SubgoalSet& subgoals, const GccpResult& result,
                                         std::size_t k) {
  nlohmann::ordered_json j;
  j["subgoal_index"] = k;
  const Pose& g = subgoals.goals[k];
  j["subgoal"] = {g.x, g.y, g.heading};
  j["padded"] = subgoals.padded[k];
  j["mask"] = result.mask.entries[k];
  nlohmann::ordered_json vehicles = nlohmann::ordered_json::array();
  if (k < result.predictions.size()) {
    const PredictedTrajectories& p = result.predictions[k];
    for (std::size_t i = 0; i < kVehicleSlots; ++i) {
      if (!p.valid[i]) continue;
      nlohmann::ordered_json traj = nlohmann::ordered_json::array();
      for (const Pose& q : p.poses[i]) traj.push_back({q.x, q.y, q.heading});
      vehicles.push_back({{"slot", i}, {"trajectory", traj}});
    }
  }
  j["predictions"] = vehicles;
  return j;
}

void write_gccp_debug(std::ostream& os, const SubgoalSet& subgoals, const GccpResult& result) {
  for (std::size_t k = 0; k < kNumSubgoals; ++k) os << gccp_debug_record(subgoals, result, k).dump() << '\n';
}

}  // namespace gcnav

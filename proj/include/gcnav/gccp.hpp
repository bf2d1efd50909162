#pragma once

#include <array>
#include <iosfwd>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "gcnav/predictor.hpp"

namespace gcnav {

inline constexpr double kUnsafeMaskValue = -1e8;

enum class GccpMode : std::uint8_t { kLearned, kCv, kDisabled };

std::string_view to_string(GccpMode mode);
GccpMode gccp_mode_from_string(std::string_view name);

struct RiskMask {
  std::array<double, kNumSubgoals> entries{};

  std::size_t unsafe_count() const;
  bool all_unsafe() const { return unsafe_count() == kNumSubgoals; }
  bool any_unsafe() const { return unsafe_count() > 0; }
};

struct GccpResult {
  RiskMask mask;
  /// Per-subgoal predictions; empty when disabled.
  std::vector<PredictedTrajectories> predictions;
};

/// Entry i is -1e8 iff the predicted ego future collides with any valid
/// surrounding prediction under subgoal i.
GccpResult compute_mask(const VectorState& state, const SubgoalSet& subgoals,
                        const Predictor& predictor, GccpMode mode, BoxDims dims = {});

/// The mask handed to the decision-maker: all-unsafe collapses to zeros.
RiskMask consumable_mask(const RiskMask& mask, bool* fell_back = nullptr);

/// Debug record for subgoal k: index, subgoal, mask value, predicted trajectories.
nlohmann::ordered_json gccp_debug_record(const SubgoalSet& subgoals, const GccpResult& result,
                                         std::size_t k);

/// One JSON line per subgoal: index, subgoal, mask value, predicted trajectories.
void write_gccp_debug(std::ostream& os, const SubgoalSet& subgoals, const GccpResult& result);

}  // namespace gcnav

#pragma once

#include <array>
#include <span>
#include <string_view>
#include <vector>

#include "gcnav/gccp.hpp"
#include "gcnav/scene_encoder.hpp"
#include "gcnav/sim.hpp"

namespace gcnav {

inline constexpr std::size_t kNumActions = 6;  // N_a

/// Motion-planner actions: per-step ego-frame deltas.
struct ActionTable {
  std::array<ActionDelta, kNumActions> deltas = {{
      {0.2, 0.0, 0.0},     // slow_down
      {0.5, 0.0, 0.0},     // keep
      {0.5, 0.0, 0.05},    // slow_left
      {0.5, 0.0, -0.05},   // slow_right
      {0.45, 0.0, 0.15},   // quick_left
      {0.45, 0.0, -0.15},  // quick_right
  }};

  static std::string_view name(std::size_t action);
  static std::size_t index_of(std::string_view name);
};

inline constexpr double kSubgoalReachDistance = 1.0;
inline constexpr double kSubgoalReachHeading = kPi / 6.0;

/// Both poses in the same frame.
bool subgoal_reached(const Pose& ego, const Pose& subgoal);

struct DecisionRewards {
  double goal = 3.0;
  double subgoal = 0.5;
  double near = -0.5;
  double distance_coef = 0.05;
};

struct PlannerRewards {
  double time = -0.05;
  double arrival = 1.0;
  double collision = -1.0;
  double off_road = -1.0;
  double distance_coef = 0.05;
  double heading_coef = 0.5;
};

/// d_subgoal is the ego-to-subgoal distance when the subgoal was selected.
double decision_reward(bool goal_reached, bool subgoal_reached, double d_subgoal,
                       const DecisionRewards& r = {});

/// d/h are ego-to-subgoal distance and absolute heading difference before
/// and after the step.
double planner_reward(const StepEvents& events, bool arrived, double d_prev, double d_curr,
                      double h_prev, double h_curr, const PlannerRewards& r = {});

struct PolicyConfig {
  EncoderConfig encoder;
};

/// s^d = (s, g_task) plus the candidate subgoals; all poses in the ego frame.
struct DecisionInput {
  std::shared_ptr<const VectorState> state;
  Pose task_goal;
  SubgoalSet subgoals;
};

/// s^m = (s, g) with the subgoal in the ego frame.
struct PlannerInput {
  std::shared_ptr<const VectorState> state;
  Pose subgoal;
};

class DecisionMaker {
 public:
  DecisionMaker() = default;
  DecisionMaker(const PolicyConfig& cfg, std::uint64_t seed);

  /// [B, N] logits.
  dc::Tensor logits(std::span<const DecisionInput> batch) const;
  /// log softmax(l + m) -> [B, N].
  dc::Tensor log_probs(std::span<const DecisionInput> batch, std::span<const RiskMask> masks) const;
  std::array<double, kNumSubgoals> probabilities(const DecisionInput& in, const RiskMask& mask) const;
  /// [B] state values; the mask is not an input.
  dc::Tensor values(std::span<const DecisionInput> batch) const;

  dc::ParamStore& policy_params() { return policy_ps_; }
  dc::ParamStore& value_params() { return value_ps_; }
  const dc::ParamStore& policy_params() const { return policy_ps_; }
  const dc::ParamStore& value_params() const { return value_ps_; }

 private:
  struct Features {
    dc::Tensor state;     // [B, 5L]
    dc::Tensor subgoals;  // [B, N, L]
  };
  static Features features(const dc::ParamStore& ps, const SceneEncoder& enc, const dc::Mlp& goal,
                           const dc::Mlp& subgoal, std::span<const DecisionInput> batch);

  std::size_t embed_ = 0;
  dc::ParamStore policy_ps_;
  dc::ParamStore value_ps_;
  SceneEncoder policy_encoder_;
  dc::Mlp policy_goal_;
  dc::Mlp policy_subgoal_;
  dc::Mlp policy_head_;
  SceneEncoder value_encoder_;
  dc::Mlp value_goal_;
  dc::Mlp value_subgoal_;
  dc::Mlp value_hidden_;
  dc::Mlp value_head_;
};

class MotionPlanner {
 public:
  MotionPlanner() = default;
  MotionPlanner(const PolicyConfig& cfg, std::uint64_t seed);

  dc::Tensor logits(std::span<const PlannerInput> batch) const;  // [B, N_a]
  dc::Tensor log_probs(std::span<const PlannerInput> batch) const;
  std::array<double, kNumActions> probabilities(const PlannerInput& in) const;
  dc::Tensor values(std::span<const PlannerInput> batch) const;  // [B]

  dc::ParamStore& policy_params() { return policy_ps_; }
  dc::ParamStore& value_params() { return value_ps_; }
  const dc::ParamStore& policy_params() const { return policy_ps_; }
  const dc::ParamStore& value_params() const { return value_ps_; }

 private:
  static dc::Tensor feature(const dc::ParamStore& ps, const SceneEncoder& enc, const dc::Mlp& subgoal,
                            const dc::LayerNorm& subgoal_norm, std::span<const PlannerInput> batch);

  dc::ParamStore policy_ps_;
  dc::ParamStore value_ps_;
  SceneEncoder policy_encoder_;
  dc::Mlp policy_subgoal_;
  // Keeps the subgoal embedding on the scale of the normalized scene feature,
  // so the action choice does not collapse to ignoring the subgoal.
  dc::LayerNorm policy_subgoal_norm_;
  dc::Mlp policy_head_;
  SceneEncoder value_encoder_;
  dc::Mlp value_subgoal_;
  dc::LayerNorm value_subgoal_norm_;
  dc::Mlp value_head_;
};

/// l + m^c for a [B, N] logit batch, one mask per row.
dc::Tensor apply_mask(const dc::Tensor& logits, std::span<const RiskMask> masks);

/// softmax(l + m^c) for a [B, N] logit batch.
dc::Tensor masked_probabilities(const dc::Tensor& logits, std::span<const RiskMask> masks);

/// Index of the largest probability (first on ties).
std::size_t argmax(std::span<const double> probs);

}  // namespace gcnav

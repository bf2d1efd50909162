#include "gcnav/agents.hpp"

#include <algorithm>
#include <cmath>

#include "gcnav/errors.hpp"

namespace gcnav {

using dc::Tensor;

namespace {

constexpr std::array<std::string_view, kNumActions> kActionNames = {
    "slow_down", "keep", "slow_left", "slow_right", "quick_left", "quick_right"};

std::vector<const VectorState*> state_ptrs(auto batch) {
  std::vector<const VectorState*> out;
  for (const auto& b : batch) out.push_back(b.state.get());
  return out;
}

template <std::size_t N>
std::array<double, N> row_exp(const Tensor& log_probs) {
  std::array<double, N> p{};
  for (std::size_t i = 0; i < N; ++i) p[i] = std::exp(log_probs.data()[i]);
  return p;
}

}  // namespace

std::string_view ActionTable::name(std::size_t action) { return kActionNames.at(action); }

std::size_t ActionTable::index_of(std::string_view name) {
  for (std::size_t i = 0; i < kNumActions; ++i) {
    if (kActionNames[i] == name) return i;
  }
  throw ConfigError("unknown action '" + std::string(name) + "'");
}

bool subgoal_reached(const Pose& ego, const Pose& subgoal) {
  return distance(ego, subgoal) < kSubgoalReachDistance &&
         angle_distance(ego.heading, subgoal.heading) < kSubgoalReachHeading;
}

double decision_reward(bool goal_reached, bool subgoal_reached, double d_subgoal,
                       const DecisionRewards& r) {
  const double goal = goal_reached ? r.goal : 0.0;
  const double sub = subgoal_reached ? r.subgoal : 0.0;
  const double dist = r.near + r.distance_coef * d_subgoal;
  return goal + sub + dist;
}

double planner_reward(const StepEvents& events, bool arrived, double d_prev, double d_curr,
                      double h_prev, double h_curr, const PlannerRewards& r) {
  double total = r.time;
  if (arrived) total += r.arrival;
  if (events.collision) total += r.collision;
  if (events.off_road) total += r.off_road;
  total += r.distance_coef * (d_prev - d_curr);
  total += r.heading_coef * (h_prev - h_curr);
  return total;
}

Tensor apply_mask(const Tensor& logits, std::span<const RiskMask> masks) {
  if (logits.rank() != 2 || logits.dim(1) != kNumSubgoals || masks.size() != logits.dim(0)) {
    throw ShapeError("mask batch does not match logits " + dc::to_string(logits.shape()));
  }
  std::vector<double> m;
  for (const RiskMask& mask : masks) m.insert(m.end(), mask.entries.begin(), mask.entries.end());
  return dc::add(logits, Tensor::constant(logits.shape(), std::move(m)));
}

Tensor masked_probabilities(const Tensor& logits, std::span<const RiskMask> masks) {
  return dc::softmax(apply_mask(logits, masks), -1);
}

std::size_t argmax(std::span<const double> probs) {
  return static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

DecisionMaker::DecisionMaker(const PolicyConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t L = cfg.encoder.embed;
  const std::size_t H = cfg.encoder.hidden;
  embed_ = L;
  policy_encoder_ = SceneEncoder::create(policy_ps_, "encoder", cfg.encoder, rng);
  policy_goal_ = dc::Mlp::create(policy_ps_, "task_goal", {kPoseFeatures, L, L}, rng);
  policy_subgoal_ = dc::Mlp::create(policy_ps_, "subgoal", {kPoseFeatures, L, L}, rng);
  policy_head_ = dc::Mlp::create(policy_ps_, "head", {6 * L, H, H, 1}, rng);
  value_encoder_ = SceneEncoder::create(value_ps_, "encoder", cfg.encoder, rng);
  value_goal_ = dc::Mlp::create(value_ps_, "task_goal", {kPoseFeatures, L, L}, rng);
  value_subgoal_ = dc::Mlp::create(value_ps_, "subgoal", {kPoseFeatures, L, L}, rng);
  value_hidden_ = dc::Mlp::create(value_ps_, "per_subgoal", {6 * L, H, L}, rng);
  value_head_ = dc::Mlp::create(value_ps_, "head", {kNumSubgoals * L, H, 1}, rng);
}

DecisionMaker::Features DecisionMaker::features(const dc::ParamStore& ps, const SceneEncoder& enc,
                                                const dc::Mlp& goal, const dc::Mlp& subgoal,
                                                std::span<const DecisionInput> batch) {
  const auto ptrs = state_ptrs(batch);
  const SceneInputs in = build_inputs(ptrs, 1);
  const auto out = enc(ps, in);
  std::vector<Pose> goals;
  std::vector<Pose> subs;
  for (const DecisionInput& d : batch) {
    goals.push_back(d.task_goal);
    subs.insert(subs.end(), d.subgoals.goals.begin(), d.subgoals.goals.end());
  }
  Features f;
  f.state = dc::concat({SceneEncoder::ego_feature(out), goal(ps, pose_features(goals))}, -1);
  const Tensor sf = subgoal(ps, pose_features(subs));
  f.subgoals = dc::reshape(sf, {batch.size(), kNumSubgoals, sf.dim(-1)});
  return f;
}

Tensor DecisionMaker::logits(std::span<const DecisionInput> batch) const {
  const Features f = features(policy_ps_, policy_encoder_, policy_goal_, policy_subgoal_, batch);
  const Tensor joint = dc::concat({dc::expand(f.state, 1, kNumSubgoals), f.subgoals}, -1);
  return dc::reshape(policy_head_(policy_ps_, joint), {batch.size(), kNumSubgoals});
}

Tensor DecisionMaker::log_probs(std::span<const DecisionInput> batch,
                                std::span<const RiskMask> masks) const {
  return dc::log_softmax(apply_mask(logits(batch), masks), -1);
}

std::array<double, kNumSubgoals> DecisionMaker::probabilities(const DecisionInput& in,
                                                              const RiskMask& mask) const {
  const Tensor p = masked_probabilities(logits({&in, 1}), {&mask, 1});
  std::array<double, kNumSubgoals> out{};
  std::copy(p.data().begin(), p.data().end(), out.begin());
  return out;
}

Tensor DecisionMaker::values(std::span<const DecisionInput> batch) const {
  const Features f = features(value_ps_, value_encoder_, value_goal_, value_subgoal_, batch);
  const Tensor joint = dc::concat({dc::expand(f.state, 1, kNumSubgoals), f.subgoals}, -1);
  const Tensor hidden = value_hidden_(value_ps_, joint);  // [B, N, L]
  const Tensor flat = dc::reshape(hidden, {batch.size(), kNumSubgoals * embed_});
  return dc::reshape(value_head_(value_ps_, flat), {batch.size()});
}

MotionPlanner::MotionPlanner(const PolicyConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t L = cfg.encoder.embed;
  const std::size_t H = cfg.encoder.hidden;
  policy_encoder_ = SceneEncoder::create(policy_ps_, "encoder", cfg.encoder, rng);
  policy_subgoal_ = dc::Mlp::create(policy_ps_, "subgoal", {kPoseFeatures, L, L}, rng);
  policy_subgoal_norm_ = dc::LayerNorm::create(policy_ps_, "subgoal_norm", L);
  policy_head_ = dc::Mlp::create(policy_ps_, "head", {5 * L, H, H, kNumActions}, rng);
  value_encoder_ = SceneEncoder::create(value_ps_, "encoder", cfg.encoder, rng);
  value_subgoal_ = dc::Mlp::create(value_ps_, "subgoal", {kPoseFeatures, L, L}, rng);
  value_subgoal_norm_ = dc::LayerNorm::create(value_ps_, "subgoal_norm", L);
  value_head_ = dc::Mlp::create(value_ps_, "head", {5 * L, H, H, 1}, rng);
}

Tensor MotionPlanner::feature(const dc::ParamStore& ps, const SceneEncoder& enc, const dc::Mlp& subgoal,
                              const dc::LayerNorm& subgoal_norm, std::span<const PlannerInput> batch) {
  const auto ptrs = state_ptrs(batch);
  const SceneInputs in = build_inputs(ptrs, 1);
  const auto out = enc(ps, in);
  std::vector<Pose> subs;
  for (const PlannerInput& p : batch) subs.push_back(p.subgoal);
  const Tensor sf = subgoal_norm(ps, subgoal(ps, pose_features(subs)));
  return dc::concat({SceneEncoder::ego_feature(out), sf}, -1);
}

Tensor MotionPlanner::logits(std::span<const PlannerInput> batch) const {
  return policy_head_(
      policy_ps_, feature(policy_ps_, policy_encoder_, policy_subgoal_, policy_subgoal_norm_, batch));
}

Tensor MotionPlanner::log_probs(std::span<const PlannerInput> batch) const {
  return dc::log_softmax(logits(batch), -1);
}

std::array<double, kNumActions> MotionPlanner::probabilities(const PlannerInput& in) const {
  return row_exp<kNumActions>(log_probs({&in, 1}));
}

Tensor MotionPlanner::values(std::span<const PlannerInput> batch) const {
  const Tensor v =
      value_head_(value_ps_, feature(value_ps_, value_encoder_, value_subgoal_, value_subgoal_norm_, batch));
  return dc::reshape(v, {batch.size()});
}

}  // namespace gcnav

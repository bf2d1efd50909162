#pragma once

#include <array>
#include <span>
#include <utility>
#include <vector>

#include "gcnav/scene_encoder.hpp"

namespace gcnav {

inline constexpr std::size_t kFutureSteps = 10;  // T_f
inline constexpr double kPredictorLearningRate = 1e-4;

using FutureTrajectory = std::array<Pose, kFutureSteps>;

/// Ego-frame futures for the ego (slot 0) and the surrounding slots.
struct PredictedTrajectories {
  std::array<FutureTrajectory, kVehicleSlots> poses{};
  std::array<bool, kVehicleSlots> valid{};

  const FutureTrajectory& ego() const { return poses[0]; }
};

struct PredictorConfig {
  EncoderConfig encoder;
  bool goal_conditioning = true;
};

/// One replay window: the state at a decision step, the subgoal chosen there,
/// and the observed futures in the same ego frame.
struct PredictionSample {
  std::shared_ptr<const VectorState> state;
  Pose subgoal;  // ego frame
  std::array<FutureTrajectory, kVehicleSlots> future{};
  std::array<bool, kVehicleSlots> future_valid{};
};

class Predictor {
 public:
  Predictor() = default;
  Predictor(const PredictorConfig& cfg, std::uint64_t seed);

  /// [B, 6, T_f, 3] absolute ego-frame (x, y, heading).
  dc::Tensor forward(const SceneInputs& in, std::span<const Pose> subgoals) const;
  /// Subgoal embedding [B, L]; identically zero with goal conditioning off.
  dc::Tensor subgoal_embedding(std::span<const Pose> subgoals) const;

  PredictedTrajectories predict(const VectorState& state, const Pose& subgoal) const;
  /// One prediction per subgoal, sharing the scene encoding. Equal bit-for-bit
  /// to calling predict() per subgoal.
  std::vector<PredictedTrajectories> predict_all(const VectorState& state,
                                                 std::span<const Pose> subgoals) const;

  /// Mean per-vehicle smooth-L1 over valid (sample, vehicle) pairs.
  dc::Tensor loss(std::span<const PredictionSample> batch) const;
  /// loss + backward + Adam at the fixed predictor rate.
  double train_step(std::span<const PredictionSample> batch);

  const PredictorConfig& config() const { return cfg_; }
  void set_goal_conditioning(bool on) { cfg_.goal_conditioning = on; }
  dc::ParamStore& params() { return params_; }
  const dc::ParamStore& params() const { return params_; }

 private:
  dc::Tensor decode(const SceneEncoder::Output& enc, const dc::Tensor& goal_feature,
                    const std::vector<Pose>& current, std::size_t batch) const;
  static PredictedTrajectories unpack(const dc::Tensor& out, std::size_t b,
                                      const SceneInputs& in, std::size_t in_b);

  PredictorConfig cfg_;
  dc::ParamStore params_;
  SceneEncoder encoder_;
  dc::Mlp subgoal_mlp_;
  dc::Mlp decoder_;
};

/// Constant-velocity extrapolation of every valid slot along its heading.
PredictedTrajectories cv_predict(const VectorState& state);

struct DisplacementError {
  double ade = 0.0;
  double fde = 0.0;
};

/// Position-only errors; throws PredictionError on unequal horizons.
DisplacementError ade_fde(std::span<const Pose> pred, std::span<const Pose> truth);

/// Mean ADE/FDE over every valid vehicle of every sample.
DisplacementError evaluate_predictor(const Predictor& predictor,
                                     std::span<const PredictionSample> samples);

}  // namespace gcnav

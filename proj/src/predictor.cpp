#include "gcnav/predictor.hpp"

#include <cmath>

#include "gcnav/errors.hpp"

namespace gcnav {

using dc::Tensor;

namespace {

constexpr std::size_t kPoseDims = 3;
constexpr std::size_t kOutputs = kFutureSteps * kPoseDims;
// Decoder outputs are scaled offsets from each vehicle's current pose.
constexpr std::array<double, kPoseDims> kOutputScale = {5.0, 5.0, 1.0};

Tensor output_scale(std::size_t batch) {
  std::vector<double> v(batch * kVehicleSlots * kOutputs);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = kOutputScale[i % kPoseDims];
  return Tensor::constant({batch, kVehicleSlots, kFutureSteps, kPoseDims}, std::move(v));
}

Tensor current_poses(const std::vector<Pose>& current, std::size_t batch) {
  std::vector<double> v(batch * kVehicleSlots * kOutputs);
  for (std::size_t n = 0; n < batch * kVehicleSlots; ++n) {
    for (std::size_t t = 0; t < kFutureSteps; ++t) {
      double* dst = v.data() + (n * kFutureSteps + t) * kPoseDims;
      dst[0] = current[n].x;
      dst[1] = current[n].y;
      dst[2] = current[n].heading;
    }
  }
  return Tensor::constant({batch, kVehicleSlots, kFutureSteps, kPoseDims}, std::move(v));
}

}  // namespace

Predictor::Predictor(const PredictorConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  Rng rng(seed);
  const std::size_t L = cfg.encoder.embed;
  encoder_ = SceneEncoder::create(params_, "encoder", cfg.encoder, rng);
  subgoal_mlp_ = dc::Mlp::create(params_, "subgoal", {kPoseFeatures, L, L}, rng);
  decoder_ = dc::Mlp::create(params_, "decoder", {5 * L, cfg.encoder.hidden, kOutputs}, rng);
}

Tensor Predictor::subgoal_embedding(std::span<const Pose> subgoals) const {
  if (!cfg_.goal_conditioning) return Tensor::zeros({subgoals.size(), cfg_.encoder.embed});
  return subgoal_mlp_(params_, pose_features(subgoals));
}

Tensor Predictor::decode(const SceneEncoder::Output& enc, const Tensor& goal_feature,
                         const std::vector<Pose>& current, std::size_t batch) const {
  const Tensor joint =
      dc::concat({enc.history, enc.interaction, enc.route, dc::expand(enc.drivable, 1, kVehicleSlots),
                  dc::expand(goal_feature, 1, kVehicleSlots)},
                 -1);
  const Tensor raw =
      dc::reshape(decoder_(params_, joint), {batch, kVehicleSlots, kFutureSteps, kPoseDims});
  return dc::add(dc::mul(raw, output_scale(batch)), current_poses(current, batch));
}

Tensor Predictor::forward(const SceneInputs& in, std::span<const Pose> subgoals) const {
  if (subgoals.size() != in.batch) throw ShapeError("predictor: one subgoal per state required");
  if (in.route_vehicles != kVehicleSlots) throw ShapeError("predictor needs every vehicle's routes");
  const auto enc = encoder_(params_, in);
  return decode(enc, subgoal_embedding(subgoals), in.current, in.batch);
}

PredictedTrajectories Predictor::unpack(const Tensor& out, std::size_t b, const SceneInputs& in,
                                        std::size_t in_b) {
  PredictedTrajectories p;
  const auto v = out.data();
  for (std::size_t i = 0; i < kVehicleSlots; ++i) {
    p.valid[i] = in.valid[in_b * kVehicleSlots + i] != 0;
    for (std::size_t t = 0; t < kFutureSteps; ++t) {
      const double* src = v.data() + ((b * kVehicleSlots + i) * kFutureSteps + t) * kPoseDims;
      p.poses[i][t] = Pose{src[0], src[1], src[2], std::nullopt};
    }
  }
  return p;
}

PredictedTrajectories Predictor::predict(const VectorState& state, const Pose& subgoal) const {
  const VectorState* ptr = &state;
  const SceneInputs in = build_inputs({&ptr, 1}, kVehicleSlots);
  return unpack(forward(in, {&subgoal, 1}), 0, in, 0);
}

std::vector<PredictedTrajectories> Predictor::predict_all(const VectorState& state,
                                                          std::span<const Pose> subgoals) const {
  const VectorState* ptr = &state;
  const SceneInputs in = build_inputs({&ptr, 1}, kVehicleSlots);
  const auto enc = encoder_(params_, in);
  const std::size_t n = subgoals.size();
  const std::size_t L = cfg_.encoder.embed;
  auto widen = [&](const Tensor& t, std::size_t rows) {
    return dc::expand(dc::reshape(t, {rows, L}), 0, n);
  };
  SceneEncoder::Output wide;
  wide.history = widen(enc.history, kVehicleSlots);
  wide.interaction = widen(enc.interaction, kVehicleSlots);
  wide.route = widen(enc.route, kVehicleSlots);
  wide.drivable = dc::reshape(widen(enc.drivable, 1), {n, L});
  std::vector<Pose> current;
  for (std::size_t k = 0; k < n; ++k) current.insert(current.end(), in.current.begin(), in.current.end());
  const Tensor out = decode(wide, subgoal_embedding(subgoals), current, n);
  std::vector<PredictedTrajectories> result;
  for (std::size_t k = 0; k < n; ++k) result.push_back(unpack(out, k, in, 0));
  return result;
}

Tensor Predictor::loss(std::span<const PredictionSample> batch) const {
  if (batch.empty()) throw PredictionError("predictor loss on an empty batch");
  const std::size_t B = batch.size();
  std::vector<const VectorState*> states;
  std::vector<Pose> subgoals;
  for (const PredictionSample& s : batch) {
    states.push_back(s.state.get());
    subgoals.push_back(s.subgoal);
  }
  const SceneInputs in = build_inputs(states, kVehicleSlots);
  const Tensor pred = forward(in, subgoals);
  const auto pv = pred.data();

  std::size_t count = 0;
  for (const PredictionSample& s : batch) {
    for (std::size_t i = 0; i < kVehicleSlots; ++i) count += (s.future_valid[i] && s.state->slots[i].valid);
  }
  if (count == 0) throw PredictionError("predictor batch has no valid vehicle futures");

  std::vector<double> target(pred.numel(), 0.0);
  std::vector<double> weight(pred.numel(), 0.0);
  const double w = 1.0 / static_cast<double>(count * kOutputs);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t i = 0; i < kVehicleSlots; ++i) {
      const bool use = batch[b].future_valid[i] && batch[b].state->slots[i].valid;
      for (std::size_t t = 0; t < kFutureSteps; ++t) {
        const std::size_t base = ((b * kVehicleSlots + i) * kFutureSteps + t) * kPoseDims;
        const Pose& truth = batch[b].future[i][t];
        if (use) {
          target[base] = truth.x;
          target[base + 1] = truth.y;
          // Heading target on the prediction's branch of the angle.
          target[base + 2] = pv[base + 2] + normalize_angle(truth.heading - pv[base + 2]);
          for (std::size_t c = 0; c < kPoseDims; ++c) weight[base + c] = w;
        } else {
          for (std::size_t c = 0; c < kPoseDims; ++c) target[base + c] = pv[base + c];
        }
      }
    }
  }
  const Tensor t = Tensor::constant(pred.shape(), std::move(target));
  const Tensor wt = Tensor::constant(pred.shape(), std::move(weight));
  return dc::sum(dc::mul(dc::smooth_l1(pred, t), wt));
}

double Predictor::train_step(std::span<const PredictionSample> batch) {
  const Tensor l = loss(batch);
  dc::backward(l);
  params_.adam_step(kPredictorLearningRate);
  return l.item();
}

PredictedTrajectories cv_predict(const VectorState& state) {
  PredictedTrajectories p;
  for (std::size_t i = 0; i < kVehicleSlots; ++i) {
    const SlotEncoding& slot = state.slots[i];
    p.valid[i] = slot.valid;
    if (!slot.valid) continue;
    const Pose& cur = slot.history[kHistorySteps - 1];
    const double step = cur.speed.value_or(0.0) * kStepSeconds;
    const double c = std::cos(cur.heading);
    const double s = std::sin(cur.heading);
    for (std::size_t t = 0; t < kFutureSteps; ++t) {
      const double d = step * static_cast<double>(t + 1);
      p.poses[i][t] = Pose{cur.x + c * d, cur.y + s * d, cur.heading, std::nullopt};
    }
  }
  return p;
}

DisplacementError ade_fde(std::span<const Pose> pred, std::span<const Pose> truth) {
  if (pred.size() != truth.size() || pred.empty()) {
    throw PredictionError("ade_fde: horizons differ (" + std::to_string(pred.size()) + " vs " +
                          std::to_string(truth.size()) + ")");
  }
  DisplacementError e;
  for (std::size_t t = 0; t < pred.size(); ++t) e.ade += distance(pred[t], truth[t]);
  e.ade /= static_cast<double>(pred.size());
  e.fde = distance(pred.back(), truth.back());
  return e;
}

DisplacementError evaluate_predictor(const Predictor& predictor,
                                     std::span<const PredictionSample> samples) {
  DisplacementError total;
  std::size_t count = 0;
  for (const PredictionSample& s : samples) {
    const PredictedTrajectories p = predictor.predict(*s.state, s.subgoal);
    for (std::size_t i = 0; i < kVehicleSlots; ++i) {
      if (!s.future_valid[i] || !p.valid[i]) continue;
      const DisplacementError e = ade_fde(p.poses[i], s.future[i]);
      total.ade += e.ade;
      total.fde += e.fde;
      ++count;
    }
  }
  if (count > 0) {
    total.ade /= static_cast<double>(count);
    total.fde /= static_cast<double>(count);
  }
  return total;
}

}  // namespace gcnav

#include "gcnav/scene_encoder.hpp"

#include <cmath>

#include "gcnav/errors.hpp"

namespace gcnav {

using dc::Tensor;

namespace {

constexpr std::size_t kRouteVectors = kRouteWaypoints - 1;
constexpr std::size_t kRasterCells = kBevSize * kBevSize;
// Three stride-2 convolutions take 64 -> 8.
constexpr std::size_t kConvOut = kBevSize / 8;

void put_pose(double* dst, const Pose& p) {
  dst[0] = p.x / kPositionScale;
  dst[1] = p.y / kPositionScale;
  dst[2] = std::cos(p.heading);
  dst[3] = std::sin(p.heading);
}

}  // namespace

SceneInputs build_inputs(std::span<const VectorState* const> states, std::size_t route_vehicles) {
  if (route_vehicles != 1 && route_vehicles != kVehicleSlots) {
    throw ShapeError("route_vehicles must be 1 or " + std::to_string(kVehicleSlots));
  }
  SceneInputs in;
  in.batch = states.size();
  in.route_vehicles = route_vehicles;
  const std::size_t B = in.batch;
  in.history.assign(B * kVehicleSlots * kHistorySteps * kHistoryFeatures, 0.0);
  in.routes.assign(B * route_vehicles * kNumRoutes * kRouteVectors * kRouteFeatures, 0.0);
  in.raster.assign(B * kRasterCells, 0.0);
  in.valid.assign(B * kVehicleSlots, 0);
  in.current.assign(B * kVehicleSlots, Pose{});
  for (std::size_t b = 0; b < B; ++b) {
    const VectorState& s = *states[b];
    for (std::size_t i = 0; i < kVehicleSlots; ++i) {
      const SlotEncoding& slot = s.slots[i];
      const std::size_t node = b * kVehicleSlots + i;
      if (!slot.valid) continue;
      in.valid[node] = 1;
      in.current[node] = slot.history[kHistorySteps - 1];
      const double slot_feature = static_cast<double>(i) / kVehicleSlots;
      for (std::size_t j = 0; j < kHistorySteps; ++j) {
        const TrajVector v = slot.traj_vector(j);
        double* dst = in.history.data() + (node * kHistorySteps + j) * kHistoryFeatures;
        put_pose(dst, v.prev);
        dst[4] = v.prev.speed.value_or(0.0) / kSpeedScale;
        put_pose(dst + 5, v.curr);
        dst[9] = v.curr.speed.value_or(0.0) / kSpeedScale;
        dst[10] = slot_feature;
      }
      if (i >= route_vehicles) continue;
      for (std::size_t r = 0; r < kNumRoutes; ++r) {
        for (std::size_t k = 0; k < kRouteVectors; ++k) {
          const RouteVector v = slot.route_vector(r, k);
          const std::size_t row = ((b * route_vehicles + i) * kNumRoutes + r) * kRouteVectors + k;
          double* dst = in.routes.data() + row * kRouteFeatures;
          put_pose(dst, v.curr);
          put_pose(dst + 4, v.next);
          dst[8] = slot_feature;
          dst[9] = static_cast<double>(r) / kNumRoutes;
        }
      }
    }
    for (std::size_t c = 0; c < kRasterCells; ++c) in.raster[b * kRasterCells + c] = s.drivable.grid[c];
  }
  return in;
}

Tensor pose_features(std::span<const Pose> poses) {
  std::vector<double> v(poses.size() * kPoseFeatures);
  for (std::size_t i = 0; i < poses.size(); ++i) put_pose(v.data() + i * kPoseFeatures, poses[i]);
  return Tensor::constant({poses.size(), kPoseFeatures}, std::move(v));
}

SceneEncoder SceneEncoder::create(dc::ParamStore& ps, const std::string& prefix,
                                  const EncoderConfig& cfg, Rng& rng) {
  SceneEncoder e;
  e.cfg_ = cfg;
  const std::size_t L = cfg.embed;
  e.history_in_ = dc::Linear::create(ps, prefix + ".history.in", kHistoryFeatures, L, rng);
  e.history_att_ = dc::MultiHeadAttention::create(ps, prefix + ".history.att", L, cfg.heads, rng);
  e.history_ln_ = dc::LayerNorm::create(ps, prefix + ".history.ln", L);
  e.interaction_att_ =
      dc::MultiHeadAttention::create(ps, prefix + ".interaction.att", L, cfg.heads, rng);
  e.interaction_ln_ = dc::LayerNorm::create(ps, prefix + ".interaction.ln", L);
  e.route_mlp_ = dc::Mlp::create(ps, prefix + ".route.mlp", {kRouteFeatures, L, L}, rng);
  e.route_cross_ = dc::MultiHeadAttention::create(ps, prefix + ".route.cross", L, cfg.heads, rng);
  e.conv1_ = dc::Conv2d::create(ps, prefix + ".cnn.0", 1, cfg.conv1, 3, 2, 1, rng);
  e.conv2_ = dc::Conv2d::create(ps, prefix + ".cnn.1", cfg.conv1, cfg.conv2, 3, 2, 1, rng);
  e.conv3_ = dc::Conv2d::create(ps, prefix + ".cnn.2", cfg.conv2, cfg.conv3, 3, 2, 1, rng);
  e.drivable_out_ =
      dc::Linear::create(ps, prefix + ".cnn.out", cfg.conv3 * kConvOut * kConvOut, L, rng);
  return e;
}

SceneEncoder::Output SceneEncoder::operator()(const dc::ParamStore& ps, const SceneInputs& in) const {
  const std::size_t B = in.batch;
  const std::size_t V = in.route_vehicles;
  const std::size_t L = cfg_.embed;
  if (B == 0) throw ShapeError("scene encoder: empty batch");
  Output out;

  const Tensor tokens = Tensor::constant({B * kVehicleSlots, kHistorySteps, kHistoryFeatures},
                                         in.history);
  const Tensor h0 = dc::relu(history_in_(ps, tokens));
  const Tensor h1 = history_ln_(ps, dc::add(h0, history_att_(ps, h0, h0)));
  out.history = dc::reshape(dc::mean_axis(h1, 1), {B, kVehicleSlots, L});

  const Tensor inter = interaction_att_(ps, out.history, out.history, in.valid);
  out.interaction = interaction_ln_(ps, dc::add(out.history, inter));

  const Tensor rtokens =
      Tensor::constant({B * V * kNumRoutes, kRouteVectors, kRouteFeatures}, in.routes);
  const Tensor route_emb =
      dc::reshape(dc::mean_axis(route_mlp_(ps, rtokens), 1), {B * V, kNumRoutes, L});
  Tensor query = out.interaction;
  if (V == 1) query = dc::select(query, 1, 0);
  query = dc::reshape(query, {B * V, 1, L});
  out.route = dc::reshape(route_cross_(ps, query, route_emb), {B, V, L});

  const Tensor raster = Tensor::constant({B, 1, kBevSize, kBevSize}, in.raster);
  Tensor c = dc::relu(conv1_(ps, raster));
  c = dc::relu(conv2_(ps, c));
  c = dc::relu(conv3_(ps, c));
  out.drivable = dc::relu(
      drivable_out_(ps, dc::reshape(c, {B, cfg_.conv3 * kConvOut * kConvOut})));
  return out;
}

Tensor SceneEncoder::ego_feature(const Output& out) {
  return dc::concat({dc::select(out.history, 1, 0), dc::select(out.interaction, 1, 0),
                     dc::select(out.route, 1, 0), out.drivable},
                    -1);
}

}  // namespace gcnav

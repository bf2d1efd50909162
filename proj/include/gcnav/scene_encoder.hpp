#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gcnav/dc/layers.hpp"
#include "gcnav/encoding.hpp"

namespace gcnav {

inline constexpr double kPositionScale = 20.0;  // meters per unit of network input
inline constexpr double kSpeedScale = 10.0;
inline constexpr std::size_t kHistoryFeatures = 11;
inline constexpr std::size_t kRouteFeatures = 10;
inline constexpr std::size_t kPoseFeatures = 4;

struct EncoderConfig {
  std::size_t embed = 128;  // L
  std::size_t heads = 4;
  std::size_t conv1 = 8;
  std::size_t conv2 = 16;
  std::size_t conv3 = 32;
  std::size_t hidden = 256;  // MLP hidden width for heads and decoders
};

/// Network inputs for a batch of states, flattened row-major.
struct SceneInputs {
  std::size_t batch = 0;
  /// Vehicles whose routes are encoded: all slots, or only the ego.
  std::size_t route_vehicles = kVehicleSlots;
  std::vector<double> history;       // [B*6, T_h, 11]
  std::vector<double> routes;        // [B*V*N_r, N_p-1, 10]
  std::vector<double> raster;        // [B, 1, 64, 64]
  std::vector<std::uint8_t> valid;   // [B*6]
  std::vector<Pose> current;         // [B*6], ego frame
};

SceneInputs build_inputs(std::span<const VectorState* const> states, std::size_t route_vehicles);

/// [n, 4] rows of (x / scale, y / scale, cos, sin).
dc::Tensor pose_features(std::span<const Pose> poses);

/// History self-attention, interaction graph, shared route encoder with
/// interaction-queried cross attention, and the drivable-area CNN.
class SceneEncoder {
 public:
  struct Output {
    dc::Tensor history;      // [B, 6, L]
    dc::Tensor interaction;  // [B, 6, L]
    dc::Tensor route;        // [B, V, L]
    dc::Tensor drivable;     // [B, L]
  };

  SceneEncoder() = default;
  static SceneEncoder create(dc::ParamStore& ps, const std::string& prefix,
                             const EncoderConfig& cfg, Rng& rng);

  Output operator()(const dc::ParamStore& ps, const SceneInputs& in) const;

  /// Ego features [history, interaction, route, drivable] -> [B, 4L].
  static dc::Tensor ego_feature(const Output& out);

  std::size_t embed() const { return cfg_.embed; }

 private:
  EncoderConfig cfg_;
  dc::Linear history_in_;
  dc::MultiHeadAttention history_att_;
  dc::LayerNorm history_ln_;
  dc::MultiHeadAttention interaction_att_;
  dc::LayerNorm interaction_ln_;
  dc::Mlp route_mlp_;
  dc::MultiHeadAttention route_cross_;
  dc::Conv2d conv1_;
  dc::Conv2d conv2_;
  dc::Conv2d conv3_;
  dc::Linear drivable_out_;
};

}  // namespace gcnav

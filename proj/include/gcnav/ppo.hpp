#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "gcnav/dc/param_store.hpp"

namespace gcnav {

struct PpoConfig {
  double gamma = 0.99;
  double lambda = 0.95;
  double clip = 0.2;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
};

/// Step learning-rate schedule: `start` until `switch_step` gradient steps have
/// been taken, `end` afterwards.
struct LrSchedule {
  double start = 1e-4;
  double end = 1e-5;
  std::uint64_t switch_step = 2000;

  double at(std::uint64_t steps_taken) const { return steps_taken < switch_step ? start : end; }
};

/// GAE over one trajectory segment. next_values[t] is V(s_{t+1}); a done
/// transition does not bootstrap.
std::vector<double> gae_advantages(std::span<const double> rewards, std::span<const double> values,
                                   std::span<const double> next_values,
                                   std::span<const std::uint8_t> dones, double gamma, double lambda);

struct PpoBatch {
  std::vector<std::size_t> actions;
  std::vector<double> old_log_probs;
  std::vector<double> advantages;
  std::vector<double> returns;
};

struct PpoStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
};

/// `epochs` full-batch passes of clipped surrogate + entropy bonus on the
/// policy store and squared-error regression on the value store. log_probs
/// returns [B, A] log-probabilities (masks already applied); values returns [B].
PpoStats ppo_update(dc::ParamStore& policy, dc::ParamStore& value,
                    const std::function<dc::Tensor()>& log_probs,
                    const std::function<dc::Tensor()>& values, const PpoBatch& batch,
                    const PpoConfig& cfg, std::size_t epochs, const LrSchedule& policy_lr,
                    const LrSchedule& value_lr);

}  // namespace gcnav

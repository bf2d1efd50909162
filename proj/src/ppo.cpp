#include "gcnav/ppo.hpp"

#include "gcnav/dc/ops.hpp"
#include "gcnav/errors.hpp"

namespace gcnav {

using dc::Tensor;

std::vector<double> gae_advantages(std::span<const double> rewards, std::span<const double> values,
                                   std::span<const double> next_values,
                                   std::span<const std::uint8_t> dones, double gamma, double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || next_values.size() != n || dones.size() != n) {
    throw ShapeError("gae: sequence lengths differ");
  }
  std::vector<double> adv(n, 0.0);
  double running = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const double live = dones[k] ? 0.0 : 1.0;
    const double delta = rewards[k] + gamma * live * next_values[k] - values[k];
    running = delta + gamma * lambda * live * running;
    adv[k] = running;
  }
  return adv;
}

PpoStats ppo_update(dc::ParamStore& policy, dc::ParamStore& value,
                    const std::function<Tensor()>& log_probs, const std::function<Tensor()>& values,
                    const PpoBatch& batch, const PpoConfig& cfg, std::size_t epochs,
                    const LrSchedule& policy_lr, const LrSchedule& value_lr) {
  const std::size_t n = batch.actions.size();
  if (n == 0) throw EpisodeError("ppo update on an empty buffer");
  if (batch.old_log_probs.size() != n || batch.advantages.size() != n || batch.returns.size() != n) {
    throw ShapeError("ppo batch fields differ in length");
  }
  const Tensor old_lp = Tensor::constant({n}, batch.old_log_probs);
  const Tensor adv = Tensor::constant({n}, batch.advantages);
  const Tensor ret = Tensor::constant({n}, batch.returns);
  PpoStats stats;
  for (std::size_t e = 0; e < epochs; ++e) {
    const Tensor lp = log_probs();
    const Tensor chosen = dc::gather_last(lp, batch.actions);
    const Tensor ratio = dc::exp(dc::sub(chosen, old_lp));
    const Tensor surr1 = dc::mul(ratio, adv);
    const Tensor surr2 = dc::mul(dc::clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip), adv);
    const Tensor policy_loss = dc::scale(dc::mean(dc::minimum(surr1, surr2)), -1.0);
    const Tensor entropy =
        dc::scale(dc::mean(dc::sum_axis(dc::mul(dc::exp(lp), lp), -1)), -1.0);
    const Tensor total = dc::sub(policy_loss, dc::scale(entropy, cfg.entropy_coef));
    dc::backward(total);
    policy.adam_step(policy_lr.at(policy.steps()));

    const Tensor v = values();
    const Tensor value_loss = dc::scale(dc::mean(dc::square(dc::sub(v, ret))), cfg.value_coef);
    dc::backward(value_loss);
    value.adam_step(value_lr.at(value.steps()));

    stats.policy_loss = policy_loss.item();
    stats.value_loss = value_loss.item();
    stats.entropy = entropy.item();
  }
  return stats;
}

}  // namespace gcnav

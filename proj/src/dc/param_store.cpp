#include "gcnav/dc/param_store.hpp"

#include <bit>
#include <cmath>

#include "gcnav/errors.hpp"

namespace gcnav::dc {

ParamStore::ParamStore(const ParamStore& other) : steps_(other.steps_) {
  entries_.reserve(other.entries_.size());
  for (const Entry& e : other.entries_) {
    Tensor copy = Tensor::leaf(e.value.shape(), {e.value.data().begin(), e.value.data().end()});
    entries_.push_back({e.name, copy, e.m, e.v});
  }
}

ParamStore& ParamStore::operator=(const ParamStore& other) {
  if (this != &other) {
    ParamStore tmp(other);
    *this = std::move(tmp);
  }
  return *this;
}

std::size_t ParamStore::add(const std::string& name, Shape shape, std::vector<double> init) {
  if (find(name)) throw ConfigError("duplicate parameter name " + name);
  const std::size_t n = init.size();
  entries_.push_back({name, Tensor::leaf(std::move(shape), std::move(init)),
                      std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)});
  return entries_.size() - 1;
}

std::size_t ParamStore::add_weight(const std::string& name, Shape shape, std::size_t fan_in,
                                   std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> init(numel(shape));
  for (double& w : init) w = rng.uniform(-limit, limit);
  return add(name, std::move(shape), std::move(init));
}

std::size_t ParamStore::add_constant(const std::string& name, Shape shape, double value) {
  const std::size_t n = numel(shape);
  return add(name, std::move(shape), std::vector<double>(n, value));
}

std::optional<std::size_t> ParamStore::find(const std::string& name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name == name) return i;
  }
  return std::nullopt;
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const Entry& e : entries_) n += e.value.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (Entry& e : entries_) e.value.node()->grad.clear();
}

double ParamStore::grad_norm() const {
  double s = 0.0;
  for (const Entry& e : entries_) {
    for (double g : e.value.grad()) s += g * g;
  }
  return std::sqrt(s);
}

void ParamStore::adam_step(double lr, const AdamConfig& cfg) {
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (Entry& e : entries_) {
    const auto g = e.value.grad();
    if (g.empty()) continue;
    auto w = e.value.mutable_data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      e.m[i] = cfg.beta1 * e.m[i] + (1.0 - cfg.beta1) * g[i];
      e.v[i] = cfg.beta2 * e.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = e.m[i] / c1;
      const double vhat = e.v[i] / c2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
  zero_grad();
}

std::uint64_t ParamStore::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const Entry& e : entries_) {
    for (double v : e.value.data()) {
      auto bits = std::bit_cast<std::uint64_t>(v);
      for (int b = 0; b < 8; ++b) {
        h ^= (bits >> (8 * b)) & 0xffU;
        h *= 0x100000001b3ULL;
      }
    }
  }
  return h;
}

}  // namespace gcnav::dc

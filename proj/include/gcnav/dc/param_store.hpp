#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gcnav/dc/tensor.hpp"
#include "gcnav/rng.hpp"

namespace gcnav::dc {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Owns a network's parameters and their Adam moments. Copying deep-copies
/// the values, so a copy is an independent network.
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore& other);
  ParamStore& operator=(const ParamStore& other);
  ParamStore(ParamStore&&) noexcept = default;
  ParamStore& operator=(ParamStore&&) noexcept = default;

  std::size_t add(const std::string& name, Shape shape, std::vector<double> init);
  /// Glorot-uniform weight.
  std::size_t add_weight(const std::string& name, Shape shape, std::size_t fan_in,
                         std::size_t fan_out, Rng& rng);
  std::size_t add_constant(const std::string& name, Shape shape, double value);

  std::size_t size() const { return entries_.size(); }
  const Tensor& param(std::size_t i) const { return entries_.at(i).value; }
  Tensor& param(std::size_t i) { return entries_.at(i).value; }
  const std::string& name(std::size_t i) const { return entries_.at(i).name; }
  std::optional<std::size_t> find(const std::string& name) const;
  std::size_t parameter_count() const;

  void zero_grad();
  double grad_norm() const;
  /// One Adam update from the accumulated gradients, then zeroes them.
  void adam_step(double lr, const AdamConfig& cfg = {});
  std::uint64_t steps() const { return steps_; }
  /// FNV-1a over the raw parameter bytes.
  std::uint64_t fingerprint() const;

 private:
  struct Entry {
    std::string name;
    Tensor value;
    std::vector<double> m;
    std::vector<double> v;
  };
  std::vector<Entry> entries_;
  std::uint64_t steps_ = 0;
};

}  // namespace gcnav::dc

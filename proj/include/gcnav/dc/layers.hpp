#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gcnav/dc/ops.hpp"
#include "gcnav/dc/param_store.hpp"

namespace gcnav::dc {

struct Linear {
  std::size_t weight = 0;
  std::size_t bias = 0;
  std::size_t in = 0;
  std::size_t out = 0;

  static Linear create(ParamStore& ps, const std::string& name, std::size_t in, std::size_t out,
                       Rng& rng);
  Tensor operator()(const ParamStore& ps, const Tensor& x) const;
};

/// Linear layers with ReLU between them (none after the last).
struct Mlp {
  std::vector<Linear> layers;

  /// dims = {in, hidden..., out}
  static Mlp create(ParamStore& ps, const std::string& name, const std::vector<std::size_t>& dims,
                    Rng& rng);
  Tensor operator()(const ParamStore& ps, const Tensor& x) const;
  std::size_t out_dim() const { return layers.back().out; }
};

struct LayerNorm {
  std::size_t gamma = 0;
  std::size_t beta = 0;

  static LayerNorm create(ParamStore& ps, const std::string& name, std::size_t dim);
  Tensor operator()(const ParamStore& ps, const Tensor& x) const;
};

struct MultiHeadAttention {
  Linear query;
  Linear key;
  Linear value;
  Linear output;
  std::size_t heads = 1;
  std::size_t dim = 0;

  static MultiHeadAttention create(ParamStore& ps, const std::string& name, std::size_t dim,
                                   std::size_t heads, Rng& rng);
  /// q [n, tq, dim], kv [n, tk, dim] -> [n, tq, dim]. key_valid has n * tk
  /// entries or is empty.
  Tensor operator()(const ParamStore& ps, const Tensor& q, const Tensor& kv,
                    const std::vector<std::uint8_t>& key_valid = {}) const;
};

struct Conv2d {
  std::size_t weight = 0;
  std::size_t bias = 0;
  std::size_t stride = 1;
  std::size_t pad = 0;

  static Conv2d create(ParamStore& ps, const std::string& name, std::size_t in, std::size_t out,
                       std::size_t kernel, std::size_t stride, std::size_t pad, Rng& rng);
  Tensor operator()(const ParamStore& ps, const Tensor& x) const;
};

}  // namespace gcnav::dc

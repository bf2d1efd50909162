#include "gcnav/dc/layers.hpp"

#include "gcnav/errors.hpp"

namespace gcnav::dc {

Linear Linear::create(ParamStore& ps, const std::string& name, std::size_t in, std::size_t out,
                      Rng& rng) {
  Linear l;
  l.in = in;
  l.out = out;
  l.weight = ps.add_weight(name + ".weight", {in, out}, in, out, rng);
  l.bias = ps.add_constant(name + ".bias", {out}, 0.0);
  return l;
}

Tensor Linear::operator()(const ParamStore& ps, const Tensor& x) const {
  return add_bias(matmul(x, ps.param(weight)), ps.param(bias));
}

Mlp Mlp::create(ParamStore& ps, const std::string& name, const std::vector<std::size_t>& dims,
                Rng& rng) {
  if (dims.size() < 2) throw ConfigError("mlp needs at least input and output dims");
  Mlp m;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    m.layers.push_back(Linear::create(ps, name + "." + std::to_string(i), dims[i], dims[i + 1], rng));
  }
  return m;
}

Tensor Mlp::operator()(const ParamStore& ps, const Tensor& x) const {
  Tensor h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = layers[i](ps, h);
    if (i + 1 < layers.size()) h = relu(h);
  }
  return h;
}

LayerNorm LayerNorm::create(ParamStore& ps, const std::string& name, std::size_t dim) {
  LayerNorm ln;
  ln.gamma = ps.add_constant(name + ".gamma", {dim}, 1.0);
  ln.beta = ps.add_constant(name + ".beta", {dim}, 0.0);
  return ln;
}

Tensor LayerNorm::operator()(const ParamStore& ps, const Tensor& x) const {
  return layer_norm(x, ps.param(gamma), ps.param(beta));
}

MultiHeadAttention MultiHeadAttention::create(ParamStore& ps, const std::string& name,
                                              std::size_t dim, std::size_t heads, Rng& rng) {
  if (heads == 0 || dim % heads != 0) {
    throw ConfigError("attention dim " + std::to_string(dim) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
  MultiHeadAttention a;
  a.heads = heads;
  a.dim = dim;
  a.query = Linear::create(ps, name + ".q", dim, dim, rng);
  a.key = Linear::create(ps, name + ".k", dim, dim, rng);
  a.value = Linear::create(ps, name + ".v", dim, dim, rng);
  a.output = Linear::create(ps, name + ".o", dim, dim, rng);
  return a;
}

Tensor MultiHeadAttention::operator()(const ParamStore& ps, const Tensor& q, const Tensor& kv,
                                      const std::vector<std::uint8_t>& key_valid) const {
  if (q.rank() != 3 || kv.rank() != 3 || q.dim(0) != kv.dim(0) || q.dim(2) != dim ||
      kv.dim(2) != dim) {
    throw ShapeError("attention inputs " + to_string(q.shape()) + " / " + to_string(kv.shape()));
  }
  const std::size_t n = q.dim(0), tq = q.dim(1), tk = kv.dim(1), d = dim / heads;
  auto split_heads = [&](const Tensor& t, std::size_t len) {
    return swap_axes12(reshape(t, {n, len, heads, d}));
  };
  const Tensor qh = split_heads(query(ps, q), tq);
  const Tensor kh = split_heads(key(ps, kv), tk);
  const Tensor vh = split_heads(value(ps, kv), tk);
  const Tensor att = scaled_dot_attention(qh, kh, vh, key_valid);
  return output(ps, reshape(swap_axes12(att), {n, tq, dim}));
}

Conv2d Conv2d::create(ParamStore& ps, const std::string& name, std::size_t in, std::size_t out,
                      std::size_t kernel, std::size_t stride, std::size_t pad, Rng& rng) {
  Conv2d c;
  c.stride = stride;
  c.pad = pad;
  c.weight = ps.add_weight(name + ".weight", {out, in, kernel, kernel}, in * kernel * kernel,
                           out * kernel * kernel, rng);
  c.bias = ps.add_constant(name + ".bias", {out}, 0.0);
  return c;
}

Tensor Conv2d::operator()(const ParamStore& ps, const Tensor& x) const {
  return conv2d(x, ps.param(weight), ps.param(bias), stride, pad);
}

}  // namespace gcnav::dc

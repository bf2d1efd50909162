#pragma once

#include <cstdint>
#include <vector>

#include "gcnav/dc/tensor.hpp"

namespace gcnav::dc {

inline constexpr double kAttentionMaskValue = -1e9;

// Every op checks its output for NaN/Inf and throws NonFiniteError naming the op.
// Shape mismatches throw ShapeError.

/// x [..., k] times w [k, m] -> [..., m].
Tensor matmul(const Tensor& x, const Tensor& w);
/// Batched product over matching leading dims: a [..., n, k] b [..., k, m],
/// or b [..., m, k] when transpose_b.
Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b = false);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// x [..., m] plus bias [m].
Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);
Tensor minimum(const Tensor& a, const Tensor& b);
Tensor clamp(const Tensor& x, double lo, double hi);

Tensor relu(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor square(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sum_axis(const Tensor& x, int axis);
Tensor mean_axis(const Tensor& x, int axis);

Tensor softmax(const Tensor& x, int axis = -1);
Tensor log_softmax(const Tensor& x, int axis = -1);
/// Normalizes over the last axis, then gamma * x_hat + beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

/// Replaces entries where mask != 0 by `value`; gradient does not flow there.
Tensor masked_fill(const Tensor& x, const std::vector<std::uint8_t>& mask, double value);

Tensor reshape(const Tensor& x, Shape shape);
/// Swaps axes 1 and 2 of a rank-4 tensor.
Tensor swap_axes12(const Tensor& x);
Tensor concat(const std::vector<Tensor>& parts, int axis = -1);
/// Drops `axis` by taking one index along it.
Tensor select(const Tensor& x, int axis, std::size_t index);
/// Inserts a new axis at `axis` repeated `count` times.
Tensor expand(const Tensor& x, int axis, std::size_t count);
/// x [n, c] -> [n] with x[i, index[i]].
Tensor gather_last(const Tensor& x, const std::vector<std::size_t>& index);

/// Elementwise 0.5 d^2 if |d| < 1 else |d| - 0.5.
Tensor smooth_l1(const Tensor& pred, const Tensor& target);

/// x [b, c, h, w], weight [o, c, k, k], bias [o].
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t pad);
Tensor max_pool2d(const Tensor& x, std::size_t kernel, std::size_t stride);

/// q [n, h, tq, d], k/v [n, h, tk, d]; key_valid (n * tk entries, may be empty)
/// masks invalid keys with kAttentionMaskValue before the softmax.
Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            const std::vector<std::uint8_t>& key_valid);

}  // namespace gcnav::dc

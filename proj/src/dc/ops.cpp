#include "gcnav/dc/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "gcnav/errors.hpp"

namespace gcnav::dc {

namespace {

using Backward = std::function<void(Node&)>;

void check_finite(const std::vector<double>& v, const char* op) {
  for (double x : v) {
    if (!std::isfinite(x)) throw NonFiniteError(std::string(op) + " produced a non-finite value");
  }
}

Tensor make(Shape shape, std::vector<double> value, const std::vector<Tensor>& parents, Backward bw,
            const char* op) {
  check_finite(value, op);
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  bool rg = false;
  for (const Tensor& p : parents) rg = rg || p.requires_grad();
  if (rg) {
    n->requires_grad = true;
    for (const Tensor& p : parents) n->parents.push_back(p.node());
    n->backward = std::move(bw);
  }
  return Tensor(std::move(n));
}

/// Grad buffer of parent i, or nullptr when it does not need one.
double* pgrad(Node& self, std::size_t i) {
  Node& p = *self.parents[i];
  return p.requires_grad ? p.grad_buffer().data() : nullptr;
}

const std::vector<double>& pval(const Node& self, std::size_t i) { return self.parents[i]->value; }

std::size_t norm_axis(int axis, std::size_t rank, const char* op) {
  const auto r = static_cast<long>(rank);
  const long a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) throw ShapeError(std::string(op) + ": axis out of range");
  return static_cast<std::size_t>(a);
}

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t len = 1;
  std::size_t inner = 1;
};

AxisSplit split(const Shape& s, std::size_t axis) {
  AxisSplit a;
  for (std::size_t i = 0; i < axis; ++i) a.outer *= s[i];
  a.len = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) a.inner *= s[i];
  return a;
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
}

// Row-major kernels with a fixed accumulation order, so a row's result does
// not depend on how many other rows share the call.

/// c[n, m] += a[n, k] * b[k, m]
void gemm_nn(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
             std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    double* ci = c + i * m;
    const double* ai = a + i * k;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double aik = ai[kk];
      const double* bk = b + kk * m;
      for (std::size_t j = 0; j < m; ++j) ci[j] += aik * bk[j];
    }
  }
}

/// c[k, m] += a[n, k]^T * b[n, m]
void gemm_tn(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
             std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a + i * k;
    const double* bi = b + i * m;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double aik = ai[kk];
      double* ck = c + kk * m;
      for (std::size_t j = 0; j < m; ++j) ck[j] += aik * bi[j];
    }
  }
}

std::vector<double> transposed(const double* src, std::size_t rows, std::size_t cols) {
  std::vector<double> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = src[r * cols + c];
  }
  return out;
}

template <typename F, typename D>
Tensor unary(const Tensor& x, const char* op, F f, D dfdx) {
  std::vector<double> out(x.numel());
  const auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
  return make(x.shape(), std::move(out), {x},
              [dfdx](Node& self) {
                double* gx = pgrad(self, 0);
                const auto& xv = pval(self, 0);
                for (std::size_t i = 0; i < xv.size(); ++i) {
                  gx[i] += self.grad[i] * dfdx(xv[i], self.value[i]);
                }
              },
              op);
}

}  // namespace

Tensor matmul(const Tensor& x, const Tensor& w) {
  if (w.rank() != 2 || x.rank() < 1 || x.dim(-1) != w.dim(0)) {
    throw ShapeError("matmul: " + to_string(x.shape()) + " x " + to_string(w.shape()));
  }
  const std::size_t k = w.dim(0);
  const std::size_t m = w.dim(1);
  const std::size_t n = x.numel() / k;
  Shape shape = x.shape();
  shape.back() = m;
  std::vector<double> out(n * m, 0.0);
  gemm_nn(x.data().data(), w.data().data(), out.data(), n, k, m);
  return make(std::move(shape), std::move(out), {x, w},
              [n, k, m](Node& self) {
                const auto& xv = pval(self, 0);
                const auto& wv = pval(self, 1);
                if (double* gx = pgrad(self, 0)) {
                  const auto wt = transposed(wv.data(), k, m);
                  gemm_nn(self.grad.data(), wt.data(), gx, n, m, k);
                }
                if (double* gw = pgrad(self, 1)) gemm_tn(xv.data(), self.grad.data(), gw, n, k, m);
              },
              "matmul");
}

Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b) {
  if (a.rank() < 2 || a.rank() != b.rank() ||
      !std::equal(a.shape().begin(), a.shape().end() - 2, b.shape().begin())) {
    throw ShapeError("bmm: " + to_string(a.shape()) + " x " + to_string(b.shape()));
  }
  const std::size_t n = a.dim(-2);
  const std::size_t k = a.dim(-1);
  const std::size_t m = transpose_b ? b.dim(-2) : b.dim(-1);
  if ((transpose_b ? b.dim(-1) : b.dim(-2)) != k) {
    throw ShapeError("bmm: inner dims " + to_string(a.shape()) + " x " + to_string(b.shape()));
  }
  const std::size_t batch = a.numel() / (n * k);
  Shape shape = a.shape();
  shape.back() = m;
  std::vector<double> out(batch * n * m, 0.0);
  for (std::size_t bi = 0; bi < batch; ++bi) {
    const double* bb = b.data().data() + bi * k * m;
    if (transpose_b) {
      const auto bt = transposed(bb, m, k);
      gemm_nn(a.data().data() + bi * n * k, bt.data(), out.data() + bi * n * m, n, k, m);
    } else {
      gemm_nn(a.data().data() + bi * n * k, bb, out.data() + bi * n * m, n, k, m);
    }
  }
  return make(std::move(shape), std::move(out), {a, b},
              [batch, n, k, m, transpose_b](Node& self) {
                const auto& av = pval(self, 0);
                const auto& bv = pval(self, 1);
                double* ga = pgrad(self, 0);
                double* gb = pgrad(self, 1);
                for (std::size_t bi = 0; bi < batch; ++bi) {
                  const double* g = self.grad.data() + bi * n * m;
                  const double* bb = bv.data() + bi * k * m;
                  const double* ab = av.data() + bi * n * k;
                  if (ga) {
                    // dA = dC * B_eff^T where B_eff is [k, m]
                    if (transpose_b) {
                      gemm_nn(g, bb, ga + bi * n * k, n, m, k);
                    } else {
                      const auto bt = transposed(bb, k, m);
                      gemm_nn(g, bt.data(), ga + bi * n * k, n, m, k);
                    }
                  }
                  if (gb) {
                    std::vector<double> d(k * m, 0.0);
                    gemm_tn(ab, g, d.data(), n, k, m);
                    double* dst = gb + bi * k * m;
                    if (transpose_b) {
                      for (std::size_t r = 0; r < k; ++r) {
                        for (std::size_t c = 0; c < m; ++c) dst[c * k + r] += d[r * m + c];
                      }
                    } else {
                      for (std::size_t i = 0; i < k * m; ++i) dst[i] += d[i];
                    }
                  }
                }
              },
              "bmm");
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return make(a.shape(), std::move(out), {a, b},
              [](Node& self) {
                for (std::size_t p = 0; p < 2; ++p) {
                  if (double* g = pgrad(self, p)) {
                    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
                  }
                }
              },
              "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return make(a.shape(), std::move(out), {a, b},
              [](Node& self) {
                if (double* g = pgrad(self, 0)) {
                  for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
                }
                if (double* g = pgrad(self, 1)) {
                  for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
                }
              },
              "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make(a.shape(), std::move(out), {a, b},
              [](Node& self) {
                const auto& av = pval(self, 0);
                const auto& bv = pval(self, 1);
                if (double* g = pgrad(self, 0)) {
                  for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * bv[i];
                }
                if (double* g = pgrad(self, 1)) {
                  for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * av[i];
                }
              },
              "mul");
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (bias.rank() != 1 || x.rank() < 1 || x.dim(-1) != bias.dim(0)) {
    throw ShapeError("add_bias: " + to_string(x.shape()) + " + " + to_string(bias.shape()));
  }
  const std::size_t m = bias.dim(0);
  const std::size_t rows = x.numel() / m;
  std::vector<double> out(x.numel());
  const double* xv = x.data().data();
  const double* bv = bias.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < m; ++j) out[r * m + j] = xv[r * m + j] + bv[j];
  }
  return make(x.shape(), std::move(out), {x, bias},
              [m, rows](Node& self) {
                const double* go = self.grad.data();
                if (double* g = pgrad(self, 0)) {
                  for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += go[i];
                }
                if (double* g = pgrad(self, 1)) {
                  for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t j = 0; j < m; ++j) g[j] += go[r * m + j];
                  }
                }
              },
              "add_bias");
}

Tensor scale(const Tensor& x, double factor) {
  return unary(
      x, "scale", [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double value) {
  return unary(
      x, "add_scalar", [value](double v) { return v + value; }, [](double, double) { return 1.0; });
}

Tensor minimum(const Tensor& a, const Tensor& b) {
  require_same(a, b, "minimum");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(a.data()[i], b.data()[i]);
  return make(a.shape(), std::move(out), {a, b},
              [](Node& self) {
                const auto& av = pval(self, 0);
                const auto& bv = pval(self, 1);
                double* ga = pgrad(self, 0);
                double* gb = pgrad(self, 1);
                for (std::size_t i = 0; i < self.grad.size(); ++i) {
                  if (av[i] <= bv[i]) {
                    if (ga) ga[i] += self.grad[i];
                  } else if (gb) {
                    gb[i] += self.grad[i];
                  }
                }
              },
              "minimum");
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  return unary(
      x, "clamp", [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& x) {
  return unary(
      x, "exp", [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor square(const Tensor& x) {
  return unary(
      x, "square", [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return make({}, {s}, {x},
              [](Node& self) {
                double* g = pgrad(self, 0);
                const std::size_t n = self.parents[0]->value.size();
                for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[0];
              },
              "sum");
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor sum_axis(const Tensor& x, int axis) {
  const std::size_t ax = norm_axis(axis, x.rank(), "sum_axis");
  const AxisSplit s = split(x.shape(), ax);
  Shape shape = x.shape();
  shape.erase(shape.begin() + static_cast<long>(ax));
  std::vector<double> out(s.outer * s.inner, 0.0);
  const auto xv = x.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t a = 0; a < s.len; ++a) {
      for (std::size_t i = 0; i < s.inner; ++i) {
        out[o * s.inner + i] += xv[(o * s.len + a) * s.inner + i];
      }
    }
  }
  return make(std::move(shape), std::move(out), {x},
              [s](Node& self) {
                double* g = pgrad(self, 0);
                for (std::size_t o = 0; o < s.outer; ++o) {
                  for (std::size_t a = 0; a < s.len; ++a) {
                    for (std::size_t i = 0; i < s.inner; ++i) {
                      g[(o * s.len + a) * s.inner + i] += self.grad[o * s.inner + i];
                    }
                  }
                }
              },
              "sum_axis");
}

Tensor mean_axis(const Tensor& x, int axis) {
  const std::size_t len = x.dim(axis);
  if (len == 0) throw ShapeError("mean_axis over an empty axis");
  return scale(sum_axis(x, axis), 1.0 / static_cast<double>(len));
}

Tensor softmax(const Tensor& x, int axis) {
  const std::size_t ax = norm_axis(axis, x.rank(), "softmax");
  const AxisSplit s = split(x.shape(), ax);
  std::vector<double> out(x.numel());
  const auto xv = x.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.len * s.inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t a = 0; a < s.len; ++a) mx = std::max(mx, xv[base + a * s.inner]);
      double z = 0.0;
      for (std::size_t a = 0; a < s.len; ++a) {
        const double e = std::exp(xv[base + a * s.inner] - mx);
        out[base + a * s.inner] = e;
        z += e;
      }
      for (std::size_t a = 0; a < s.len; ++a) out[base + a * s.inner] /= z;
    }
  }
  return make(x.shape(), std::move(out), {x},
              [s](Node& self) {
                double* g = pgrad(self, 0);
                for (std::size_t o = 0; o < s.outer; ++o) {
                  for (std::size_t i = 0; i < s.inner; ++i) {
                    const std::size_t base = o * s.len * s.inner + i;
                    double dot = 0.0;
                    for (std::size_t a = 0; a < s.len; ++a) {
                      const std::size_t j = base + a * s.inner;
                      dot += self.grad[j] * self.value[j];
                    }
                    for (std::size_t a = 0; a < s.len; ++a) {
                      const std::size_t j = base + a * s.inner;
                      g[j] += self.value[j] * (self.grad[j] - dot);
                    }
                  }
                }
              },
              "softmax");
}

Tensor log_softmax(const Tensor& x, int axis) {
  const std::size_t ax = norm_axis(axis, x.rank(), "log_softmax");
  const AxisSplit s = split(x.shape(), ax);
  std::vector<double> out(x.numel());
  const auto xv = x.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.len * s.inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t a = 0; a < s.len; ++a) mx = std::max(mx, xv[base + a * s.inner]);
      double z = 0.0;
      for (std::size_t a = 0; a < s.len; ++a) z += std::exp(xv[base + a * s.inner] - mx);
      const double lz = mx + std::log(z);
      for (std::size_t a = 0; a < s.len; ++a) out[base + a * s.inner] = xv[base + a * s.inner] - lz;
    }
  }
  return make(x.shape(), std::move(out), {x},
              [s](Node& self) {
                double* g = pgrad(self, 0);
                for (std::size_t o = 0; o < s.outer; ++o) {
                  for (std::size_t i = 0; i < s.inner; ++i) {
                    const std::size_t base = o * s.len * s.inner + i;
                    double total = 0.0;
                    for (std::size_t a = 0; a < s.len; ++a) total += self.grad[base + a * s.inner];
                    for (std::size_t a = 0; a < s.len; ++a) {
                      const std::size_t j = base + a * s.inner;
                      g[j] += self.grad[j] - std::exp(self.value[j]) * total;
                    }
                  }
                }
              },
              "log_softmax");
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.rank() < 1 || gamma.rank() != 1 || beta.shape() != gamma.shape() ||
      gamma.dim(0) != x.dim(-1)) {
    throw ShapeError("layer_norm: " + to_string(x.shape()) + " with " + to_string(gamma.shape()));
  }
  const std::size_t d = gamma.dim(0);
  const std::size_t rows = x.numel() / d;
  std::vector<double> out(x.numel());
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  const auto xv = x.data();
  const auto gv = gamma.data();
  const auto bv = beta.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xv.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += xr[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (xr[j] - mu) * is;
      (*xhat)[r * d + j] = h;
      out[r * d + j] = h * gv[j] + bv[j];
    }
  }
  return make(x.shape(), std::move(out), {x, gamma, beta},
              [d, rows, xhat, inv_std](Node& self) {
                const auto& gv = pval(self, 1);
                double* gx = pgrad(self, 0);
                double* gg = pgrad(self, 1);
                double* gb = pgrad(self, 2);
                std::vector<double> dh(d);
                for (std::size_t r = 0; r < rows; ++r) {
                  const double* go = self.grad.data() + r * d;
                  const double* h = xhat->data() + r * d;
                  double mean_dh = 0.0;
                  double mean_dh_h = 0.0;
                  for (std::size_t j = 0; j < d; ++j) {
                    dh[j] = go[j] * gv[j];
                    mean_dh += dh[j];
                    mean_dh_h += dh[j] * h[j];
                    if (gg) gg[j] += go[j] * h[j];
                    if (gb) gb[j] += go[j];
                  }
                  mean_dh /= static_cast<double>(d);
                  mean_dh_h /= static_cast<double>(d);
                  if (gx) {
                    for (std::size_t j = 0; j < d; ++j) {
                      gx[r * d + j] += (*inv_std)[r] * (dh[j] - mean_dh - h[j] * mean_dh_h);
                    }
                  }
                }
              },
              "layer_norm");
}

Tensor masked_fill(const Tensor& x, const std::vector<std::uint8_t>& mask, double value) {
  if (mask.size() != x.numel()) throw ShapeError("masked_fill: mask size mismatch");
  std::vector<double> out(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (mask[i]) out[i] = value;
  }
  return make(x.shape(), std::move(out), {x},
              [mask](Node& self) {
                double* g = pgrad(self, 0);
                for (std::size_t i = 0; i < self.grad.size(); ++i) {
                  if (!mask[i]) g[i] += self.grad[i];
                }
              },
              "masked_fill");
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.numel()) {
    throw ShapeError("reshape: " + to_string(x.shape()) + " -> " + to_string(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return make(std::move(shape), std::move(out), {x},
              [](Node& self) {
                double* g = pgrad(self, 0);
                for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
              },
              "reshape");
}

Tensor swap_axes12(const Tensor& x) {
  if (x.rank() != 4) throw ShapeError("swap_axes12 needs rank 4, got " + to_string(x.shape()));
  const std::size_t A = x.dim(0), B = x.dim(1), C = x.dim(2), D = x.dim(3);
  std::vector<double> out(x.numel());
  const auto xv = x.data();
  auto src = [=](std::size_t a, std::size_t b, std::size_t c) { return ((a * B + b) * C + c) * D; };
  auto dst = [=](std::size_t a, std::size_t b, std::size_t c) { return ((a * C + c) * B + b) * D; };
  for (std::size_t a = 0; a < A; ++a) {
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t c = 0; c < C; ++c) {
        std::copy_n(xv.data() + src(a, b, c), D, out.data() + dst(a, b, c));
      }
    }
  }
  return make({A, C, B, D}, std::move(out), {x},
              [=](Node& self) {
                double* g = pgrad(self, 0);
                for (std::size_t a = 0; a < A; ++a) {
                  for (std::size_t b = 0; b < B; ++b) {
                    for (std::size_t c = 0; c < C; ++c) {
                      for (std::size_t d = 0; d < D; ++d) {
                        g[src(a, b, c) + d] += self.grad[dst(a, b, c) + d];
                      }
                    }
                  }
                }
              },
              "swap_axes12");
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat of nothing");
  const std::size_t ax = norm_axis(axis, parts[0].rank(), "concat");
  Shape shape = parts[0].shape();
  std::vector<std::size_t> lens;
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    Shape a = p.shape();
    Shape b = shape;
    if (a.size() != b.size()) throw ShapeError("concat: rank mismatch");
    a[ax] = 0;
    b[ax] = 0;
    if (a != b) throw ShapeError("concat: " + to_string(p.shape()) + " vs " + to_string(shape));
    lens.push_back(p.dim(static_cast<int>(ax)));
    total += lens.back();
  }
  shape[ax] = total;
  const AxisSplit s = split(shape, ax);
  std::vector<double> out(numel(shape));
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const std::size_t chunk = lens[p] * s.inner;
    const auto pv = parts[p].data();
    for (std::size_t o = 0; o < s.outer; ++o) {
      std::copy_n(pv.data() + o * chunk, chunk, out.data() + o * total * s.inner + offset);
    }
    offset += chunk;
  }
  return make(std::move(shape), std::move(out), parts,
              [s, lens, total](Node& self) {
                std::size_t offset = 0;
                for (std::size_t p = 0; p < lens.size(); ++p) {
                  const std::size_t chunk = lens[p] * s.inner;
                  if (double* g = pgrad(self, p)) {
                    for (std::size_t o = 0; o < s.outer; ++o) {
                      const double* src = self.grad.data() + o * total * s.inner + offset;
                      for (std::size_t i = 0; i < chunk; ++i) g[o * chunk + i] += src[i];
                    }
                  }
                  offset += chunk;
                }
              },
              "concat");
}

Tensor select(const Tensor& x, int axis, std::size_t index) {
  const std::size_t ax = norm_axis(axis, x.rank(), "select");
  const AxisSplit s = split(x.shape(), ax);
  if (index >= s.len) throw ShapeError("select: index out of range");
  Shape shape = x.shape();
  shape.erase(shape.begin() + static_cast<long>(ax));
  std::vector<double> out(s.outer * s.inner);
  const auto xv = x.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(xv.data() + (o * s.len + index) * s.inner, s.inner, out.data() + o * s.inner);
  }
  return make(std::move(shape), std::move(out), {x},
              [s, index](Node& self) {
                double* g = pgrad(self, 0);
                for (std::size_t o = 0; o < s.outer; ++o) {
                  for (std::size_t i = 0; i < s.inner; ++i) {
                    g[(o * s.len + index) * s.inner + i] += self.grad[o * s.inner + i];
                  }
                }
              },
              "select");
}

Tensor expand(const Tensor& x, int axis, std::size_t count) {
  const auto r = static_cast<long>(x.rank());
  const long a = axis < 0 ? axis + r + 1 : axis;
  if (a < 0 || a > r) throw ShapeError("expand: axis out of range");
  Shape shape = x.shape();
  shape.insert(shape.begin() + a, count);
  std::size_t outer = 1;
  for (long i = 0; i < a; ++i) outer *= x.shape()[static_cast<std::size_t>(i)];
  const std::size_t inner = x.numel() / std::max<std::size_t>(outer, 1);
  std::vector<double> out(outer * count * inner);
  const auto xv = x.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t c = 0; c < count; ++c) {
      std::copy_n(xv.data() + o * inner, inner, out.data() + (o * count + c) * inner);
    }
  }
  return make(std::move(shape), std::move(out), {x},
              [outer, count, inner](Node& self) {
                double* g = pgrad(self, 0);
                for (std::size_t o = 0; o < outer; ++o) {
                  for (std::size_t c = 0; c < count; ++c) {
                    for (std::size_t i = 0; i < inner; ++i) {
                      g[o * inner + i] += self.grad[(o * count + c) * inner + i];
                    }
                  }
                }
              },
              "expand");
}

Tensor gather_last(const Tensor& x, const std::vector<std::size_t>& index) {
  if (x.rank() != 2 || index.size() != x.dim(0)) throw ShapeError("gather_last: shape mismatch");
  const std::size_t c = x.dim(1);
  std::vector<double> out(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= c) throw ShapeError("gather_last: index out of range");
    out[i] = x.data()[i * c + index[i]];
  }
  return make({index.size()}, std::move(out), {x},
              [index, c](Node& self) {
                double* g = pgrad(self, 0);
                for (std::size_t i = 0; i < index.size(); ++i) g[i * c + index[i]] += self.grad[i];
              },
              "gather_last");
}

Tensor smooth_l1(const Tensor& pred, const Tensor& target) {
  require_same(pred, target, "smooth_l1");
  std::vector<double> out(pred.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double d = pred.data()[i] - target.data()[i];
    out[i] = std::abs(d) < 1.0 ? 0.5 * d * d : std::abs(d) - 0.5;
  }
  return make(pred.shape(), std::move(out), {pred, target},
              [](Node& self) {
                const auto& pv = pval(self, 0);
                const auto& tv = pval(self, 1);
                double* gp = pgrad(self, 0);
                double* gt = pgrad(self, 1);
                for (std::size_t i = 0; i < self.grad.size(); ++i) {
                  const double d = pv[i] - tv[i];
                  const double dd = std::abs(d) < 1.0 ? d : (d > 0.0 ? 1.0 : -1.0);
                  if (gp) gp[i] += self.grad[i] * dd;
                  if (gt) gt[i] -= self.grad[i] * dd;
                }
              },
              "smooth_l1");
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t pad) {
  if (x.rank() != 4 || weight.rank() != 4 || bias.rank() != 1 || weight.dim(1) != x.dim(1) ||
      weight.dim(2) != weight.dim(3) || bias.dim(0) != weight.dim(0) || stride == 0) {
    throw ShapeError("conv2d: " + to_string(x.shape()) + " with " + to_string(weight.shape()));
  }
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t O = weight.dim(0), K = weight.dim(2);
  if (H + 2 * pad < K || W + 2 * pad < K) throw ShapeError("conv2d: kernel larger than input");
  const std::size_t OH = (H + 2 * pad - K) / stride + 1;
  const std::size_t OW = (W + 2 * pad - K) / stride + 1;
  std::vector<double> out(B * O * OH * OW);
  const auto xv = x.data();
  const auto wv = weight.data();
  const auto bv = bias.data();
  // Output indices o with 0 <= o * stride + k - pad < n, as a half-open range.
  auto valid = [=](std::size_t k, std::size_t n, std::size_t out_n) {
    const long lo_num = static_cast<long>(pad) - static_cast<long>(k);
    const long lo = lo_num > 0 ? (lo_num + static_cast<long>(stride) - 1) / static_cast<long>(stride) : 0;
    const long hi_num = static_cast<long>(n) - 1 + lo_num;
    const long hi = hi_num < 0 ? 0 : std::min(static_cast<long>(out_n), hi_num / static_cast<long>(stride) + 1);
    return std::pair<std::size_t, std::size_t>(static_cast<std::size_t>(lo),
                                               static_cast<std::size_t>(std::max(lo, hi)));
  };
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t o = 0; o < O; ++o) {
      double* dst = out.data() + (b * O + o) * OH * OW;
      std::fill_n(dst, OH * OW, bv[o]);
      for (std::size_t c = 0; c < C; ++c) {
        const double* src = xv.data() + (b * C + c) * H * W;
        for (std::size_t ky = 0; ky < K; ++ky) {
          const auto [oy0, oy1] = valid(ky, H, OH);
          for (std::size_t kx = 0; kx < K; ++kx) {
            const auto [ox0, ox1] = valid(kx, W, OW);
            const double wk = wv[((o * C + c) * K + ky) * K + kx];
            for (std::size_t oy = oy0; oy < oy1; ++oy) {
              const long base = static_cast<long>((oy * stride + ky - pad) * W + kx) - static_cast<long>(pad);
              double* d = dst + oy * OW;
              for (std::size_t ox = ox0; ox < ox1; ++ox) {
                d[ox] += wk * src[base + static_cast<long>(ox * stride)];
              }
            }
          }
        }
      }
    }
  }
  return make({B, O, OH, OW}, std::move(out), {x, weight, bias},
              [=](Node& self) {
                const auto& xv = pval(self, 0);
                const auto& wv = pval(self, 1);
                double* gx = pgrad(self, 0);
                double* gw = pgrad(self, 1);
                double* gb = pgrad(self, 2);
                for (std::size_t b = 0; b < B; ++b) {
                  for (std::size_t o = 0; o < O; ++o) {
                    const double* go = self.grad.data() + (b * O + o) * OH * OW;
                    if (gb) {
                      for (std::size_t i = 0; i < OH * OW; ++i) gb[o] += go[i];
                    }
                    for (std::size_t c = 0; c < C; ++c) {
                      const double* src = xv.data() + (b * C + c) * H * W;
                      double* gsrc = gx ? gx + (b * C + c) * H * W : nullptr;
                      for (std::size_t ky = 0; ky < K; ++ky) {
                        const auto [oy0, oy1] = valid(ky, H, OH);
                        for (std::size_t kx = 0; kx < K; ++kx) {
                          const auto [ox0, ox1] = valid(kx, W, OW);
                          const std::size_t wi = ((o * C + c) * K + ky) * K + kx;
                          const double wk = wv[wi];
                          double acc = 0.0;
                          for (std::size_t oy = oy0; oy < oy1; ++oy) {
                            const long base = static_cast<long>((oy * stride + ky - pad) * W + kx) -
                                              static_cast<long>(pad);
                            const double* g = go + oy * OW;
                            for (std::size_t ox = ox0; ox < ox1; ++ox) {
                              acc += g[ox] * src[base + static_cast<long>(ox * stride)];
                            }
                            if (gsrc) {
                              for (std::size_t ox = ox0; ox < ox1; ++ox) {
                                gsrc[base + static_cast<long>(ox * stride)] += g[ox] * wk;
                              }
                            }
                          }
                          if (gw) gw[wi] += acc;
                        }
                      }
                    }
                  }
                }
              },
              "conv2d");
}

Tensor max_pool2d(const Tensor& x, std::size_t kernel, std::size_t stride) {
  if (x.rank() != 4 || kernel == 0 || stride == 0 || x.dim(2) < kernel || x.dim(3) < kernel) {
    throw ShapeError("max_pool2d: " + to_string(x.shape()));
  }
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t OH = (H - kernel) / stride + 1;
  const std::size_t OW = (W - kernel) / stride + 1;
  std::vector<double> out(B * C * OH * OW);
  std::vector<std::size_t> arg(out.size());
  const auto xv = x.data();
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    for (std::size_t oy = 0; oy < OH; ++oy) {
      for (std::size_t ox = 0; ox < OW; ++ox) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_i = 0;
        for (std::size_t ky = 0; ky < kernel; ++ky) {
          for (std::size_t kx = 0; kx < kernel; ++kx) {
            const std::size_t i = bc * H * W + (oy * stride + ky) * W + ox * stride + kx;
            if (xv[i] > best) {
              best = xv[i];
              best_i = i;
            }
          }
        }
        const std::size_t o = (bc * OH + oy) * OW + ox;
        out[o] = best;
        arg[o] = best_i;
      }
    }
  }
  return make({B, C, OH, OW}, std::move(out), {x},
              [arg = std::move(arg)](Node& self) {
                double* g = pgrad(self, 0);
                for (std::size_t i = 0; i < arg.size(); ++i) g[arg[i]] += self.grad[i];
              },
              "max_pool2d");
}

Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            const std::vector<std::uint8_t>& key_valid) {
  if (q.rank() != 4 || k.shape() != v.shape() || k.rank() != 4 || q.dim(0) != k.dim(0) ||
      q.dim(1) != k.dim(1) || q.dim(3) != k.dim(3)) {
    throw ShapeError("attention: q " + to_string(q.shape()) + " k " + to_string(k.shape()));
  }
  const std::size_t n = q.dim(0), h = q.dim(1), tq = q.dim(2), tk = k.dim(2), d = q.dim(3);
  Tensor scores = scale(bmm(q, k, true), 1.0 / std::sqrt(static_cast<double>(d)));
  if (!key_valid.empty()) {
    if (key_valid.size() != n * tk) throw ShapeError("attention: key mask size mismatch");
    std::vector<std::uint8_t> mask(n * h * tq * tk);
    for (std::size_t i = 0; i < mask.size(); ++i) {
      const std::size_t key = i % tk;
      const std::size_t batch = i / (h * tq * tk);
      mask[i] = key_valid[batch * tk + key] ? 0 : 1;
    }
    scores = masked_fill(scores, mask, kAttentionMaskValue);
  }
  return bmm(softmax(scores, -1), v);
}

}  // namespace gcnav::dc

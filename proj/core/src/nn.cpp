#include "msv/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <type_traits>

#include "gemm.hpp"

namespace msv {
inline namespace MSV_PRECISION_NS {

namespace {

void require_map(const Tensor& x, const char* op) {
  if (!x.defined() || x.rank() != 4) {
    throw ShapeError(std::string(op) + ": expected N x C x H x W, got " +
                     (x.defined() ? x.shape().str() : "<undefined>"));
  }
}

struct ConvGeometry {
  std::size_t n, cin, h, w, cout, k, stride, pad, ho, wo;
  std::size_t patch() const { return cin * k * k; }
  std::size_t pixels() const { return ho * wo; }
  bool direct() const { return k == 1 && stride == 1 && pad == 0; }
};

void im2col(const real* x, const ConvGeometry& g, real* cols) {
  const std::size_t p = g.pixels();
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        real* row = cols + ((c * g.k + ki) * g.k + kj) * p;
        for (std::size_t oi = 0; oi < g.ho; ++oi) {
          const auto ii = static_cast<long>(oi * g.stride + ki) -
                          static_cast<long>(g.pad);
          real* dst = row + oi * g.wo;
          if (ii < 0 || ii >= static_cast<long>(g.h)) {
            std::fill_n(dst, g.wo, real(0));
            continue;
          }
          const real* src = x + (c * g.h + static_cast<std::size_t>(ii)) * g.w;
          for (std::size_t oj = 0; oj < g.wo; ++oj) {
            const auto jj = static_cast<long>(oj * g.stride + kj) -
                            static_cast<long>(g.pad);
            dst[oj] = (jj < 0 || jj >= static_cast<long>(g.w))
                          ? real(0)
                          : src[static_cast<std::size_t>(jj)];
          }
        }
      }
    }
  }
}

void col2im_add(const real* cols, const ConvGeometry& g, real* gx) {
  const std::size_t p = g.pixels();
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        const real* row = cols + ((c * g.k + ki) * g.k + kj) * p;
        for (std::size_t oi = 0; oi < g.ho; ++oi) {
          const auto ii = static_cast<long>(oi * g.stride + ki) -
                          static_cast<long>(g.pad);
          if (ii < 0 || ii >= static_cast<long>(g.h)) continue;
          real* dst = gx + (c * g.h + static_cast<std::size_t>(ii)) * g.w;
          for (std::size_t oj = 0; oj < g.wo; ++oj) {
            const auto jj = static_cast<long>(oj * g.stride + kj) -
                            static_cast<long>(g.pad);
            if (jj < 0 || jj >= static_cast<long>(g.w)) continue;
            dst[static_cast<std::size_t>(jj)] += row[oi * g.wo + oj];
          }
        }
      }
    }
  }
}


}  // namespace

Conv2dParams Conv2dParams::create(std::size_t in_channels,
                                  std::size_t out_channels, std::size_t kernel,
                                  Rng& rng, std::size_t stride) {
  if (kernel != 1 && kernel != 3 && kernel != 5 && kernel != 7) {
    throw ContractError("conv kernel must be 1, 3, 5 or 7, got " +
                        std::to_string(kernel));
  }
  const real bound =
      std::sqrt(real(6) / static_cast<real>(in_channels * kernel * kernel));
  Conv2dParams p;
  p.weight = Tensor::uniform(Shape{out_channels, in_channels, kernel, kernel},
                             rng, -bound, bound, true);
  p.bias = Tensor::zeros(Shape{out_channels}, true);
  p.stride = stride;
  p.padding = kernel / 2;
  return p;
}

void Conv2dParams::collect(ParameterList& out,
                           const std::string& prefix) const {
  out.add(prefix + "weight", weight);
  if (bias.defined()) out.add(prefix + "bias", bias);
}

Tensor conv2d(const Tensor& x, const Conv2dParams& p) {
  require_map(x, "conv2d");
  const Tensor& w = p.weight;
  if (w.rank() != 4 || w.dim(2) != w.dim(3)) {
    throw ShapeError("conv2d: weight must be C_out x C_in x k x k, got " +
                     w.shape().str());
  }
  if (x.dim(1) != w.dim(1)) {
    throw ShapeError("conv2d: input " + x.shape().str() + " has " +
                     std::to_string(x.dim(1)) + " channels, weight " +
                     w.shape().str() + " expects " + std::to_string(w.dim(1)));
  }
  if (p.stride == 0) throw ContractError("conv2d: stride must be positive");
  ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(2),
                 p.stride, p.padding, 0, 0};
  if (g.h + 2 * g.pad < g.k || g.w + 2 * g.pad < g.k) {
    throw ShapeError("conv2d: input " + x.shape().str() +
                     " smaller than kernel");
  }
  g.ho = (g.h + 2 * g.pad - g.k) / g.stride + 1;
  g.wo = (g.w + 2 * g.pad - g.k) / g.stride + 1;
  const std::size_t kk = g.patch();
  const std::size_t pix = g.pixels();
  const std::size_t in_plane = g.cin * g.h * g.w;
  const std::size_t out_plane = g.cout * pix;

  std::vector<real> cols;
  if (!g.direct()) {
    cols.resize(g.n * kk * pix);
    for (std::size_t n = 0; n < g.n; ++n) {
      im2col(x.data().data() + n * in_plane, g, cols.data() + n * kk * pix);
    }
  }
  std::vector<real> out(g.n * out_plane);
  const bool has_bias = p.bias.defined();
  for (std::size_t n = 0; n < g.n; ++n) {
    real* o = out.data() + n * out_plane;
    for (std::size_t c = 0; c < g.cout; ++c) {
      std::fill_n(o + c * pix, pix, has_bias ? p.bias.data()[c] : real(0));
    }
    const real* src =
        g.direct() ? x.data().data() + n * in_plane : cols.data() + n * kk * pix;
    detail::gemm(false, false, g.cout, pix, kk, 1, w.data().data(), kk, src,
                 pix, 1, o, pix);
  }
  std::vector<Tensor> inputs{x, w};
  if (has_bias) inputs.push_back(p.bias);
  const Tensor bias = p.bias;
  return finish_op(
      "conv2d", Tensor(Shape{g.n, g.cout, g.ho, g.wo}, std::move(out)),
      std::move(inputs),
      [x, w, bias, g, cols = std::move(cols)](std::span<const real> grad) {
        const std::size_t kk = g.patch();
        const std::size_t pix = g.pixels();
        const std::size_t in_plane = g.cin * g.h * g.w;
        const std::size_t out_plane = g.cout * pix;
        std::vector<real> gcols(g.direct() ? 0 : kk * pix);
        for (std::size_t n = 0; n < g.n; ++n) {
          const real* gn = grad.data() + n * out_plane;
          const real* src = g.direct() ? x.data().data() + n * in_plane
                                       : cols.data() + n * kk * pix;
          if (w.requires_grad()) {
            detail::gemm(false, true, g.cout, kk, pix, 1, gn, pix, src, pix, 1,
                         w.grad_buffer().data(), kk);
          }
          if (bias.defined() && bias.requires_grad()) {
            auto gb = bias.grad_buffer();
            for (std::size_t c = 0; c < g.cout; ++c) {
              real acc = 0;
              for (std::size_t i = 0; i < pix; ++i) acc += gn[c * pix + i];
              gb[c] += acc;
            }
          }
          if (x.requires_grad()) {
            real* gx = x.grad_buffer().data() + n * in_plane;
            if (g.direct()) {
              detail::gemm(true, false, kk, pix, g.cout, 1, w.data().data(),
                           kk, gn, pix, 1, gx, pix);
            } else {
              detail::gemm(true, false, kk, pix, g.cout, 1, w.data().data(),
                           kk, gn, pix, 0, gcols.data(), pix);
              col2im_add(gcols.data(), g, gx);
            }
          }
        }
      });
}

BatchNormState BatchNormState::create(std::size_t channels) {
  BatchNormState s;
  s.gamma = Tensor::ones(Shape{channels}, true);
  s.beta = Tensor::zeros(Shape{channels}, true);
  s.running_mean = Tensor::zeros(Shape{channels});
  s.running_var = Tensor::ones(Shape{channels});
  return s;
}

void BatchNormState::collect(ParameterList& out,
                             const std::string& prefix) const {
  out.add(prefix + "gamma", gamma);
  out.add(prefix + "beta", beta);
  out.add(prefix + "running_mean", running_mean, false);
  out.add(prefix + "running_var", running_var, false);
}

Tensor batchnorm(const Tensor& x, BatchNormState& s) {
  if (!x.defined() || x.numel() == 0) {
    throw ContractError("batchnorm: empty batch");
  }
  require_map(x, "batchnorm");
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (s.gamma.numel() != c) {
    throw ShapeError("batchnorm: input " + x.shape().str() + " has " +
                     std::to_string(c) + " channels, state has " +
                     std::to_string(s.gamma.numel()));
  }
  const std::size_t count = n * hw;
  const auto xv = x.data();
  const auto gamma = s.gamma.data();
  const auto beta = s.beta.data();
  std::vector<real> mean(c), invstd(c);
  const bool train = s.mode == NormMode::kTrain;
  if (train) {
    auto rm = s.running_mean.mutable_data();
    auto rv = s.running_var.mutable_data();
    for (std::size_t ch = 0; ch < c; ++ch) {
      double acc = 0;
      for (std::size_t b = 0; b < n; ++b) {
        const real* p = xv.data() + (b * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) acc += p[i];
      }
      const double mu = acc / static_cast<double>(count);
      double var = 0;
      for (std::size_t b = 0; b < n; ++b) {
        const real* p = xv.data() + (b * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          const double d = p[i] - mu;
          var += d * d;
        }
      }
      var /= static_cast<double>(count);
      mean[ch] = static_cast<real>(mu);
      invstd[ch] = static_cast<real>(1.0 / std::sqrt(var + s.eps));
      const double unbiased =
          count > 1 ? var * static_cast<double>(count) /
                          static_cast<double>(count - 1)
                    : var;
      rm[ch] = static_cast<real>((1 - s.momentum) * rm[ch] + s.momentum * mu);
      rv[ch] =
          static_cast<real>((1 - s.momentum) * rv[ch] + s.momentum * unbiased);
    }
  } else {
    const auto rm = s.running_mean.data();
    const auto rv = s.running_var.data();
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = rm[ch];
      invstd[ch] = real(1) / std::sqrt(rv[ch] + s.eps);
    }
  }
  std::vector<real> out(x.numel());
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (b * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        out[base + i] =
            gamma[ch] * (xv[base + i] - mean[ch]) * invstd[ch] + beta[ch];
      }
    }
  }
  const Tensor gm = s.gamma, bt = s.beta;
  return finish_op(
      "batchnorm", Tensor(x.shape(), std::move(out)), {x, gm, bt},
      [x, gm, bt, mean, invstd, n, c, hw, train](std::span<const real> g) {
        const auto xv = x.data();
        const auto gamma = gm.data();
        const real m = static_cast<real>(n * hw);
        for (std::size_t ch = 0; ch < c; ++ch) {
          real sum_g = 0, sum_gx = 0;
          for (std::size_t b = 0; b < n; ++b) {
            const std::size_t base = (b * c + ch) * hw;
            for (std::size_t i = 0; i < hw; ++i) {
              const real xhat = (xv[base + i] - mean[ch]) * invstd[ch];
              sum_g += g[base + i];
              sum_gx += g[base + i] * xhat;
            }
          }
          if (gm.requires_grad()) gm.grad_buffer()[ch] += sum_gx;
          if (bt.requires_grad()) bt.grad_buffer()[ch] += sum_g;
          if (!x.requires_grad()) continue;
          auto gx = x.grad_buffer();
          for (std::size_t b = 0; b < n; ++b) {
            const std::size_t base = (b * c + ch) * hw;
            for (std::size_t i = 0; i < hw; ++i) {
              if (train) {
                const real xhat = (xv[base + i] - mean[ch]) * invstd[ch];
                gx[base + i] += gamma[ch] * invstd[ch] / m *
                                (m * g[base + i] - sum_g - xhat * sum_gx);
              } else {
                gx[base + i] += g[base + i] * gamma[ch] * invstd[ch];
              }
            }
          }
        }
      });
}

namespace {

void require_divisible(const Tensor& x, std::size_t m, std::size_t n,
                       const char* op) {
  require_map(x, op);
  if (m == 0 || n == 0 || x.dim(2) % m != 0 || x.dim(3) % n != 0) {
    throw ShapeError(std::string(op) + ": spatial extents " +
                     std::to_string(x.dim(2)) + "x" + std::to_string(x.dim(3)) +
                     " are not divisible by window " + std::to_string(m) +
                     "x" + std::to_string(n) + "; pad the input first");
  }
}

}  // namespace

Tensor avg_pool(const Tensor& x, std::size_t m, std::size_t n) {
  require_divisible(x, m, n, "avg_pool");
  const std::size_t planes = x.dim(0) * x.dim(1);
  const std::size_t h = x.dim(2), w = x.dim(3), ho = h / m, wo = w / n;
  const real inv = real(1) / static_cast<real>(m * n);
  using wide = std::conditional_t<std::is_same_v<real, float>, double, long double>;
  const auto xv = x.data();
  std::vector<real> out(planes * ho * wo);
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t i = 0; i < ho; ++i) {
      for (std::size_t j = 0; j < wo; ++j) {
        // Wide accumulator and a true division keep constant windows exact.
        wide acc = 0;
        for (std::size_t a = 0; a < m; ++a) {
          for (std::size_t b = 0; b < n; ++b) {
            acc += xv[(p * h + i * m + a) * w + j * n + b];
          }
        }
        out[(p * ho + i) * wo + j] = static_cast<real>(acc / static_cast<wide>(m * n));
      }
    }
  }
  return finish_op(
      "avg_pool", Tensor(Shape{x.dim(0), x.dim(1), ho, wo}, std::move(out)),
      {x}, [x, planes, h, w, ho, wo, m, n, inv](std::span<const real> g) {
        auto gx = x.grad_buffer();
        for (std::size_t p = 0; p < planes; ++p) {
          for (std::size_t i = 0; i < h; ++i) {
            for (std::size_t j = 0; j < w; ++j) {
              gx[(p * h + i) * w + j] += g[(p * ho + i / m) * wo + j / n] * inv;
            }
          }
        }
      });
}

Tensor max_pool(const Tensor& x, std::size_t m, std::size_t n) {
  require_divisible(x, m, n, "max_pool");
  const std::size_t planes = x.dim(0) * x.dim(1);
  const std::size_t h = x.dim(2), w = x.dim(3), ho = h / m, wo = w / n;
  const auto xv = x.data();
  std::vector<real> out(planes * ho * wo);
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t i = 0; i < ho; ++i) {
      for (std::size_t j = 0; j < wo; ++j) {
        std::size_t best = (p * h + i * m) * w + j * n;
        for (std::size_t a = 0; a < m; ++a) {
          for (std::size_t b = 0; b < n; ++b) {
            const std::size_t idx = (p * h + i * m + a) * w + j * n + b;
            if (xv[idx] > xv[best]) best = idx;
          }
        }
        const std::size_t o = (p * ho + i) * wo + j;
        out[o] = xv[best];
        argmax[o] = best;
      }
    }
  }
  return finish_op(
      "max_pool", Tensor(Shape{x.dim(0), x.dim(1), ho, wo}, std::move(out)),
      {x}, [x, argmax = std::move(argmax)](std::span<const real> g) {
        auto gx = x.grad_buffer();
        for (std::size_t o = 0; o < g.size(); ++o) gx[argmax[o]] += g[o];
      });
}

Tensor unpool(const Tensor& y, std::size_t m, std::size_t n) {
  require_map(y, "unpool");
  if (m == 0 || n == 0) throw ShapeError("unpool: window must be positive");
  const std::size_t planes = y.dim(0) * y.dim(1);
  const std::size_t h = y.dim(2), w = y.dim(3), ho = h * m, wo = w * n;
  const auto yv = y.data();
  std::vector<real> out(planes * ho * wo);
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t i = 0; i < ho; ++i) {
      for (std::size_t j = 0; j < wo; ++j) {
        out[(p * ho + i) * wo + j] = yv[(p * h + i / m) * w + j / n];
      }
    }
  }
  return finish_op(
      "unpool", Tensor(Shape{y.dim(0), y.dim(1), ho, wo}, std::move(out)), {y},
      [y, planes, h, w, ho, wo, m, n](std::span<const real> g) {
        auto gy = y.grad_buffer();
        for (std::size_t p = 0; p < planes; ++p) {
          for (std::size_t i = 0; i < ho; ++i) {
            for (std::size_t j = 0; j < wo; ++j) {
              gy[(p * h + i / m) * w + j / n] += g[(p * ho + i) * wo + j];
            }
          }
        }
      });
}

Tensor avg_pool_same(const Tensor& x, std::size_t k) {
  require_map(x, "avg_pool_same");
  const std::size_t planes = x.dim(0) * x.dim(1);
  const std::size_t h = x.dim(2), w = x.dim(3);
  const auto xv = x.data();
  std::vector<real> out(x.numel());
  std::vector<real> inv_count(h * w);
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      const std::size_t rows = std::min(k, h - i);
      const std::size_t cols = std::min(k, w - j);
      inv_count[i * w + j] = real(1) / static_cast<real>(rows * cols);
    }
  }
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        real acc = 0;
        for (std::size_t a = i; a < std::min(i + k, h); ++a) {
          for (std::size_t b = j; b < std::min(j + k, w); ++b) {
            acc += xv[(p * h + a) * w + b];
          }
        }
        out[(p * h + i) * w + j] = acc * inv_count[i * w + j];
      }
    }
  }
  return finish_op("avg_pool_same", Tensor(x.shape(), std::move(out)), {x},
                   [x, planes, h, w, k, inv_count](std::span<const real> g) {
                     auto gx = x.grad_buffer();
                     for (std::size_t p = 0; p < planes; ++p) {
                       for (std::size_t i = 0; i < h; ++i) {
                         for (std::size_t j = 0; j < w; ++j) {
                           const real v =
                               g[(p * h + i) * w + j] * inv_count[i * w + j];
                           for (std::size_t a = i; a < std::min(i + k, h); ++a) {
                             for (std::size_t b = j; b < std::min(j + k, w);
                                  ++b) {
                               gx[(p * h + a) * w + b] += v;
                             }
                           }
                         }
                       }
                     }
                   });
}

Tensor max_pool_same(const Tensor& x, std::size_t k) {
  require_map(x, "max_pool_same");
  const std::size_t planes = x.dim(0) * x.dim(1);
  const std::size_t h = x.dim(2), w = x.dim(3);
  const auto xv = x.data();
  std::vector<real> out(x.numel());
  std::vector<std::size_t> argmax(x.numel());
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        std::size_t best = (p * h + i) * w + j;
        for (std::size_t a = i; a < std::min(i + k, h); ++a) {
          for (std::size_t b = j; b < std::min(j + k, w); ++b) {
            const std::size_t idx = (p * h + a) * w + b;
            if (xv[idx] > xv[best]) best = idx;
          }
        }
        out[(p * h + i) * w + j] = xv[best];
        argmax[(p * h + i) * w + j] = best;
      }
    }
  }
  return finish_op("max_pool_same", Tensor(x.shape(), std::move(out)), {x},
                   [x, argmax = std::move(argmax)](std::span<const real> g) {
                     auto gx = x.grad_buffer();
                     for (std::size_t o = 0; o < g.size(); ++o) {
                       gx[argmax[o]] += g[o];
                     }
                   });
}

Tensor channel_avg_pool(const Tensor& x) {
  require_map(x, "channel_avg_pool");
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  const auto xv = x.data();
  const real inv = real(1) / static_cast<real>(c);
  std::vector<real> out(n * hw, real(0));
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t i = 0; i < hw; ++i) {
        out[b * hw + i] += xv[(b * c + ch) * hw + i] * inv;
      }
    }
  }
  return finish_op(
      "channel_avg_pool",
      Tensor(Shape{n, 1, x.dim(2), x.dim(3)}, std::move(out)), {x},
      [x, n, c, hw, inv](std::span<const real> g) {
        auto gx = x.grad_buffer();
        for (std::size_t b = 0; b < n; ++b) {
          for (std::size_t ch = 0; ch < c; ++ch) {
            for (std::size_t i = 0; i < hw; ++i) {
              gx[(b * c + ch) * hw + i] += g[b * hw + i] * inv;
            }
          }
        }
      });
}

Tensor channel_max_pool(const Tensor& x) {
  require_map(x, "channel_max_pool");
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  const auto xv = x.data();
  std::vector<real> out(n * hw);
  std::vector<std::size_t> argmax(n * hw);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t i = 0; i < hw; ++i) {
      std::size_t best = b * c * hw + i;
      for (std::size_t ch = 1; ch < c; ++ch) {
        const std::size_t idx = (b * c + ch) * hw + i;
        if (xv[idx] > xv[best]) best = idx;
      }
      out[b * hw + i] = xv[best];
      argmax[b * hw + i] = best;
    }
  }
  return finish_op("channel_max_pool",
                   Tensor(Shape{n, 1, x.dim(2), x.dim(3)}, std::move(out)),
                   {x}, [x, argmax = std::move(argmax)](std::span<const real> g) {
                     auto gx = x.grad_buffer();
                     for (std::size_t o = 0; o < g.size(); ++o) {
                       gx[argmax[o]] += g[o];
                     }
                   });
}

namespace {

struct Tap {
  std::size_t i0, i1;
  real w0, w1;
};

// Half-pixel-center source taps for one output axis.
std::vector<Tap> bilinear_taps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
    if (src < 0) src = 0;
    auto i0 = static_cast<std::size_t>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    const double frac = src - static_cast<double>(i0);
    taps[o] = {i0, i1, static_cast<real>(1.0 - frac), static_cast<real>(frac)};
  }
  return taps;
}

}  // namespace

Tensor upsample_bilinear(const Tensor& x, std::size_t factor) {
  require_map(x, "upsample_bilinear");
  return resize_bilinear(x, x.dim(2) * factor, x.dim(3) * factor);
}

Tensor resize_bilinear(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  require_map(x, "resize_bilinear");
  if (out_h == 0 || out_w == 0) {
    throw ShapeError("resize_bilinear: output extents must be positive");
  }
  const std::size_t planes = x.dim(0) * x.dim(1);
  const std::size_t h = x.dim(2), w = x.dim(3);
  if (h == out_h && w == out_w) return x;
  const auto ty = bilinear_taps(h, out_h);
  const auto tx = bilinear_taps(w, out_w);
  const auto xv = x.data();
  std::vector<real> out(planes * out_h * out_w);
  for (std::size_t p = 0; p < planes; ++p) {
    const real* src = xv.data() + p * h * w;
    for (std::size_t i = 0; i < out_h; ++i) {
      const Tap& a = ty[i];
      for (std::size_t j = 0; j < out_w; ++j) {
        const Tap& b = tx[j];
        out[(p * out_h + i) * out_w + j] =
            a.w0 * (b.w0 * src[a.i0 * w + b.i0] + b.w1 * src[a.i0 * w + b.i1]) +
            a.w1 * (b.w0 * src[a.i1 * w + b.i0] + b.w1 * src[a.i1 * w + b.i1]);
      }
    }
  }
  return finish_op(
      "resize_bilinear",
      Tensor(Shape{x.dim(0), x.dim(1), out_h, out_w}, std::move(out)), {x},
      [x, planes, h, w, out_h, out_w, ty, tx](std::span<const real> g) {
        auto gx = x.grad_buffer();
        for (std::size_t p = 0; p < planes; ++p) {
          real* dst = gx.data() + p * h * w;
          for (std::size_t i = 0; i < out_h; ++i) {
            const Tap& a = ty[i];
            for (std::size_t j = 0; j < out_w; ++j) {
              const Tap& b = tx[j];
              const real v = g[(p * out_h + i) * out_w + j];
              dst[a.i0 * w + b.i0] += v * a.w0 * b.w0;
              dst[a.i0 * w + b.i1] += v * a.w0 * b.w1;
              dst[a.i1 * w + b.i0] += v * a.w1 * b.w0;
              dst[a.i1 * w + b.i1] += v * a.w1 * b.w1;
            }
          }
        }
      });
}

Tensor global_avg_pool(const Tensor& x) {
  require_map(x, "global_avg_pool");
  return avg_pool(x, x.dim(2), x.dim(3));
}

Tensor global_max_pool(const Tensor& x) {
  require_map(x, "global_max_pool");
  return max_pool(x, x.dim(2), x.dim(3));
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw ShapeError("softmax: axis out of range for " + x.shape().str());
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const std::size_t len = x.dim(axis);
  const auto xv = x.data();
  std::vector<real> out(x.numel());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * len * inner + i;
      real mx = xv[base];
      for (std::size_t k = 1; k < len; ++k) mx = std::max(mx, xv[base + k * inner]);
      real total = 0;
      for (std::size_t k = 0; k < len; ++k) {
        const real e = std::exp(xv[base + k * inner] - mx);
        out[base + k * inner] = e;
        total += e;
      }
      for (std::size_t k = 0; k < len; ++k) out[base + k * inner] /= total;
    }
  }
  Tensor result(x.shape(), std::move(out));
  return finish_op("softmax", result, {x},
                   [x, result, outer, inner, len](std::span<const real> g) {
                     const auto y = result.data();
                     auto gx = x.grad_buffer();
                     for (std::size_t o = 0; o < outer; ++o) {
                       for (std::size_t i = 0; i < inner; ++i) {
                         const std::size_t base = o * len * inner + i;
                         real dot = 0;
                         for (std::size_t k = 0; k < len; ++k) {
                           dot += g[base + k * inner] * y[base + k * inner];
                         }
                         for (std::size_t k = 0; k < len; ++k) {
                           const std::size_t idx = base + k * inner;
                           gx[idx] += y[idx] * (g[idx] - dot);
                         }
                       }
                     }
                   });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  real eps) {
  const std::size_t d = x.dim(x.rank() - 1);
  if (gamma.numel() != d || beta.numel() != d) {
    throw ShapeError("layer_norm: input " + x.shape().str() +
                     " needs gamma/beta of width " + std::to_string(d));
  }
  const std::size_t rows = x.numel() / d;
  const auto xv = x.data();
  const auto gv = gamma.data();
  const auto bv = beta.data();
  std::vector<real> out(x.numel()), xhat(x.numel()), invstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const real* p = xv.data() + r * d;
    real mu = 0;
    for (std::size_t i = 0; i < d; ++i) mu += p[i];
    mu /= static_cast<real>(d);
    real var = 0;
    for (std::size_t i = 0; i < d; ++i) var += (p[i] - mu) * (p[i] - mu);
    var /= static_cast<real>(d);
    invstd[r] = real(1) / std::sqrt(var + eps);
    for (std::size_t i = 0; i < d; ++i) {
      xhat[r * d + i] = (p[i] - mu) * invstd[r];
      out[r * d + i] = gv[i] * xhat[r * d + i] + bv[i];
    }
  }
  return finish_op(
      "layer_norm", Tensor(x.shape(), std::move(out)), {x, gamma, beta},
      [x, gamma, beta, xhat = std::move(xhat), invstd = std::move(invstd), rows,
       d](std::span<const real> g) {
        const auto gv = gamma.data();
        if (gamma.requires_grad() || beta.requires_grad()) {
          auto gg = gamma.grad_buffer();
          auto gb = beta.grad_buffer();
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t i = 0; i < d; ++i) {
              gg[i] += g[r * d + i] * xhat[r * d + i];
              gb[i] += g[r * d + i];
            }
          }
        }
        if (!x.requires_grad()) return;
        auto gx = x.grad_buffer();
        const real inv_d = real(1) / static_cast<real>(d);
        for (std::size_t r = 0; r < rows; ++r) {
          real mean_g = 0, mean_gx = 0;
          for (std::size_t i = 0; i < d; ++i) {
            const real dxh = g[r * d + i] * gv[i];
            mean_g += dxh;
            mean_gx += dxh * xhat[r * d + i];
          }
          mean_g *= inv_d;
          mean_gx *= inv_d;
          for (std::size_t i = 0; i < d; ++i) {
            const real dxh = g[r * d + i] * gv[i];
            gx[r * d + i] +=
                invstd[r] * (dxh - mean_g - xhat[r * d + i] * mean_gx);
          }
        }
      });
}

Tensor depthwise_conv1d(const Tensor& x, const Tensor& weight,
                        const Tensor& bias, bool reverse) {
  if (x.rank() != 3 || weight.rank() != 2 || weight.dim(0) != x.dim(2) ||
      bias.numel() != x.dim(2)) {
    throw ShapeError("depthwise_conv1d: input " + x.shape().str() +
                     " incompatible with weight " + weight.shape().str());
  }
  const std::size_t batch = x.dim(0), len = x.dim(1), d = x.dim(2);
  const std::size_t k = weight.dim(1);
  const auto xv = x.data();
  const auto wv = weight.data();
  const auto bv = bias.data();
  // Tap j of output t reads source index t - (k-1) + j (causal) or
  // t + (k-1) - j (anti-causal).
  auto source = [k, len, reverse](std::size_t t, std::size_t j) -> long {
    const long off = static_cast<long>(k - 1) - static_cast<long>(j);
    const long s = reverse ? static_cast<long>(t) + off : static_cast<long>(t) - off;
    return (s < 0 || s >= static_cast<long>(len)) ? -1 : s;
  };
  std::vector<real> out(x.numel());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < len; ++t) {
      real* o = out.data() + (b * len + t) * d;
      for (std::size_t c = 0; c < d; ++c) o[c] = bv[c];
      for (std::size_t j = 0; j < k; ++j) {
        const long s = source(t, j);
        if (s < 0) continue;
        const real* src = xv.data() + (b * len + static_cast<std::size_t>(s)) * d;
        for (std::size_t c = 0; c < d; ++c) o[c] += wv[c * k + j] * src[c];
      }
    }
  }
  return finish_op(
      "depthwise_conv1d", Tensor(x.shape(), std::move(out)), {x, weight, bias},
      [x, weight, bias, batch, len, d, k, source](std::span<const real> g) {
        const auto xv = x.data();
        const auto wv = weight.data();
        std::span<real> gx, gw, gb;
        if (x.requires_grad()) gx = x.grad_buffer();
        if (weight.requires_grad()) gw = weight.grad_buffer();
        if (bias.requires_grad()) gb = bias.grad_buffer();
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t t = 0; t < len; ++t) {
            const real* go = g.data() + (b * len + t) * d;
            if (!gb.empty()) {
              for (std::size_t c = 0; c < d; ++c) gb[c] += go[c];
            }
            for (std::size_t j = 0; j < k; ++j) {
              const long s = source(t, j);
              if (s < 0) continue;
              const std::size_t row = (b * len + static_cast<std::size_t>(s)) * d;
              for (std::size_t c = 0; c < d; ++c) {
                if (!gw.empty()) gw[c * k + j] += go[c] * xv[row + c];
                if (!gx.empty()) gx[row + c] += go[c] * wv[c * k + j];
              }
            }
          }
        }
      });
}

}  // namespace MSV_PRECISION_NS
}  // namespace msv

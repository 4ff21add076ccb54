#include "msv/ops.hpp"

#include <algorithm>
#include <cmath>

#include "gemm.hpp"

namespace msv {
inline namespace MSV_PRECISION_NS {

namespace {

struct Broadcast {
  Shape out;
  std::size_t div_a = 1;  // operand index = output index / div
  std::size_t div_b = 1;
};

// True when `small` equals `big` on a prefix and is 1 on the remainder.
bool trailing_compatible(const Shape& small, const Shape& big) {
  if (small.rank() != big.rank()) return false;
  std::size_t k = 0;
  while (k < big.rank() && small[k] == big[k]) ++k;
  for (std::size_t j = k; j < big.rank(); ++j) {
    if (small[j] != 1) return false;
  }
  return true;
}

Broadcast plan_broadcast(const Shape& a, const Shape& b) {
  if (a == b) return {a, 1, 1};
  const std::size_t na = a.numel();
  const std::size_t nb = b.numel();
  if (nb == 1 && (na > 1 || a.rank() >= b.rank())) return {a, 1, na};
  if (na == 1) return {b, nb, 1};
  if (trailing_compatible(b, a)) return {a, 1, na / nb};
  if (trailing_compatible(a, b)) return {b, nb / na, 1};
  throw ShapeError("incompatible shapes " + a.str() + " and " + b.str() +
                   " (only trailing singleton broadcasting is supported)");
}

template <class Fwd, class Dfa, class Dfb>
Tensor binary_op(std::string_view name, const Tensor& a, const Tensor& b,
                 Fwd f, Dfa dfa, Dfb dfb) {
  const Broadcast bc = plan_broadcast(a.shape(), b.shape());
  const std::size_t n = bc.out.numel();
  std::vector<real> out(n);
  const auto av = a.data();
  const auto bv = b.data();
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = f(av[i / bc.div_a], bv[i / bc.div_b]);
  }
  return finish_op(name, Tensor(bc.out, std::move(out)), {a, b},
                   [a, b, bc, dfa, dfb](std::span<const real> g) {
                     const auto av = a.data();
                     const auto bv = b.data();
                     if (a.requires_grad()) {
                       auto ga = a.grad_buffer();
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         const std::size_t ia = i / bc.div_a;
                         ga[ia] += g[i] * dfa(av[ia], bv[i / bc.div_b]);
                       }
                     }
                     if (b.requires_grad()) {
                       auto gb = b.grad_buffer();
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         const std::size_t ib = i / bc.div_b;
                         gb[ib] += g[i] * dfb(av[i / bc.div_a], bv[ib]);
                       }
                     }
                   });
}

// Unary op whose derivative is expressed through input x and output y.
template <class Fwd, class Df>
Tensor unary_op(std::string_view name, const Tensor& a, Fwd f, Df df) {
  const auto av = a.data();
  std::vector<real> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  Tensor result(a.shape(), std::move(out));
  return finish_op(name, result, {a},
                   [a, result, df](std::span<const real> g) {
                     const auto x = a.data();
                     const auto y = result.data();
                     auto ga = a.grad_buffer();
                     for (std::size_t i = 0; i < g.size(); ++i) {
                       ga[i] += g[i] * df(x[i], y[i]);
                     }
                   });
}

real stable_sigmoid(real x) {
  if (x >= 0) return real(1) / (real(1) + std::exp(-x));
  const real e = std::exp(x);
  return e / (real(1) + e);
}

real stable_softplus(real x) {
  return std::max(x, real(0)) + std::log1p(std::exp(-std::abs(x)));
}

struct Blocks {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
};

Blocks blocks_along(const Shape& s, std::size_t axis) {
  if (axis >= s.rank()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " +
                     s.str());
  }
  Blocks b;
  for (std::size_t i = 0; i < axis; ++i) b.outer *= s[i];
  b.extent = s[axis];
  for (std::size_t i = axis + 1; i < s.rank(); ++i) b.inner *= s[i];
  return b;
}

}  // namespace

Shape broadcast_shape(const Shape& a, const Shape& b) {
  return plan_broadcast(a, b).out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      "add", a, b, [](real x, real y) { return x + y; },
      [](real, real) { return real(1); }, [](real, real) { return real(1); });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      "sub", a, b, [](real x, real y) { return x - y; },
      [](real, real) { return real(1); }, [](real, real) { return real(-1); });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      "mul", a, b, [](real x, real y) { return x * y; },
      [](real, real y) { return y; }, [](real x, real) { return x; });
}

Tensor neg(const Tensor& a) { return scale(a, real(-1)); }

Tensor scale(const Tensor& a, real factor) {
  return unary_op(
      "scale", a, [factor](real x) { return x * factor; },
      [factor](real, real) { return factor; });
}

Tensor add_scalar(const Tensor& a, real value) {
  return unary_op(
      "add_scalar", a, [value](real x) { return x + value; },
      [](real, real) { return real(1); });
}

Tensor relu(const Tensor& a) {
  return unary_op(
      "relu", a, [](real x) { return x > 0 ? x : real(0); },
      [](real x, real) { return x > 0 ? real(1) : real(0); });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op("sigmoid", a, stable_sigmoid,
                  [](real, real y) { return y * (real(1) - y); });
}

Tensor silu(const Tensor& a) {
  return unary_op(
      "silu", a, [](real x) { return x * stable_sigmoid(x); },
      [](real x, real) {
        const real s = stable_sigmoid(x);
        return s * (real(1) + x * (real(1) - s));
      });
}

Tensor softplus(const Tensor& a) {
  return unary_op("softplus", a, stable_softplus,
                  [](real x, real) { return stable_sigmoid(x); });
}

Tensor exp(const Tensor& a) {
  return unary_op(
      "exp", a, [](real x) { return std::exp(x); },
      [](real, real y) { return y; });
}

Tensor sum(const Tensor& a) {
  const auto av = a.data();
  double acc = 0;
  for (real v : av) acc += v;
  return finish_op("sum", Tensor::scalar(static_cast<real>(acc)), {a},
                   [a](std::span<const real> g) {
                     auto ga = a.grad_buffer();
                     for (auto& v : ga) v += g[0];
                   });
}

Tensor mean(const Tensor& a) {
  return scale(sum(a), real(1) / static_cast<real>(a.numel()));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: cannot multiply " + a.shape().str() + " by " +
                     b.shape().str());
  }
  const std::size_t p = a.dim(0), q = a.dim(1), r = b.dim(1);
  std::vector<real> out(p * r, real(0));
  detail::gemm(false, false, p, r, q, 1, a.data().data(), q, b.data().data(),
               r, 0, out.data(), r);
  return finish_op("matmul", Tensor(Shape{p, r}, std::move(out)), {a, b},
                   [a, b, p, q, r](std::span<const real> g) {
                     if (a.requires_grad()) {
                       detail::gemm(false, true, p, q, r, 1, g.data(), r,
                                    b.data().data(), r, 1,
                                    a.grad_buffer().data(), q);
                     }
                     if (b.requires_grad()) {
                       detail::gemm(true, false, q, r, p, 1, a.data().data(),
                                    q, g.data(), r, 1, b.grad_buffer().data(),
                                    r);
                     }
                   });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  const std::size_t k = x.dim(x.rank() - 1);
  if (w.rank() != 2 || w.dim(0) != k) {
    throw ShapeError("linear: input " + x.shape().str() +
                     " incompatible with weight " + w.shape().str());
  }
  const std::size_t n = w.dim(1);
  if (bias.defined() && bias.numel() != n) {
    throw ShapeError("linear: bias " + bias.shape().str() +
                     " does not match output width " + std::to_string(n));
  }
  const std::size_t m = x.numel() / k;
  std::vector<real> out(m * n, real(0));
  if (bias.defined()) {
    const auto bv = bias.data();
    for (std::size_t i = 0; i < m; ++i) {
      std::copy(bv.begin(), bv.end(), out.begin() + static_cast<long>(i * n));
    }
  }
  detail::gemm(false, false, m, n, k, 1, x.data().data(), k, w.data().data(),
               n, 1, out.data(), n);
  std::vector<std::size_t> dims(x.shape().dims().begin(),
                                x.shape().dims().end());
  dims.back() = n;
  std::vector<Tensor> inputs{x, w};
  if (bias.defined()) inputs.push_back(bias);
  return finish_op(
      "linear", Tensor(Shape(dims), std::move(out)), std::move(inputs),
      [x, w, bias, m, n, k](std::span<const real> g) {
        if (x.requires_grad()) {
          detail::gemm(false, true, m, k, n, 1, g.data(), n, w.data().data(),
                       n, 1, x.grad_buffer().data(), k);
        }
        if (w.requires_grad()) {
          detail::gemm(true, false, k, n, m, 1, x.data().data(), k, g.data(),
                       n, 1, w.grad_buffer().data(), n);
        }
        if (bias.defined() && bias.requires_grad()) {
          auto gb = bias.grad_buffer();
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
          }
        }
      });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape.numel() != a.numel()) {
    throw ShapeError("reshape: " + a.shape().str() + " cannot become " +
                     shape.str());
  }
  std::vector<real> out(a.data().begin(), a.data().end());
  return finish_op("reshape", Tensor(shape, std::move(out)), {a},
                   [a](std::span<const real> g) {
                     auto ga = a.grad_buffer();
                     for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                   });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts[0].shape();
  if (axis >= first.rank()) {
    throw ShapeError("concat: axis " + std::to_string(axis) +
                     " out of range for " + first.str());
  }
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.rank() == first.rank();
    for (std::size_t i = 0; ok && i < s.rank(); ++i) {
      if (i != axis && s[i] != first[i]) ok = false;
    }
    if (!ok) {
      throw ShapeError("concat: ragged shapes " + first.str() + " and " +
                       s.str() + " along axis " + std::to_string(axis));
    }
    total += s[axis];
  }
  std::vector<std::size_t> dims(first.dims().begin(), first.dims().end());
  dims[axis] = total;
  const Shape out_shape(dims);
  const Blocks ob = blocks_along(out_shape, axis);
  std::vector<real> out(out_shape.numel());
  std::size_t offset = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    const Blocks pb = blocks_along(p.shape(), axis);
    const std::size_t chunk = pb.extent * pb.inner;
    const auto src = p.data();
    for (std::size_t o = 0; o < ob.outer; ++o) {
      std::copy_n(src.begin() + static_cast<long>(o * chunk), chunk,
                  out.begin() + static_cast<long>(o * ob.extent * ob.inner +
                                                  offset * ob.inner));
    }
    offsets.push_back(offset);
    offset += pb.extent;
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return finish_op(
      "concat", Tensor(out_shape, std::move(out)), inputs,
      [inputs, offsets, ob, axis](std::span<const real> g) {
        for (std::size_t i = 0; i < inputs.size(); ++i) {
          const Tensor& p = inputs[i];
          if (!p.requires_grad()) continue;
          const Blocks pb = blocks_along(p.shape(), axis);
          const std::size_t chunk = pb.extent * pb.inner;
          auto gp = p.grad_buffer();
          for (std::size_t o = 0; o < ob.outer; ++o) {
            const std::size_t base =
                o * ob.extent * ob.inner + offsets[i] * ob.inner;
            for (std::size_t j = 0; j < chunk; ++j) {
              gp[o * chunk + j] += g[base + j];
            }
          }
        }
      });
}

Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t start,
             std::size_t length) {
  const Blocks ab = blocks_along(a.shape(), axis);
  if (length == 0 || start + length > ab.extent) {
    throw ShapeError("slice: range [" + std::to_string(start) + ", " +
                     std::to_string(start + length) + ") exceeds axis " +
                     std::to_string(axis) + " of " + a.shape().str());
  }
  std::vector<std::size_t> dims(a.shape().dims().begin(),
                                a.shape().dims().end());
  dims[axis] = length;
  const std::size_t chunk = length * ab.inner;
  std::vector<real> out(ab.outer * chunk);
  const auto src = a.data();
  for (std::size_t o = 0; o < ab.outer; ++o) {
    std::copy_n(src.begin() + static_cast<long>(o * ab.extent * ab.inner +
                                                start * ab.inner),
                chunk, out.begin() + static_cast<long>(o * chunk));
  }
  return finish_op("slice", Tensor(Shape(dims), std::move(out)), {a},
                   [a, ab, start, chunk](std::span<const real> g) {
                     auto ga = a.grad_buffer();
                     for (std::size_t o = 0; o < ab.outer; ++o) {
                       const std::size_t base =
                           o * ab.extent * ab.inner + start * ab.inner;
                       for (std::size_t j = 0; j < chunk; ++j) {
                         ga[base + j] += g[o * chunk + j];
                       }
                     }
                   });
}

Tensor flip(const Tensor& a, std::size_t axis) {
  const Blocks b = blocks_along(a.shape(), axis);
  auto index = [b](std::size_t o, std::size_t e, std::size_t i) {
    return (o * b.extent + e) * b.inner + i;
  };
  std::vector<real> out(a.numel());
  const auto src = a.data();
  for (std::size_t o = 0; o < b.outer; ++o) {
    for (std::size_t e = 0; e < b.extent; ++e) {
      for (std::size_t i = 0; i < b.inner; ++i) {
        out[index(o, b.extent - 1 - e, i)] = src[index(o, e, i)];
      }
    }
  }
  return finish_op("flip", Tensor(a.shape(), std::move(out)), {a},
                   [a, b, index](std::span<const real> g) {
                     auto ga = a.grad_buffer();
                     for (std::size_t o = 0; o < b.outer; ++o) {
                       for (std::size_t e = 0; e < b.extent; ++e) {
                         for (std::size_t i = 0; i < b.inner; ++i) {
                           ga[index(o, e, i)] +=
                               g[index(o, b.extent - 1 - e, i)];
                         }
                       }
                     }
                   });
}

Tensor gather(const Tensor& a, Shape shape, std::vector<std::size_t> index) {
  if (shape.numel() != index.size()) {
    throw ShapeError("gather: shape " + shape.str() + " needs " +
                     std::to_string(shape.numel()) + " indices, got " +
                     std::to_string(index.size()));
  }
  const auto src = a.data();
  std::vector<real> out(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= src.size()) throw ShapeError("gather: index out of range");
    out[i] = src[index[i]];
  }
  return finish_op("gather", Tensor(shape, std::move(out)), {a},
                   [a, index = std::move(index)](std::span<const real> g) {
                     auto ga = a.grad_buffer();
                     for (std::size_t i = 0; i < g.size(); ++i) {
                       ga[index[i]] += g[i];
                     }
                   });
}

Tensor pad_bottom_right(const Tensor& x, std::size_t out_h,
                        std::size_t out_w) {
  if (x.rank() != 4 || out_h < x.dim(2) || out_w < x.dim(3)) {
    throw ShapeError("pad_bottom_right: cannot pad " + x.shape().str() +
                     " to " + std::to_string(out_h) + "x" +
                     std::to_string(out_w));
  }
  const std::size_t planes = x.dim(0) * x.dim(1);
  const std::size_t h = x.dim(2), w = x.dim(3);
  if (h == out_h && w == out_w) return x;
  std::vector<real> out(planes * out_h * out_w, real(0));
  const auto src = x.data();
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t i = 0; i < h; ++i) {
      std::copy_n(src.begin() + static_cast<long>((p * h + i) * w), w,
                  out.begin() + static_cast<long>((p * out_h + i) * out_w));
    }
  }
  return finish_op(
      "pad", Tensor(Shape{x.dim(0), x.dim(1), out_h, out_w}, std::move(out)),
      {x}, [x, planes, h, w, out_h, out_w](std::span<const real> g) {
        auto gx = x.grad_buffer();
        for (std::size_t p = 0; p < planes; ++p) {
          for (std::size_t i = 0; i < h; ++i) {
            for (std::size_t j = 0; j < w; ++j) {
              gx[(p * h + i) * w + j] += g[(p * out_h + i) * out_w + j];
            }
          }
        }
      });
}

}  // namespace MSV_PRECISION_NS
}  // namespace msv

#include "msv/ssm.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "fast_exp.hpp"
#include "gemm.hpp"
#include "msv/nn.hpp"
#include "msv/ops.hpp"

namespace msv {
inline namespace MSV_PRECISION_NS {

namespace {

real softplus_scalar(real x) {
  return std::max(x, real(0)) + std::log1p(std::exp(-std::abs(x)));
}

real sigmoid_scalar(real x) {
  if (x >= 0) return real(1) / (real(1) + std::exp(-x));
  const real e = std::exp(x);
  return e / (real(1) + e);
}

void check_params(const Tensor& seq, const SsmParams& p) {
  if (!seq.defined() || seq.rank() != 3) {
    throw ShapeError("selective_scan: sequence must be B x L x D, got " +
                     (seq.defined() ? seq.shape().str() : "<undefined>"));
  }
  const std::size_t d = p.d_model(), s = p.d_state();
  if (seq.dim(2) != d || p.w_b.shape() != Shape{d, s} ||
      p.w_c.shape() != Shape{d, s} || p.w_dt.shape() != Shape{d, 1} ||
      p.b_dt.numel() != 1 || p.d_skip.numel() != d) {
    throw ShapeError("selective_scan: sequence " + seq.shape().str() +
                     " incompatible with parameters (D=" + std::to_string(d) +
                     ", S=" + std::to_string(s) + ")");
  }
}

}  // namespace

SsmParams SsmParams::create(std::size_t d_model, std::size_t d_state,
                            Rng& rng) {
  SsmParams p;
  std::vector<real> a_log(d_model * d_state);
  for (std::size_t d = 0; d < d_model; ++d) {
    for (std::size_t s = 0; s < d_state; ++s) {
      a_log[d * d_state + s] = std::log(static_cast<real>(s + 1));
    }
  }
  p.a_log = Tensor(Shape{d_model, d_state}, std::move(a_log), true);
  const real bound = real(1) / std::sqrt(static_cast<real>(d_model));
  p.w_b = Tensor::uniform(Shape{d_model, d_state}, rng, -bound, bound, true);
  p.w_c = Tensor::uniform(Shape{d_model, d_state}, rng, -bound, bound, true);
  p.w_dt = Tensor::uniform(Shape{d_model, 1}, rng, -bound, bound, true);
  // Initial step size log-uniform in [1e-3, 1e-1]; bias = softplus^-1(dt).
  std::uniform_real_distribution<double> u(std::log(1e-3), std::log(1e-1));
  const double dt = std::exp(u(rng));
  p.b_dt = Tensor::scalar(static_cast<real>(dt + std::log(-std::expm1(-dt))),
                          true);
  p.d_skip = Tensor::ones(Shape{d_model}, true);
  return p;
}

std::size_t SsmParams::parameter_count() const {
  return a_log.numel() + w_b.numel() + w_c.numel() + w_dt.numel() +
         b_dt.numel() + d_skip.numel();
}

void SsmParams::collect(ParameterList& out, const std::string& prefix) const {
  out.add(prefix + "a_log", a_log);
  out.add(prefix + "w_b", w_b);
  out.add(prefix + "w_c", w_c);
  out.add(prefix + "w_dt", w_dt);
  out.add(prefix + "b_dt", b_dt);
  out.add(prefix + "d_skip", d_skip);
}

Tensor selective_scan(const Tensor& seq, const SsmParams& p,
                      ScanDirection direction) {
  check_params(seq, p);
  const std::size_t batch = seq.dim(0), len = seq.dim(1);
  const std::size_t dm = p.d_model(), ds = p.d_state();
  if (len == 0) throw ContractError("selective_scan: empty sequence");
  const std::size_t tokens = batch * len;
  const bool reverse = direction == ScanDirection::kReverse;
  const auto xv = seq.data();

  // Input-dependent projections for all tokens at once.
  std::vector<real> bproj(tokens * ds, real(0)), cproj(tokens * ds, real(0));
  std::vector<real> z(tokens), dt(tokens);
  detail::gemm(false, false, tokens, ds, dm, 1, xv.data(), dm,
               p.w_b.data().data(), ds, 0, bproj.data(), ds);
  detail::gemm(false, false, tokens, ds, dm, 1, xv.data(), dm,
               p.w_c.data().data(), ds, 0, cproj.data(), ds);
  {
    const auto wdt = p.w_dt.data();
    const real bias = p.b_dt.data()[0];
    for (std::size_t t = 0; t < tokens; ++t) {
      real acc = bias;
      for (std::size_t d = 0; d < dm; ++d) acc += xv[t * dm + d] * wdt[d];
      z[t] = acc;
      dt[t] = softplus_scalar(acc);
    }
  }
  std::vector<real> a(dm * ds);
  {
    const auto al = p.a_log.data();
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = -std::exp(al[i]);
  }

  // Only the states h_t are kept for the adjoint pass; decays exp(dt_t A)
  // are cheap to recompute there.
  const std::size_t block = dm * ds;
  std::shared_ptr<real[]> states(new real[tokens * block]);
  std::vector<real> out(tokens * dm);
  const auto dskip = p.d_skip.data();
  std::vector<real> h(block), dec(block);
  for (std::size_t b = 0; b < batch; ++b) {
    std::fill(h.begin(), h.end(), real(0));
    for (std::size_t step = 0; step < len; ++step) {
      const std::size_t t = b * len + (reverse ? len - 1 - step : step);
      const real* x = xv.data() + t * dm;
      const real* bt = bproj.data() + t * ds;
      const real* ct = cproj.data() + t * ds;
      real* hs = states.get() + t * block;
      real* y = out.data() + t * dm;
      const real dtt = dt[t];
      for (std::size_t i = 0; i < block; ++i) {
        dec[i] = detail::fast_exp(dtt * a[i]);
      }
      for (std::size_t d = 0; d < dm; ++d) {
        const real drive = dtt * x[d];
        real* hd = h.data() + d * ds;
        const real* decd = dec.data() + d * ds;
        real acc = 0;
#pragma omp simd reduction(+ : acc)
        for (std::size_t s = 0; s < ds; ++s) {
          hd[s] = decd[s] * hd[s] + drive * bt[s];
          acc += ct[s] * hd[s];
        }
        std::copy(hd, hd + ds, hs + d * ds);
        y[d] = acc + dskip[d] * x[d];
      }
    }
  }

  return finish_op(
      "selective_scan", Tensor(seq.shape(), std::move(out)),
      {seq, p.a_log, p.w_b, p.w_c, p.w_dt, p.b_dt, p.d_skip},
      [seq, p, batch, len, dm, ds, reverse, bproj = std::move(bproj),
       cproj = std::move(cproj), z = std::move(z), dt = std::move(dt),
       a = std::move(a), states = std::move(states)](std::span<const real> g) {
        const std::size_t tokens = batch * len;
        const std::size_t block = dm * ds;
        const auto xv = seq.data();
        const auto dskip = p.d_skip.data();
        std::vector<real> gx(tokens * dm, real(0));
        std::vector<real> gb(tokens * ds, real(0)), gc(tokens * ds, real(0));
        std::vector<real> gdt(tokens, real(0));
        std::vector<real> ga(block, real(0));
        std::vector<real> gskip(dm, real(0));
        std::vector<real> gh(block), dec(block), zeros(block, real(0));
        std::vector<real> gdt_s(ds);
        for (std::size_t b = 0; b < batch; ++b) {
          std::fill(gh.begin(), gh.end(), real(0));
          for (std::size_t step = len; step-- > 0;) {
            const std::size_t t = b * len + (reverse ? len - 1 - step : step);
            const real* hprev = zeros.data();
            if (step > 0) {
              const std::size_t tp =
                  b * len + (reverse ? len - step : step - 1);
              hprev = states.get() + tp * block;
            }
            const real* x = xv.data() + t * dm;
            const real* gy = g.data() + t * dm;
            const real* bt = bproj.data() + t * ds;
            const real* ct = cproj.data() + t * ds;
            const real* hs = states.get() + t * block;
            real* gxt = gx.data() + t * dm;
            real* gbt = gb.data() + t * ds;
            real* gct = gc.data() + t * ds;
            const real dtt = dt[t];
            for (std::size_t i = 0; i < block; ++i) {
              dec[i] = detail::fast_exp(dtt * a[i]);
            }
            // Per-state partial sums keep the inner loops free of scalar
            // reductions so they vectorize.
            std::fill(gdt_s.begin(), gdt_s.end(), real(0));
            for (std::size_t d = 0; d < dm; ++d) {
              const real gyd = gy[d], xd = x[d];
              gxt[d] += gyd * dskip[d];
              gskip[d] += gyd * xd;
              const std::size_t o = d * ds;
              real gx_acc = 0;
#pragma omp simd reduction(+ : gx_acc)
              for (std::size_t s = 0; s < ds; ++s) {
                gct[s] += gyd * hs[o + s];
                const real ghi = gh[o + s] + gyd * ct[s];
                const real g_decay = ghi * hprev[o + s] * dec[o + s];
                gdt_s[s] += g_decay * a[o + s] + ghi * bt[s] * xd;
                ga[o + s] += g_decay * dtt;
                gbt[s] += ghi * dtt * xd;
                gx_acc += ghi * bt[s];
                gh[o + s] = ghi * dec[o + s];
              }
              gxt[d] += gx_acc * dtt;
            }
            real gdt_acc = 0;
            for (std::size_t s = 0; s < ds; ++s) gdt_acc += gdt_s[s];
            gdt[t] = gdt_acc;
          }
        }
        // Step size: dt = softplus(z), z = x . w_dt + b_dt.
        const auto wdt = p.w_dt.data();
        std::vector<real> gz(tokens);
        for (std::size_t t = 0; t < tokens; ++t) {
          gz[t] = gdt[t] * sigmoid_scalar(z[t]);
        }
        if (p.w_dt.requires_grad() || p.b_dt.requires_grad()) {
          auto gw = p.w_dt.grad_buffer();
          auto gbias = p.b_dt.grad_buffer();
          for (std::size_t t = 0; t < tokens; ++t) {
            for (std::size_t d = 0; d < dm; ++d) gw[d] += xv[t * dm + d] * gz[t];
            gbias[0] += gz[t];
          }
        }
        for (std::size_t t = 0; t < tokens; ++t) {
          for (std::size_t d = 0; d < dm; ++d) gx[t * dm + d] += wdt[d] * gz[t];
        }
        // B and C projections.
        if (p.w_b.requires_grad()) {
          detail::gemm(true, false, dm, ds, tokens, 1, xv.data(), dm,
                       gb.data(), ds, 1, p.w_b.grad_buffer().data(), ds);
        }
        if (p.w_c.requires_grad()) {
          detail::gemm(true, false, dm, ds, tokens, 1, xv.data(), dm,
                       gc.data(), ds, 1, p.w_c.grad_buffer().data(), ds);
        }
        detail::gemm(false, true, tokens, dm, ds, 1, gb.data(), ds,
                     p.w_b.data().data(), ds, 1, gx.data(), dm);
        detail::gemm(false, true, tokens, dm, ds, 1, gc.data(), ds,
                     p.w_c.data().data(), ds, 1, gx.data(), dm);
        if (p.a_log.requires_grad()) {
          auto gal = p.a_log.grad_buffer();
          for (std::size_t i = 0; i < block; ++i) gal[i] += ga[i] * a[i];
        }
        if (p.d_skip.requires_grad()) {
          auto gd = p.d_skip.grad_buffer();
          for (std::size_t d = 0; d < dm; ++d) gd[d] += gskip[d];
        }
        if (seq.requires_grad()) {
          auto gs = seq.grad_buffer();
          for (std::size_t i = 0; i < gx.size(); ++i) gs[i] += gx[i];
        }
      });
}

Tensor bidirectional_scan(const Tensor& seq, const SsmParams& p_fwd,
                          const SsmParams& p_rev) {
  if (p_fwd.d_model() != p_rev.d_model() ||
      p_fwd.d_state() != p_rev.d_state()) {
    throw ShapeError("bidirectional_scan: direction parameters differ in "
                     "dimensions");
  }
  return add(selective_scan(seq, p_fwd, ScanDirection::kForward),
             selective_scan(seq, p_rev, ScanDirection::kReverse));
}

MambaBlock MambaBlock::create(const MambaConfig& config, Rng& rng) {
  if (config.d_model == 0 || config.d_state == 0 || config.expand == 0 ||
      config.conv_width == 0) {
    throw ContractError("MambaBlock: all dimensions must be positive");
  }
  MambaBlock m;
  m.config = config;
  const std::size_t dm = config.d_model;
  const std::size_t di = config.expand * dm;
  const std::size_t k = config.conv_width;
  const real in_bound = real(1) / std::sqrt(static_cast<real>(dm));
  const real out_bound = real(1) / std::sqrt(static_cast<real>(di));
  const real conv_bound = real(1) / std::sqrt(static_cast<real>(k));
  m.in_w = Tensor::uniform(Shape{dm, 2 * di}, rng, -in_bound, in_bound, true);
  m.in_b = Tensor::zeros(Shape{2 * di}, true);
  m.conv_fwd_w =
      Tensor::uniform(Shape{di, k}, rng, -conv_bound, conv_bound, true);
  m.conv_fwd_b = Tensor::zeros(Shape{di}, true);
  m.fwd = SsmParams::create(di, config.d_state, rng);
  if (config.tied) {
    m.conv_rev_w = m.conv_fwd_w;
    m.conv_rev_b = m.conv_fwd_b;
    m.rev = m.fwd;
  } else {
    m.conv_rev_w =
        Tensor::uniform(Shape{di, k}, rng, -conv_bound, conv_bound, true);
    m.conv_rev_b = Tensor::zeros(Shape{di}, true);
    m.rev = SsmParams::create(di, config.d_state, rng);
  }
  m.out_w = Tensor::uniform(Shape{di, dm}, rng, -out_bound, out_bound, true);
  m.out_b = Tensor::zeros(Shape{dm}, true);
  return m;
}

Tensor MambaBlock::forward(const Tensor& seq) const {
  if (seq.rank() != 3 || seq.dim(2) != config.d_model) {
    throw ShapeError("MambaBlock: expected B x L x " +
                     std::to_string(config.d_model) + ", got " +
                     seq.shape().str());
  }
  const std::size_t di = inner_width();
  const Tensor xz = linear(seq, in_w, in_b);
  const Tensor x = slice(xz, 2, 0, di);
  const Tensor gate = silu(slice(xz, 2, di, di));
  const Tensor xf = silu(depthwise_conv1d(x, conv_fwd_w, conv_fwd_b, false));
  const Tensor xr = silu(depthwise_conv1d(x, conv_rev_w, conv_rev_b, true));
  const Tensor y = add(selective_scan(xf, fwd, ScanDirection::kForward),
                       selective_scan(xr, rev, ScanDirection::kReverse));
  return linear(mul(y, gate), out_w, out_b);
}

void MambaBlock::collect(ParameterList& out, const std::string& prefix) const {
  out.add(prefix + "in_w", in_w);
  out.add(prefix + "in_b", in_b);
  out.add(prefix + "conv_fwd_w", conv_fwd_w);
  out.add(prefix + "conv_fwd_b", conv_fwd_b);
  fwd.collect(out, prefix + "fwd.");
  if (!config.tied) {
    out.add(prefix + "conv_rev_w", conv_rev_w);
    out.add(prefix + "conv_rev_b", conv_rev_b);
    rev.collect(out, prefix + "rev.");
  }
  out.add(prefix + "out_w", out_w);
  out.add(prefix + "out_b", out_b);
}

GradcheckReport scan_gradcheck(const SsmParams& p,
                               const ScanGradcheckOptions& options) {
  Rng rng(mix_seed(options.seed, 0x55));
  const Tensor x = Tensor::uniform(
      Shape{options.batch, options.length, p.d_model()}, rng, -1, 1, true);
  const NamedTensors wrt{{"x", x},          {"a_log", p.a_log},
                         {"w_b", p.w_b},    {"w_c", p.w_c},
                         {"w_dt", p.w_dt},  {"b_dt", p.b_dt},
                         {"d_skip", p.d_skip}};
  GradcheckOptions fd = options.fd;
  fd.seed = options.seed;
  return check_gradients(
      [&] { return selective_scan(x, p, options.direction); }, wrt, fd);
}

}  // namespace MSV_PRECISION_NS
}  // namespace msv

#include "msv/gradcheck.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "msv/ops.hpp"

namespace msv {
inline namespace MSV_PRECISION_NS {

double GradcheckReport::max_rel_error() const {
  double worst = 0;
  for (const auto& t : tensors) worst = std::max(worst, t.rel_error);
  return worst;
}

namespace {

double projected(const Tensor& out, const std::vector<real>& weights) {
  double acc = 0;
  const auto v = out.data();
  for (std::size_t i = 0; i < v.size(); ++i) {
    acc += static_cast<double>(v[i]) * static_cast<double>(weights[i]);
  }
  return acc;
}

}  // namespace

GradcheckReport check_gradients(const std::function<Tensor()>& fn,
                                const NamedTensors& wrt,
                                const GradcheckOptions& options) {
  Rng rng(mix_seed(options.seed, 0x9c));
  Tape::active().clear();
  for (const auto& [name, t] : wrt) t.zero_grad();

  const Tensor out = fn();
  std::vector<real> weights(out.numel());
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (auto& w : weights) w = static_cast<real>(dist(rng));
  backward(sum(mul(out, Tensor(out.shape(), weights))));

  struct Probe {
    std::size_t tensor;
    double analytic;
    double numeric;  // central difference at step
    double spread;   // kink indicator, see below
  };
  std::vector<Probe> probes;
  {
    NoGradGuard no_grad;
    for (std::size_t k = 0; k < wrt.size(); ++k) {
      Tensor t = wrt[k].second;
      std::vector<real> analytic(t.numel(), real(0));
      if (t.has_grad()) {
        std::copy(t.grad().begin(), t.grad().end(), analytic.begin());
      }
      std::vector<std::size_t> coords(t.numel());
      std::iota(coords.begin(), coords.end(), std::size_t{0});
      if (coords.size() > options.max_coords_per_tensor) {
        std::shuffle(coords.begin(), coords.end(), rng);
        coords.resize(options.max_coords_per_tensor);
        std::sort(coords.begin(), coords.end());
      }
      for (std::size_t idx : coords) {
        auto values = t.mutable_data();
        const real saved = values[idx];
        // f at saved + offset, and the offset actually applied after rounding.
        const auto probe = [&](real offset) {
          values[idx] = saved + offset;
          const double f = projected(fn(), weights);
          const double applied = static_cast<double>(values[idx]) - static_cast<double>(saved);
          values[idx] = saved;
          return std::pair{f, applied};
        };
        const double f0 = projected(fn(), weights);
        const auto [fp, hp] = probe(options.step);
        const auto [fm, hm] = probe(-options.step);
        const auto [fp2, hp2] = probe(options.step / 2);
        const auto [fm2, hm2] = probe(-options.step / 2);
        const double slopes[4] = {(fp - f0) / hp, (fp2 - f0) / hp2,
                                  (fm2 - f0) / hm2, (fm - f0) / hm};
        const auto [lo, hi] = std::minmax_element(std::begin(slopes), std::end(slopes));
        // Curvature alone widens the slope range, but then the right-left gap
        // at step is twice the gap at step/2. A kink keeps the gap constant.
        // The second test amplifies rounding noise, so a kink must fail both.
        const double gap = slopes[0] - slopes[3];
        const double gap2 = slopes[1] - slopes[2];
        const double spread = std::min(*hi - *lo, std::abs(2 * gap2 - gap));
        probes.push_back({k, analytic[idx], (fp - fm) / (hp - hm), spread});
      }
    }
  }

  double scale2 = 0;
  for (const Probe& p : probes) scale2 += p.numeric * p.numeric;
  const double scale = probes.empty() ? 0.0 : std::sqrt(scale2 / double(probes.size()));

  GradcheckReport report;
  report.max_nonsmooth_fraction = options.max_nonsmooth_fraction;
  std::vector<std::array<double, 3>> sums(wrt.size(), {0, 0, 0});
  for (std::size_t k = 0; k < wrt.size(); ++k) {
    report.tensors.push_back({wrt[k].first, 0.0, 0, 0});
  }
  double all_diff2 = 0, all_a2 = 0, all_n2 = 0;
  for (const Probe& p : probes) {
    TensorGradCheck& tc = report.tensors[p.tensor];
    ++tc.coords;
    ++report.coords;
    if (p.spread > options.nonsmooth_threshold * (std::abs(p.numeric) + scale)) {
      ++tc.nonsmooth;
      ++report.nonsmooth;
      continue;
    }
    const double d = p.analytic - p.numeric;
    sums[p.tensor][0] += d * d;
    sums[p.tensor][1] += p.analytic * p.analytic;
    sums[p.tensor][2] += p.numeric * p.numeric;
    all_diff2 += d * d;
    all_a2 += p.analytic * p.analytic;
    all_n2 += p.numeric * p.numeric;
  }
  for (std::size_t k = 0; k < wrt.size(); ++k) {
    const double denom = std::max(std::sqrt(sums[k][1]), std::sqrt(sums[k][2]));
    report.tensors[k].rel_error = denom > 0 ? std::sqrt(sums[k][0]) / denom : 0.0;
    wrt[k].second.zero_grad();
  }
  const double all_denom = std::max(std::sqrt(all_a2), std::sqrt(all_n2));
  report.rel_error = all_denom > 0 ? std::sqrt(all_diff2) / all_denom : 0.0;
  Tape::active().clear();
  return report;
}

}  // namespace MSV_PRECISION_NS
}  // namespace msv

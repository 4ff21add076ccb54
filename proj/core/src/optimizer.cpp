#include "msv/optimizer.hpp"

#include <cmath>
#include <unordered_map>

namespace msv {
inline namespace MSV_PRECISION_NS {

Adam::Adam(const ParameterList& params, AdamConfig config) : config_(config) {
  for (const NamedParam& p : params) {
    if (!p.trainable) continue;
    slots_.push_back({p.name, p.tensor, std::vector<real>(p.tensor.numel(), 0),
                      std::vector<real>(p.tensor.numel(), 0)});
  }
}

void Adam::step() {
  ++t_;
  const real b1 = config_.beta1, b2 = config_.beta2;
  const real c1 = real(1) - std::pow(b1, static_cast<real>(t_));
  const real c2 = real(1) - std::pow(b2, static_cast<real>(t_));
  for (Slot& s : slots_) {
    if (!s.param.has_grad()) continue;
    const auto g = s.param.grad();
    auto w = s.param.mutable_data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      s.m[i] = b1 * s.m[i] + (real(1) - b1) * g[i];
      s.v[i] = b2 * s.v[i] + (real(1) - b2) * g[i] * g[i];
      const real mh = s.m[i] / c1;
      const real vh = s.v[i] / c2;
      w[i] -= config_.lr * mh / (std::sqrt(vh) + config_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (Slot& s : slots_) s.param.zero_grad();
}

void Adam::restore(std::uint64_t t, const std::vector<std::string>& names,
                   const std::vector<std::vector<real>>& m,
                   const std::vector<std::vector<real>>& v) {
  if (names.size() != slots_.size() || m.size() != names.size() ||
      v.size() != names.size()) {
    throw FormatError("optimizer state has " + std::to_string(names.size()) +
                      " slots, model has " + std::to_string(slots_.size()));
  }
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < names.size(); ++i) index[names[i]] = i;
  for (Slot& s : slots_) {
    const auto it = index.find(s.name);
    if (it == index.end()) {
      throw FormatError("optimizer state is missing slot '" + s.name + "'");
    }
    if (m[it->second].size() != s.m.size() || v[it->second].size() != s.v.size()) {
      throw FormatError("optimizer slot '" + s.name + "' has the wrong size");
    }
    s.m = m[it->second];
    s.v = v[it->second];
  }
  t_ = t;
}

double gradient_norm(const ParameterList& params) {
  double s = 0;
  for (const NamedParam& p : params) {
    if (!p.trainable) continue;
    for (real g : p.tensor.grad()) s += double(g) * double(g);
  }
  return std::sqrt(s);
}

}  // namespace MSV_PRECISION_NS
}  // namespace msv

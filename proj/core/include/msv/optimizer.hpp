#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "msv/params.hpp"

namespace msv {
inline namespace MSV_PRECISION_NS {

struct AdamConfig {
  real lr = real(1e-3);
  real beta1 = real(0.9);
  real beta2 = real(0.999);
  real eps = real(1e-8);
};

/// Adam over the trainable entries of a ParameterList. Parameters without an
/// accumulated gradient are left untouched for that step.
class Adam {
 public:
  Adam() = default;
  Adam(const ParameterList& params, AdamConfig config);

  void step();
  void zero_grad();

  std::uint64_t steps() const { return t_; }
  const AdamConfig& config() const { return config_; }

  struct Slot {
    std::string name;
    Tensor param;
    std::vector<real> m;
    std::vector<real> v;
  };
  const std::vector<Slot>& slots() const { return slots_; }
  /// Restores moments by parameter name; throws FormatError on a mismatch.
  void restore(std::uint64_t t, const std::vector<std::string>& names,
               const std::vector<std::vector<real>>& m,
               const std::vector<std::vector<real>>& v);

 private:
  AdamConfig config_;
  std::uint64_t t_ = 0;
  std::vector<Slot> slots_;
};

/// sqrt(sum of squared gradients) over all trainable parameters.
double gradient_norm(const ParameterList& params);

}  // namespace MSV_PRECISION_NS
}  // namespace msv

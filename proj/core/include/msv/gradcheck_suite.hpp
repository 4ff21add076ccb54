#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "msv/gradcheck.hpp"

namespace msv {

/// Outcome of one (operation, seed) finite-difference check.
struct GradcheckCase {
  std::string op;
  std::uint64_t seed = 0;
  double rel_error = 0;       // whole-gradient error
  std::string worst_tensor;   // tensor with the largest individual error
  std::size_t coords = 0;
  std::size_t nonsmooth = 0;  // coordinates straddling a kink, left out
  bool passed = false;
};

struct GradcheckSuiteResult {
  std::string precision;
  double tolerance = 0;
  std::vector<GradcheckCase> cases;

  bool passed() const {
    for (const auto& c : cases) {
      if (!c.passed) return false;
    }
    return !cases.empty();
  }
};

inline namespace MSV_PRECISION_NS {

/// Names of every operation the suite covers, in run order.
std::vector<std::string> gradcheck_suite_ops();

/// Runs every covered operation on seeds 0..seeds-1 at this build's
/// precision and default tolerance. `on_case` sees each result as it lands.
GradcheckSuiteResult run_gradcheck_suite(
    std::size_t seeds = 5,
    const std::function<void(const GradcheckCase&)>& on_case = {});

}  // namespace MSV_PRECISION_NS
}  // namespace msv

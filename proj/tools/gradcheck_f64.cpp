#include "commands.hpp"

namespace msv::cli {

GradcheckSuiteResult run_gradcheck_f64(
    std::size_t seeds, const std::function<void(const GradcheckCase&)>& on_case) {
  return msv::f64::run_gradcheck_suite(seeds, on_case);
}

}  // namespace msv::cli

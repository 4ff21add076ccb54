#pragma once

namespace msv {

/// Flushes subnormal floats to zero (inputs and results) for its lifetime
/// and restores the previous mode afterwards. Decaying scan states and
/// second-moment estimates drift into the subnormal range late in training,
/// where x86 arithmetic slows down sharply. A no-op off x86.
class FlushDenormalsGuard {
 public:
  FlushDenormalsGuard();
  ~FlushDenormalsGuard();
  FlushDenormalsGuard(const FlushDenormalsGuard&) = delete;
  FlushDenormalsGuard& operator=(const FlushDenormalsGuard&) = delete;

 private:
  unsigned saved_ = 0;
};

}  // namespace msv

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "msv/gradcheck.hpp"
#include "msv/params.hpp"
#include "msv/tensor.hpp"

namespace msv {
inline namespace MSV_PRECISION_NS {

enum class ScanDirection { kForward, kReverse };

/// Selective state-space parameters for one scan direction.
///
/// For a token x_t (width D) the step size, input and readout vectors are
///   dt_t = softplus(x_t . w_dt + b_dt),  B_t = x_t W_B,  C_t = x_t W_C,
/// and every channel d carries S states updated as
///   h_t[d,s] = exp(dt_t A[d,s]) h_{t-1}[d,s] + dt_t B_t[s] x_t[d]
///   y_t[d]   = sum_s C_t[s] h_t[d,s] + D_skip[d] x_t[d],   h_0 = 0,
/// with A = -exp(a_log) < 0.
struct SsmParams {
  Tensor a_log;   // D x S
  Tensor w_b;     // D x S
  Tensor w_c;     // D x S
  Tensor w_dt;    // D x 1
  Tensor b_dt;    // 1
  Tensor d_skip;  // D

  static SsmParams create(std::size_t d_model, std::size_t d_state, Rng& rng);

  std::size_t d_model() const { return a_log.dim(0); }
  std::size_t d_state() const { return a_log.dim(1); }
  std::size_t parameter_count() const;
  void collect(ParameterList& out, const std::string& prefix) const;
};

/// seq: B x L x D. The reverse direction runs the recurrence from t = L-1
/// down to 0, which equals the forward scan of the time-reversed sequence,
/// reversed back.
Tensor selective_scan(const Tensor& seq, const SsmParams& p,
                      ScanDirection direction);

/// Raw bidirectional scan: forward(seq, p_fwd) + reverse(seq, p_rev).
Tensor bidirectional_scan(const Tensor& seq, const SsmParams& p_fwd,
                          const SsmParams& p_rev);

struct MambaConfig {
  std::size_t d_model = 0;
  std::size_t d_state = 8;
  std::size_t expand = 2;
  std::size_t conv_width = 4;
  bool tied = false;  // share scan and conv parameters across directions
};

/// Mamba-style block around a bidirectional scan:
///   [x, z] = in_proj(u)
///   y_f = scan_fwd(silu(conv_fwd(x))),  y_r = scan_rev(silu(conv_rev(x)))
///   out = out_proj((y_f + y_r) * silu(z))
/// conv_rev is the anti-causal mirror of conv_fwd.
struct MambaBlock {
  MambaConfig config;
  Tensor in_w, in_b;    // D x 2E, 2E   (E = expand * D)
  Tensor conv_fwd_w, conv_fwd_b;  // E x K, E
  Tensor conv_rev_w, conv_rev_b;
  SsmParams fwd;
  SsmParams rev;
  Tensor out_w, out_b;  // E x D, D

  static MambaBlock create(const MambaConfig& config, Rng& rng);

  std::size_t inner_width() const { return config.expand * config.d_model; }
  /// seq: B x L x D -> B x L x D.
  Tensor forward(const Tensor& seq) const;
  void collect(ParameterList& out, const std::string& prefix) const;
};

/// Alias for the wrapped bidirectional block.
inline Tensor bimamba(const Tensor& seq, const MambaBlock& block) {
  return block.forward(seq);
}

struct ScanGradcheckOptions {
  std::size_t batch = 1;
  std::size_t length = 5;
  ScanDirection direction = ScanDirection::kForward;
  std::uint64_t seed = 0;
  GradcheckOptions fd;
};

/// Finite-difference check of selective_scan with respect to the input
/// sequence and every field of `p`.
GradcheckReport scan_gradcheck(const SsmParams& p,
                               const ScanGradcheckOptions& options = {});

}  // namespace MSV_PRECISION_NS
}  // namespace msv

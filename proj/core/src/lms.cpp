#include "msv/lms.hpp"

namespace msv {
inline namespace MSV_PRECISION_NS {

namespace {

std::size_t round_up(std::size_t v, std::size_t m) { return (v + m - 1) / m * m; }

// Flat index into the padded map for every token slot of the partition.
std::vector<std::size_t> partition_index(const WindowPartition& p) {
  const std::size_t gh = p.grid_h(), gw = p.grid_w();
  const std::size_t hp = p.padded_height, wp = p.padded_width;
  const std::size_t c = p.channels, m = p.win_h, n = p.win_w;
  std::vector<std::size_t> index(p.batch * hp * wp * c);
  std::size_t dst = 0;
  for (std::size_t b = 0; b < p.batch; ++b) {
    for (std::size_t wi = 0; wi < gh; ++wi) {
      for (std::size_t wj = 0; wj < gw; ++wj) {
        for (std::size_t a = 0; a < m; ++a) {
          for (std::size_t bb = 0; bb < n; ++bb) {
            const std::size_t i = wi * m + a;
            const std::size_t j = wj * n + bb;
            for (std::size_t ch = 0; ch < c; ++ch) {
              index[dst++] = ((b * c + ch) * hp + i) * wp + j;
            }
          }
        }
      }
    }
  }
  return index;
}

Tensor crop(const Tensor& x, std::size_t h, std::size_t w) {
  Tensor out = x;
  if (out.dim(2) != h) out = slice(out, 2, 0, h);
  if (out.dim(3) != w) out = slice(out, 3, 0, w);
  return out;
}

Tensor scan_tokens(const Tensor& tokens, const SpatialScanParams& params) {
  return params.mamba.forward(
      layer_norm(tokens, params.norm_gamma, params.norm_beta));
}

void require_channels(const Tensor& f, const LmsConfig& config,
                      const char* op) {
  if (f.rank() != 4 || f.dim(1) != config.channels) {
    throw ShapeError(std::string(op) + ": expected N x " +
                     std::to_string(config.channels) + " x H x W, got " +
                     f.shape().str());
  }
}

}  // namespace

WindowPartition window_partition(const Tensor& f, std::size_t m,
                                 std::size_t n) {
  if (f.rank() != 4) {
    throw ShapeError("window_partition: expected N x C x H x W, got " +
                     f.shape().str());
  }
  if (m == 0 || n == 0) throw ShapeError("window_partition: empty window");
  WindowPartition p;
  p.batch = f.dim(0);
  p.channels = f.dim(1);
  p.height = f.dim(2);
  p.width = f.dim(3);
  p.padded_height = round_up(p.height, m);
  p.padded_width = round_up(p.width, n);
  p.win_h = m;
  p.win_w = n;
  const Tensor padded = pad_bottom_right(f, p.padded_height, p.padded_width);
  p.tokens = gather(padded,
                    Shape{p.batch * p.windows_per_map(), m * n, p.channels},
                    partition_index(p));
  return p;
}

Tensor window_merge(const Tensor& tokens, const WindowPartition& layout) {
  const Shape expected{layout.batch * layout.windows_per_map(),
                       layout.win_h * layout.win_w, layout.channels};
  if (tokens.shape() != expected) {
    throw ShapeError("window_merge: tokens " + tokens.shape().str() +
                     " do not match partition layout " + expected.str());
  }
  const auto forward = partition_index(layout);
  std::vector<std::size_t> inverse(forward.size());
  for (std::size_t i = 0; i < forward.size(); ++i) inverse[forward[i]] = i;
  const Tensor padded =
      gather(tokens,
             Shape{layout.batch, layout.channels, layout.padded_height,
                   layout.padded_width},
             std::move(inverse));
  return crop(padded, layout.height, layout.width);
}

SpatialScanParams SpatialScanParams::create(const LmsConfig& config,
                                            Rng& rng) {
  SpatialScanParams p;
  p.norm_gamma = Tensor::ones(Shape{config.channels}, true);
  p.norm_beta = Tensor::zeros(Shape{config.channels}, true);
  MambaConfig mc;
  mc.d_model = config.channels;
  mc.d_state = config.d_state;
  mc.expand = config.expand;
  mc.conv_width = config.conv_width;
  mc.tied = config.tied_directions;
  p.mamba = MambaBlock::create(mc, rng);
  return p;
}

void SpatialScanParams::collect(ParameterList& out,
                                const std::string& prefix) const {
  out.add(prefix + "norm_gamma", norm_gamma);
  out.add(prefix + "norm_beta", norm_beta);
  mamba.collect(out, prefix + "mamba.");
}

Tensor pim(const Tensor& f, const LmsConfig& config,
           const SpatialScanParams& params, const Tensor& scale) {
  require_channels(f, config, "pim");
  const WindowPartition part = window_partition(f, config.win_h, config.win_w);
  const Tensor scanned = scan_tokens(part.tokens, params);
  return add(window_merge(scanned, part), mul(f, scale));
}

Tensor pam(const Tensor& f, const LmsConfig& config,
           const SpatialScanParams& params, const Tensor& scale) {
  require_channels(f, config, "pam");
  const std::size_t h = f.dim(2), w = f.dim(3);
  const Tensor padded = pad_bottom_right(f, round_up(h, config.win_h),
                                         round_up(w, config.win_w));
  const Tensor pooled = avg_pool(padded, config.win_h, config.win_w);
  // Whole pooled map as a single window: one sequence over the window grid.
  const WindowPartition grid =
      window_partition(pooled, pooled.dim(2), pooled.dim(3));
  const Tensor scanned = scan_tokens(grid.tokens, params);
  const Tensor restored =
      unpool(window_merge(scanned, grid), config.win_h, config.win_w);
  return add(crop(restored, h, w), mul(f, scale));
}

LmsBlock LmsBlock::create(const LmsConfig& config, std::size_t skip_channels,
                          bool use_lms, Rng& rng) {
  if (config.win_h * config.win_w < 4) {
    throw ConfigError("LMS window " + std::to_string(config.win_h) + "x" +
                      std::to_string(config.win_w) +
                      " is too small (m * n must be at least 4)");
  }
  LmsBlock b;
  b.config_ = config;
  b.skip_channels_ = skip_channels;
  if (use_lms) {
    b.pim_ = SpatialScanParams::create(config, rng);
    b.pam_ = SpatialScanParams::create(config, rng);
    b.scale_ = Tensor::scalar(real(1), true);
  } else {
    b.conv_core_ =
        ResidualBlock::create(config.channels, config.channels, 1, rng);
  }
  if (skip_channels > 0) {
    b.up_proj_ = Conv2dParams::create(config.channels, skip_channels, 1, rng);
    b.fuse_ = Conv2dParams::create(2 * skip_channels, skip_channels, 1, rng);
  }
  return b;
}

StageFeatures LmsBlock::forward(const Tensor& f, const Tensor& skip) {
  if (skip_channels_ > 0) {
    if (!skip.defined() || skip.rank() != 4 || f.rank() != 4 ||
        skip.dim(0) != f.dim(0) || skip.dim(1) != skip_channels_ ||
        skip.dim(2) != 2 * f.dim(2) || skip.dim(3) != 2 * f.dim(3)) {
      throw ShapeError(
          "lms_block stage " + std::to_string(config_.stage) + ": skip " +
          (skip.defined() ? skip.shape().str() : "<none>") +
          " is not aligned with input " + f.shape().str() + " (expected N x " +
          std::to_string(skip_channels_) + " x 2H x 2W)");
    }
  }
  StageFeatures s;
  s.input = f;
  if (conv_core_) {
    s.after_pim = conv_core_->forward(f);
    s.after_pam = s.after_pim;
  } else {
    s.after_pim = pim(f, config_, pim_, scale_);
    s.after_pam = pam(s.after_pim, config_, pam_, scale_);
  }
  if (skip_channels_ == 0) {
    s.output = s.after_pam;
    return s;
  }
  const Tensor up = conv2d(upsample_bilinear(s.after_pam, 2), *up_proj_);
  s.output = conv2d(concat({up, skip}, 1), *fuse_);
  return s;
}

void LmsBlock::set_mode(NormMode mode) {
  if (conv_core_) conv_core_->set_mode(mode);
}

void LmsBlock::collect(ParameterList& out, const std::string& prefix) const {
  if (conv_core_) {
    conv_core_->collect(out, prefix + "core.");
  } else {
    pim_.collect(out, prefix + "pim.");
    pam_.collect(out, prefix + "pam.");
    out.add(prefix + "scale", scale_);
  }
  if (up_proj_) up_proj_->collect(out, prefix + "up_proj.");
  if (fuse_) fuse_->collect(out, prefix + "fuse.");
}

Decoder Decoder::create(const DecoderConfig& config, Rng& rng) {
  Decoder d;
  d.config_ = config;
  const auto& ch = config.encoder_channels;
  for (std::size_t k = 0; k < kDecoderStages; ++k) {
    LmsConfig lc;
    lc.win_h = config.windows[k][0];
    lc.win_w = config.windows[k][1];
    lc.channels = ch[3 - k];
    lc.stage = k + 1;
    lc.d_state = config.d_state;
    lc.expand = config.expand;
    lc.conv_width = config.conv_width;
    const std::size_t skip = k + 1 < kDecoderStages ? ch[2 - k] : 0;
    d.blocks_.push_back(LmsBlock::create(lc, skip, config.use_lms, rng));
  }
  return d;
}

DecoderOutput Decoder::forward(const EncoderFeatures& features) {
  DecoderOutput out;
  Tensor x = features.stages[3];
  for (std::size_t k = 0; k < kDecoderStages; ++k) {
    const Tensor skip =
        k + 1 < kDecoderStages ? features.stages[2 - k] : Tensor();
    out.stages[k] = blocks_[k].forward(x, skip);
    x = out.stages[k].output;
  }
  return out;
}

void Decoder::set_mode(NormMode mode) {
  for (auto& b : blocks_) b.set_mode(mode);
}

void Decoder::collect(ParameterList& out, const std::string& prefix) const {
  for (std::size_t k = 0; k < blocks_.size(); ++k) {
    blocks_[k].collect(out, prefix + "stage" + std::to_string(k + 1) + ".");
  }
}

}  // namespace MSV_PRECISION_NS
}  // namespace msv

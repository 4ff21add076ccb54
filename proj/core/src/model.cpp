#include "msv/model.hpp"

#include <cmath>
#include <sstream>

namespace msv {
inline namespace MSV_PRECISION_NS {

void ModelConfig::validate() const {
  if (num_classes < 2) {
    throw ConfigError("num_classes must be at least 2 (background included)");
  }
  if (task == Task::kBinary && num_classes != 2) {
    throw ConfigError("binary task requires num_classes = 2, got " +
                      std::to_string(num_classes));
  }
  for (std::size_t c : channels) {
    if (c == 0) throw ConfigError("channel schedule entries must be positive");
  }
  for (const auto& w : windows) {
    if (w[0] == 0 || w[1] == 0 || w[0] * w[1] < 4) {
      throw ConfigError("each window must cover at least 4 pixels, got " +
                        std::to_string(w[0]) + "x" + std::to_string(w[1]));
    }
  }
  if (epsilon < 0) throw ConfigError("epsilon must be >= 0");
  if (dice_smooth < 0) throw ConfigError("dice_smooth must be >= 0");
  if (d_state == 0 || expand == 0 || conv_width == 0) {
    throw ConfigError("d_state, expand and conv_width must be positive");
  }
}

namespace {

// Decoder stage indices (deepest first) feeding MSAA: centre, previous, next.
struct MsaaWiring {
  std::size_t centre, previous, next;
};

MsaaWiring msaa_wiring(MsaaPlacement placement) {
  return placement == MsaaPlacement::kMiddle ? MsaaWiring{1, 0, 3}
                                             : MsaaWiring{3, 1, 2};
}

double l2(const Tensor& t) {
  double s = 0;
  for (real v : t.data()) s += double(v) * double(v);
  return std::sqrt(s);
}

}  // namespace

MsvMamba MsvMamba::create(const ModelConfig& config) {
  config.validate();
  MsvMamba m;
  m.config_ = config;
  Rng rng(mix_seed(config.seed, 0));

  EncoderConfig ec;
  ec.in_channels = config.in_channels;
  ec.channels = config.channels;
  m.encoder_ = Encoder::create(ec, rng);

  DecoderConfig dc;
  dc.encoder_channels = config.channels;
  dc.windows = config.windows;
  dc.d_state = config.d_state;
  dc.expand = config.expand;
  dc.conv_width = config.conv_width;
  dc.use_lms = config.use_lms;
  m.decoder_ = Decoder::create(dc, rng);

  const std::size_t head_in = m.decoder_.stage_channels(kDecoderStages - 1);
  if (config.use_msaa) {
    const MsaaWiring w = msaa_wiring(config.msaa_placement);
    MsaaConfig mc;
    mc.in_channels = m.decoder_.stage_channels(w.centre) +
                     m.decoder_.stage_channels(w.previous) +
                     m.decoder_.stage_channels(w.next);
    mc.out_channels = head_in;
    mc.pooling = config.msaa_pooling;
    m.msaa_ = MsaaParams::create(mc, rng);
  }
  const std::size_t classes = config.output_channels();
  m.main_head_ = Conv2dParams::create(head_in, classes, 1, rng);
  if (config.use_aux) {
    for (std::size_t k = 0; k < kDecoderStages; ++k) {
      m.aux_heads_.push_back(
          Conv2dParams::create(m.decoder_.stage_channels(k), classes, 1, rng));
    }
    m.raw_omega_ = Tensor::zeros(Shape{kDecoderStages}, true);
  }
  return m;
}

ForwardTrace MsvMamba::forward_traced(const Tensor& image) {
  ForwardTrace t;
  t.encoder = encoder_.forward(image);
  t.decoder = decoder_.forward(t.encoder);
  const std::size_t h = image.dim(2), w = image.dim(3);

  Tensor top = t.decoder.stages[kDecoderStages - 1].output;
  if (msaa_) {
    const MsaaWiring wr = msaa_wiring(config_.msaa_placement);
    t.msaa = msaa(t.decoder.stages[wr.centre].output,
                  t.decoder.stages[wr.previous].output,
                  t.decoder.stages[wr.next].output, *msaa_);
    const Tensor aligned =
        t.msaa.dim(2) == top.dim(2) && t.msaa.dim(3) == top.dim(3)
            ? t.msaa
            : resize_bilinear(t.msaa, top.dim(2), top.dim(3));
    top = add(top, aligned);
  }
  // The 1x1 head commutes with bilinear upsampling, so it runs at the lower
  // resolution.
  t.preds.logits_main = aux_head(top, main_head_, h, w);
  for (std::size_t k = 0; k < aux_heads_.size(); ++k) {
    t.preds.logits_aux.push_back(
        aux_head(t.decoder.stages[k].output, aux_heads_[k], h, w));
  }
  return t;
}

PredictionSet MsvMamba::forward(const Tensor& image) {
  return forward_traced(image).preds;
}

void MsvMamba::set_mode(NormMode mode) {
  encoder_.set_mode(mode);
  decoder_.set_mode(mode);
}

ParameterList MsvMamba::parameters() const {
  ParameterList out;
  encoder_.collect(out, "encoder.");
  decoder_.collect(out, "decoder.");
  if (msaa_) msaa_->collect(out, "msaa.");
  main_head_.collect(out, "head.main.");
  for (std::size_t k = 0; k < aux_heads_.size(); ++k) {
    aux_heads_[k].collect(out, "head.aux" + std::to_string(k + 1) + ".");
  }
  if (raw_omega_.defined()) out.add("loss.raw_omega", raw_omega_);
  return out;
}

LossConfig MsvMamba::loss_config() const {
  LossConfig lc;
  lc.epsilon = config_.effective_epsilon();
  lc.task = config_.task;
  lc.dice_smooth = config_.dice_smooth;
  lc.xce_weight = config_.xce_weight;
  lc.dice_weight = config_.dice_weight;
  lc.raw_omega = raw_omega_;
  return lc;
}

Labels labels_from_tensor(const Tensor& mask) {
  if (mask.rank() != 4 || mask.dim(1) != 1) {
    throw ShapeError("labels_from_tensor: expected N x 1 x H x W, got " +
                     mask.shape().str());
  }
  std::vector<std::int32_t> v(mask.numel());
  const auto d = mask.data();
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = static_cast<std::int32_t>(std::lround(d[i]));
  }
  return Labels(mask.dim(0), mask.dim(2), mask.dim(3), std::move(v));
}

Labels predict_classes(const Tensor& logits, Task task) {
  if (logits.rank() != 4) {
    throw ShapeError("predict_classes: expected N x C x H x W, got " +
                     logits.shape().str());
  }
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  const std::size_t hw = logits.dim(2) * logits.dim(3);
  const auto z = logits.data();
  std::vector<std::int32_t> v(n * hw);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t p = 0; p < hw; ++p) {
      const std::size_t base = b * c * hw + p;
      if (task == Task::kBinary) {
        v[b * hw + p] = z[base] > 0 ? 1 : 0;
        continue;
      }
      std::size_t best = 0;
      for (std::size_t k = 1; k < c; ++k) {
        if (z[base + k * hw] > z[base + best * hw]) best = k;
      }
      v[b * hw + p] = static_cast<std::int32_t>(best);
    }
  }
  return Labels(n, logits.dim(2), logits.dim(3), std::move(v));
}

std::string activation_report(const ForwardTrace& trace) {
  std::ostringstream os;
  for (std::size_t k = 0; k < trace.encoder.stages.size(); ++k) {
    if (trace.encoder.stages[k].defined()) {
      os << "encoder.stage" << k + 1 << " |x|=" << l2(trace.encoder.stages[k]) << "\n";
    }
  }
  for (std::size_t k = 0; k < trace.decoder.stages.size(); ++k) {
    const StageFeatures& s = trace.decoder.stages[k];
    if (!s.output.defined()) continue;
    os << "decoder.stage" << k + 1 << " |pim|=" << l2(s.after_pim)
       << " |pam|=" << l2(s.after_pam) << " |out|=" << l2(s.output) << "\n";
  }
  if (trace.msaa.defined()) os << "msaa |x|=" << l2(trace.msaa) << "\n";
  if (trace.preds.logits_main.defined()) {
    os << "logits_main |x|=" << l2(trace.preds.logits_main) << "\n";
  }
  return os.str();
}

}  // namespace MSV_PRECISION_NS
}  // namespace msv

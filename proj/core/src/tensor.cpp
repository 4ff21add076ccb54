#include "msv/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace msv {
inline namespace MSV_PRECISION_NS {

std::string serialize_rng(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

Rng deserialize_rng(const std::string& state) {
  Rng rng;
  std::istringstream is(state);
  is >> rng;
  if (!is) throw FormatError("invalid RNG state string");
  return rng;
}

Shape::Shape(std::initializer_list<std::size_t> dims)
    : Shape(std::span<const std::size_t>(dims.begin(), dims.size())) {}

Shape::Shape(std::span<const std::size_t> dims) {
  if (dims.empty() || dims.size() > kMaxRank) {
    throw ShapeError("tensor rank must be 1..4, got " +
                     std::to_string(dims.size()));
  }
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (dims[i] == 0) throw ShapeError("tensor extents must be positive");
    dims_[i] = dims[i];
  }
  rank_ = dims.size();
}

std::size_t Shape::numel() const {
  std::size_t n = 1;
  for (std::size_t i = 0; i < rank_; ++i) n *= dims_[i];
  return n;
}

std::string Shape::str() const {
  std::string s = "[";
  for (std::size_t i = 0; i < rank_; ++i) {
    if (i) s += ", ";
    s += std::to_string(dims_[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape shape, std::vector<real> values, bool requires_grad)
    : impl_(std::make_shared<TensorStorage>()) {
  if (shape.numel() != values.size()) {
    throw ShapeError("shape " + shape.str() + " needs " +
                     std::to_string(shape.numel()) + " values, got " +
                     std::to_string(values.size()));
  }
  impl_->shape = shape;
  impl_->data = std::move(values);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(shape, real(0), requires_grad);
}

Tensor Tensor::ones(Shape shape, bool requires_grad) {
  return full(shape, real(1), requires_grad);
}

Tensor Tensor::full(Shape shape, real value, bool requires_grad) {
  return Tensor(shape, std::vector<real>(shape.numel(), value), requires_grad);
}

Tensor Tensor::scalar(real value, bool requires_grad) {
  return Tensor(Shape{1}, {value}, requires_grad);
}

Tensor Tensor::uniform(Shape shape, Rng& rng, real lo, real hi,
                       bool requires_grad) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<real> v(shape.numel());
  for (auto& x : v) x = static_cast<real>(dist(rng));
  return Tensor(shape, std::move(v), requires_grad);
}

Tensor Tensor::normal(Shape shape, Rng& rng, real mean, real stddev,
                      bool requires_grad) {
  std::normal_distribution<double> dist(mean, stddev);
  std::vector<real> v(shape.numel());
  for (auto& x : v) x = static_cast<real>(dist(rng));
  return Tensor(shape, std::move(v), requires_grad);
}

real Tensor::item() const {
  if (numel() != 1) {
    throw ContractError("item() on tensor of shape " + shape().str());
  }
  return impl_->data[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  return *this;
}

std::span<real> Tensor::grad_buffer() const {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), real(0));
  return impl_->grad;
}

Tensor Tensor::detach() const {
  return Tensor(impl_->shape, impl_->data, false);
}

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) {
  g_grad_enabled = false;
}

NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tape& Tape::active() {
  thread_local Tape tape;
  return tape;
}

void Tape::record(std::string_view op, std::vector<Tensor> inputs,
                  Tensor output, BackwardFn backward) {
  entries_.push_back(
      Entry{op, std::move(inputs), std::move(output), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward() requires a scalar loss, got shape " +
                        (loss.defined() ? loss.shape().str() : "<undefined>"));
  }
  if (!loss.requires_grad()) {
    clear();
    return;
  }
  loss.grad_buffer()[0] += real(1);
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (!it->output.has_grad()) continue;
    it->backward(it->output.grad());
  }
  clear();
}

void backward(const Tensor& loss) { Tape::active().backward(loss); }

Tensor finish_op(std::string_view op, Tensor out, std::vector<Tensor> inputs,
                 Tape::BackwardFn backward) {
#ifndef NDEBUG
  bool inputs_finite = true;
  for (const auto& in : inputs) {
    for (real v : in.data()) {
      if (!std::isfinite(v)) {
        inputs_finite = false;
        break;
      }
    }
  }
  if (inputs_finite) {
    for (real v : out.data()) {
      if (!std::isfinite(v)) {
        throw ContractError(std::string(op) +
                            " produced a non-finite value from finite inputs");
      }
    }
  }
#endif
  if (!g_grad_enabled) return out;
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Tensor& t) { return t.requires_grad(); });
  if (!any) return out;
  out.set_requires_grad(true);
  Tape::active().record(op, std::move(inputs), out, std::move(backward));
  return out;
}

}  // namespace MSV_PRECISION_NS
}  // namespace msv

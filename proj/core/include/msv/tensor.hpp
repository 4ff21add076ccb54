#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "msv/errors.hpp"
#include "msv/precision.hpp"
#include "msv/random.hpp"

namespace msv {
inline namespace MSV_PRECISION_NS {

/// Extents of a tensor, rank 1..4. Feature maps are N x C x H x W.
class Shape {
 public:
  static constexpr std::size_t kMaxRank = 4;

  Shape() = default;
  Shape(std::initializer_list<std::size_t> dims);
  explicit Shape(std::span<const std::size_t> dims);

  std::size_t rank() const { return rank_; }
  std::size_t operator[](std::size_t i) const { return dims_[i]; }
  std::size_t numel() const;
  std::span<const std::size_t> dims() const { return {dims_.data(), rank_}; }
  std::string str() const;

  bool operator==(const Shape& other) const = default;

 private:
  std::array<std::size_t, kMaxRank> dims_{};
  std::size_t rank_ = 0;
};

struct TensorStorage {
  Shape shape;
  std::vector<real> data;
  std::vector<real> grad;  // empty until something accumulates into it
  bool requires_grad = false;
};

/// Shared handle to dense row-major storage. Copies alias the same storage;
/// use detach() for an independent copy.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<real> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor ones(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, real value, bool requires_grad = false);
  static Tensor scalar(real value, bool requires_grad = false);
  static Tensor uniform(Shape shape, Rng& rng, real lo, real hi,
                        bool requires_grad = false);
  static Tensor normal(Shape shape, Rng& rng, real mean, real stddev,
                       bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.rank(); }
  std::size_t dim(std::size_t i) const { return impl_->shape[i]; }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<const real> data() const { return impl_->data; }
  std::span<real> mutable_data() { return impl_->data; }
  real item() const;
  real operator[](std::size_t i) const { return impl_->data[i]; }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on);

  bool has_grad() const { return !impl_->grad.empty(); }
  /// Empty span when nothing has been accumulated.
  std::span<const real> grad() const { return impl_->grad; }
  /// Zero-initialized on first access.
  std::span<real> grad_buffer() const;
  void zero_grad() const { impl_->grad.clear(); }

  /// Independent copy of the values; not connected to the tape.
  Tensor detach() const;
  bool is_same(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  std::shared_ptr<TensorStorage> impl_;
};

/// Define-by-run operation record. Each thread owns one active tape.
class Tape {
 public:
  using BackwardFn = std::function<void(std::span<const real> grad_out)>;

  static Tape& active();

  void record(std::string_view op, std::vector<Tensor> inputs, Tensor output,
              BackwardFn backward);
  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

  /// Runs every recorded op once in reverse order, then clears the tape.
  void backward(const Tensor& loss);

 private:
  struct Entry {
    std::string_view op;
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn backward;
  };
  std::vector<Entry> entries_;
};

/// Populates grad of every requires_grad tensor reachable from `loss`.
/// Throws ContractError unless `loss` holds exactly one element.
void backward(const Tensor& loss);

bool grad_enabled();

/// Disables tape recording for the enclosing scope.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Finalizes an op result: in debug builds checks finiteness, then records
/// `backward` on the active tape when recording is on and some input
/// requires grad.
Tensor finish_op(std::string_view op, Tensor out,
                 std::vector<Tensor> inputs, Tape::BackwardFn backward);

}  // namespace MSV_PRECISION_NS
}  // namespace msv

#pragma once

#include <string>
#include <vector>

#include "msv/tensor.hpp"

namespace msv {
inline namespace MSV_PRECISION_NS {

struct NamedParam {
  std::string name;
  Tensor tensor;
  bool trainable = true;  // false for running statistics
};

class ParameterList {
 public:
  void add(std::string name, const Tensor& t, bool trainable = true) {
    items_.push_back({std::move(name), t, trainable});
  }

  const std::vector<NamedParam>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }

  /// Total scalar count of trainable tensors.
  std::size_t trainable_count() const {
    std::size_t n = 0;
    for (const auto& p : items_) {
      if (p.trainable) n += p.tensor.numel();
    }
    return n;
  }

  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

 private:
  std::vector<NamedParam> items_;
};

}  // namespace MSV_PRECISION_NS
}  // namespace msv

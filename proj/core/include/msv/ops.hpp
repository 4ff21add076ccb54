#pragma once

#include <span>
#include <vector>

#include "msv/tensor.hpp"

namespace msv {
inline namespace MSV_PRECISION_NS {

// Elementwise binary ops. Operands must have equal shapes, or one of them
// must match the other on a leading prefix of dims and be 1 on every
// trailing dim (e.g. [N,C,1,1] against [N,C,H,W]). A one-element operand
// broadcasts against anything.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, real factor);
Tensor add_scalar(const Tensor& a, real value);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor silu(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor exp(const Tensor& a);

/// Sum / mean of all elements as a shape-[1] tensor.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

/// [p x q] * [q x r].
Tensor matmul(const Tensor& a, const Tensor& b);

/// Affine map over the last axis: x [..., K] * w [K x N] + bias [N].
/// `bias` may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

Tensor reshape(const Tensor& a, Shape shape);

/// Joins along `axis`; all other extents must agree.
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis);

/// Contiguous range [start, start + length) along `axis`.
Tensor slice(const Tensor& a, std::size_t axis, std::size_t start,
             std::size_t length);

/// Reverses element order along `axis`.
Tensor flip(const Tensor& a, std::size_t axis);

/// out[i] = a[index[i]] with the given output shape. Backward scatters.
Tensor gather(const Tensor& a, Shape shape, std::vector<std::size_t> index);

/// Zero-pads an N x C x H x W map at the bottom and right edges.
Tensor pad_bottom_right(const Tensor& x, std::size_t out_h, std::size_t out_w);

/// Shape of broadcasting a with b under the trailing-singleton rule.
Shape broadcast_shape(const Shape& a, const Shape& b);

}  // namespace MSV_PRECISION_NS
}  // namespace msv

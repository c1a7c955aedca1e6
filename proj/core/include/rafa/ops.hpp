#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rafa/tensor.hpp"

// Differentiable primitives. Every op checks shapes at its boundary and
// throws DimensionError naming the offending shapes.
//
// Binary ops accept either equal shapes or a rank-1 right operand whose
// length equals the last dimension of the left operand (broadcast across
// rows). Nothing richer is supported.

namespace rafa {

enum class ElementwiseOp { add, mul, tanh, sigmoid, relu };

/// Dispatches to the named op; `b` is required for add/mul and ignored
/// otherwise.
Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b = {});

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);

Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
/// log(max(a, floor)); the gradient is zero where the floor is active.
Tensor log_clamped(const Tensor& a, double floor);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

/// Softmax over the last axis, max-subtracted.
Tensor softmax(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// [L x C] -> [C]: mean over positions.
Tensor mean_rows(const Tensor& x);
/// Single element as a [1] tensor.
Tensor pick(const Tensor& x, std::size_t flat_index);

/// Rows of a rank-2 tensor by index; repeated indices scatter-add on backward.
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> indices);

enum class PoolMode { mean, max };

/// [N x C] -> [groups x C]; each output row aggregates the listed input rows.
Tensor pool_rows(const Tensor& x, const std::vector<std::vector<std::size_t>>& groups,
                 PoolMode mode);

/// Per-vector normalization over the last axis:
/// (x - mean) / sqrt(var + eps) * gain + bias, population variance.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

/// Kernel-3, stride-1, zero-padded per-channel convolution.
/// x: [L x C], kernel: [3 x C] -> [L x C].
Tensor depthwise_conv1d(const Tensor& x, const Tensor& kernel);

/// relu(depthwise_conv1d(x, depthwise) * pointwise + bias). Length preserved.
Tensor conv1d_separable(const Tensor& x, const Tensor& depthwise, const Tensor& pointwise,
                        const Tensor& bias);

enum class Padding { same, none };

/// Sliding per-channel mean over positions of [L x C]. With same padding the
/// divisor is the number of in-range elements in the window.
Tensor avgpool1d(const Tensor& x, std::size_t window, std::size_t stride, Padding padding);

/// x: [H x W x Cin], weight: [K x K x Cin x Cout], bias: [Cout].
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t pad);

/// Half-pixel-center bilinear resampling of [H x W x C] with edge clamping:
/// src = (dst + 0.5) * in / out - 0.5.
Tensor bilinear_resize(const Tensor& x, std::size_t out_h, std::size_t out_w);

}  // namespace rafa

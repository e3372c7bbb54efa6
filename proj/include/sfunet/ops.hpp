#pragma once

#include <utility>

#include "sfunet/autograd.hpp"

/// Differentiable primitives over [N,C,H,W] tensors. Shape violations throw
/// std::invalid_argument naming both shapes.
namespace sfunet::ops {

/// Cross-correlation (no kernel flip). weight is [Cout,Cin,kh,kw], bias is
/// [1,Cout,1,1] or undefined.
Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride,
           int padding);

/// Stride-2, 2x2-kernel transposed convolution. weight is [Cin,Cout,2,2];
/// each input pixel scatters into its own 2x2 output patch.
Var conv_transpose2d(const Var& x, const Var& weight, const Var& bias);

/// 2x2 max pooling, stride 2. Gradient goes to the first maximal element
/// in row-major window order.
Var maxpool2(const Var& x);

Var global_avg_pool(const Var& x);

Var relu(const Var& x);
Var sigmoid(const Var& x);

Var concat_channels(const Var& a, const Var& b);
Var slice_channels(const Var& x, std::size_t begin, std::size_t count);
std::pair<Var, Var> split_channels(const Var& x, std::size_t at);

/// Elementwise x * a where each dimension of `a` either matches x or is 1.
Var broadcast_mul(const Var& x, const Var& a);
Var add(const Var& x, const Var& y);
Var scale(const Var& x, Real s);

/// Sum of all elements as a [1,1,1,1] tensor.
Var sum(const Var& x);

/// Bilinear 2x upsampling, half-pixel centers (align_corners = false).
Var interpolate2x(const Var& x);

/// Max / mean over the channel axis, producing [N,1,H,W].
Var channel_max(const Var& x);
Var channel_mean(const Var& x);

}  // namespace sfunet::ops

#pragma once

#include <cstdint>
#include <vector>

#include "mininet/tensor.hpp"

// Differentiable tensor operations. Every op records itself on the tape of its
// tracked inputs (if any) and is a plain computation otherwise. All functions
// are instantiated for float and double.

namespace mininet {

struct Conv2dParams {
  int stride = 1;
  int padding = 0;
  int groups = 1;
};

/// Output spatial extent of a convolution/pooling window along one axis.
inline std::int64_t conv_out_size(std::int64_t in, int kernel, int stride, int padding) {
  return (in + 2 * padding - kernel) / stride + 1;
}

// --- elementwise -----------------------------------------------------------
template <typename T> Tensor<T> relu(const Tensor<T>& x);
template <typename T> Tensor<T> relu6(const Tensor<T>& x);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T> Tensor<T> exp(const Tensor<T>& x);
template <typename T> Tensor<T> abs(const Tensor<T>& x);
template <typename T> Tensor<T> square(const Tensor<T>& x);
template <typename T> Tensor<T> reciprocal(const Tensor<T>& x);

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b);
/// Elementwise minimum; the gradient goes to the smaller operand, ties to `a`.
template <typename T> Tensor<T> elementwise_min(const Tensor<T>& a, const Tensor<T>& b);

template <typename T> Tensor<T> scalar_mul(const Tensor<T>& x, T s);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& x, T s);

// --- reductions ------------------------------------------------------------
template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x);
/// NCHW -> N x 1 x H x W.
template <typename T> Tensor<T> channel_mean(const Tensor<T>& x);
/// NCHW -> N x C x 1 x 1.
template <typename T> Tensor<T> spatial_mean(const Tensor<T>& x);
/// NCHW -> N x C.
template <typename T> Tensor<T> global_avg_pool(const Tensor<T>& x);

// --- broadcasting ----------------------------------------------------------
/// x[n,c,...] * s[n,c] for s with N*C elements.
template <typename T> Tensor<T> scale_channels(const Tensor<T>& x, const Tensor<T>& s);

// --- structural ------------------------------------------------------------
/// Concatenates along dimension 1; all other dimensions must agree.
template <typename T> Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts);
/// Channels [begin, end) along dimension 1.
template <typename T> Tensor<T> slice_channels(const Tensor<T>& x, std::int64_t begin, std::int64_t end);

// --- layers ----------------------------------------------------------------
/// NCHW convolution, zero padding. Weight shape O x (C/groups) x k x k; bias
/// may be empty.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, Conv2dParams p);

/// x: N x in, w: out x in, b: out (may be empty).
template <typename T>
Tensor<T> fully_connected(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias);

template <typename T> Tensor<T> nearest_upsample2x(const Tensor<T>& x);

/// Bilinear resampling with half-pixel centres (align_corners = false).
template <typename T> Tensor<T> bilinear_resize(const Tensor<T>& x, std::int64_t out_h, std::int64_t out_w);

template <typename T> Tensor<T> max_pool2d(const Tensor<T>& x, int kernel, int stride, int padding);

/// Mean over a window x window neighbourhood with edge-replicated borders.
template <typename T> Tensor<T> box_filter(const Tensor<T>& x, int window);

/// Forward differences along width / height; the last column / row is zero.
template <typename T> Tensor<T> diff_x(const Tensor<T>& x);
template <typename T> Tensor<T> diff_y(const Tensor<T>& x);

/// Batch normalisation over N, H, W per channel. In training mode the batch
/// statistics normalise the input and the running estimates are updated in
/// place; otherwise the running estimates are used.
template <typename T>
Tensor<T> batch_norm2d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, Tensor<T>& running_mean,
                       Tensor<T>& running_var, bool training, T momentum = T(0.1), T eps = T(1e-5));

}  // namespace mininet

#pragma once

#include <vector>

#include "pcnet/nn/tensor.hpp"

// Differentiable tensor operations. Binary elementwise ops broadcast along
// any axis where one operand has extent 1.
namespace pcnet::nn {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor abs(const Tensor& x);

// Channel-wise average pooling: [N,C,H,W] -> [N,1,H,W].
Tensor channel_mean(const Tensor& x);
Tensor mean_all(const Tensor& x);
Tensor sum_all(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);
Tensor concat_channels(const std::vector<Tensor>& parts);
// Channels [begin, begin + count).
Tensor slice_channels(const Tensor& x, int begin, int count);

// Dense convolution with zero padding. weight: [Cout, Cin, k, k] stored as
// Shape{Cout, Cin, k, k}; bias optional ([1, Cout, 1, 1]).
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              int stride, int pad);
// Per-channel 3x3-style convolution. weight: [C, 1, k, k].
Tensor depthwise_conv2d(const Tensor& x, const Tensor& weight,
                        const Tensor& bias, int pad);
// 1x1 convolution / per-token linear map. weight: [Cout, Cin, 1, 1].
Tensor pointwise(const Tensor& x, const Tensor& weight, const Tensor& bias);

// Normalizes each token over channels, then scales and shifts per channel.
Tensor layer_norm_channels(const Tensor& x, const Tensor& gamma,
                           const Tensor& beta, double eps = 1e-6);

// Non-overlapping average pooling with kernel = stride.
Tensor avg_pool(const Tensor& x, int kh, int kw);
// Bilinear resize with half-pixel centers and edge clamping.
Tensor resize_bilinear(const Tensor& x, int h, int w);

// Per-sample matrix product. Each tensor is viewed as [N, c, h*w]; the
// result has shape [N, rows, cols, 1].
Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_a,
              bool transpose_b);
// Softmax along h*w for every (n, c) row.
Tensor softmax_rows(const Tensor& x);

// Bilinear sampling of x at pixel coordinates grid[:,0] (x) and grid[:,1]
// (y). Samples whose coordinate falls outside [0, W-1] x [0, H-1] are 0.
// Differentiable w.r.t. x and grid.
Tensor grid_sample(const Tensor& x, const Tensor& grid);

// In-bounds predicate of grid_sample as a constant [N,1,Ho,Wo] mask.
Tensor grid_valid_mask(const Tensor& grid, int in_h, int in_w);

// Pixel coordinates h(x, y) for every output pixel. h: [N, 9, 1, 1]
// row-major 3x3 matrices. Result: [N, 2, out_h, out_w]. Differentiable
// w.r.t. h.
Tensor homography_grid(const Tensor& h, int out_h, int out_w);

}  // namespace pcnet::nn

#pragma once

#include <array>

#include "pcnet/core/homography.hpp"
#include "pcnet/core/image.hpp"
#include "pcnet/nn/tensor.hpp"

namespace pcnet::she {

// Homography taking src[j] to dst[j] for the four correspondences. Points are
// Hartley-normalized before solving. Throws DegenerateHomography when either
// quadrilateral has three (near-)collinear corners or the 8x8 system has
// condition number above 1e12.
Homography solve_dlt(const std::array<Point2, 4>& src,
                     const std::array<Point2, 4>& dst);

// Homography moving each image corner c_j to c_j + d_j.
Homography displacement_to_homography(const CornerDisplacement& d, int width,
                                      int height);
CornerDisplacement homography_to_displacement(const Homography& h, int width,
                                              int height);

// Output of Warp(I, H): pixel (x, y) holds I sampled at H(x, y).
struct WarpResult {
  Image warped;
  Image valid;  // 1 where H(x, y) lies inside the input frame
};

// Bilinear warp; out-of-frame samples are 0. Output size defaults to the
// input size.
WarpResult warp_image(const Image& img, const Homography& h, int out_height = 0,
                      int out_width = 0);

// Differentiable counterparts -------------------------------------------------

// [N, 8, 1, 1] corner offsets (dx0, dy0, ..., dx3, dy3) -> [N, 9, 1, 1]
// row-major homographies normalized to h[8] = 1. Forward maps corner c_j to
// c_j + d_j; with `inverse` the map goes the other way. Gradients come from
// implicit differentiation of the DLT system.
nn::Tensor dlt_from_displacement(const nn::Tensor& displacement, int width,
                                 int height, bool inverse);

// L * H * R for constant 3x3 L and R, per sample.
nn::Tensor conjugate_homography(const nn::Tensor& h, const Mat3& left,
                                const Mat3& right);

struct WarpTensors {
  nn::Tensor warped;  // [N, C, out_h, out_w]
  nn::Tensor valid;   // [N, 1, out_h, out_w], constant
};

// Warp with per-sample homographies h [N, 9, 1, 1] mapping output pixels to
// input pixels. Invalid samples are exactly 0.
WarpTensors warp_tensor(const nn::Tensor& img, const nn::Tensor& h, int out_h,
                        int out_w);

nn::Tensor homography_to_tensor(const std::vector<Homography>& hs);
std::vector<Homography> tensor_to_homographies(const nn::Tensor& h);

nn::Tensor image_to_tensor(const Image& img);
nn::Tensor images_to_tensor(const std::vector<Image>& imgs);
Image tensor_to_image(const nn::Tensor& t, int index = 0);

}  // namespace pcnet::she

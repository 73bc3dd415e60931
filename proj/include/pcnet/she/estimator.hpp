#pragma once

#include <array>
#include <random>
#include <vector>

#include "pcnet/core/config.hpp"
#include "pcnet/core/homography.hpp"
#include "pcnet/core/image.hpp"
#include "pcnet/nn/parameters.hpp"
#include "pcnet/nn/tensor.hpp"

namespace pcnet::she {

struct EstimatorOptions {
  int size = 128;                        // working resolution (square)
  std::array<int, 3> channels{32, 64, 64};
  int hidden = 64;                       // regressor width
  int iterations = 6;
  int radius = 2;                        // lookup window is (2r+1)^2 per level
  int adapter_dim = 8;
  int semantic_channels = 64;

  static EstimatorOptions from(const RunConfig& config);
  int stride() const { return 8; }
  int feature_size() const { return size / 8; }
};

// Base weights live under "estimator.", adapters under "adapter.".
void init_estimator(nn::ParameterStore& store, const EstimatorOptions& opts,
                    std::mt19937_64& rng);
void init_estimator_adapters(nn::ParameterStore& store, const EstimatorOptions& opts,
                             std::mt19937_64& rng);

// volume[n, a, y, x] = <fa[n, :, a], fb[n, :, y, x]> / sqrt(C), where a
// enumerates fa's positions in row-major order. Shape [N, Ha*Wa, Hb, Wb].
nn::Tensor build_correlation_volume(const nn::Tensor& fa, const nn::Tensor& fb);

// For every query position q = (i, j) of an Hq x Wq grid, samples volume[n, q]
// bilinearly on the (2r+1)^2 window around coords[n, :, i, j] (zero outside).
// Channel k = (dy + r) * (2r + 1) + (dx + r). Differentiable w.r.t. volume
// only; coords are treated as constants.
nn::Tensor corr_lookup(const nn::Tensor& volume, const nn::Tensor& coords, int radius);

// Grayscale, bilinear resize to size x size and per-sample standardization.
// Returns a constant [N, 1, size, size] tensor.
nn::Tensor working_input(const nn::Tensor& images, int size);

struct EstimatorRun {
  // Corner displacements after each iteration, [N, 8, 1, 1], working pixels.
  std::vector<nn::Tensor> displacements;
  // Samples whose update was rejected at some iteration because the
  // quadrilateral degenerated.
  std::vector<bool> flagged;

  const nn::Tensor& final() const { return displacements.back(); }
};

class HomographyEstimator {
 public:
  HomographyEstimator(const nn::ParameterStore& store, EstimatorOptions opts);

  // rgb and thermal must already be working inputs ([N,1,S,S]). f_s may be
  // undefined, which skips the adapters entirely.
  EstimatorRun run(const nn::Tensor& rgb, const nn::Tensor& thermal, const nn::Tensor& f_s) const;

  // Siamese encoder features (adapted when f_s is defined).
  nn::Tensor encode(const nn::Tensor& x, const nn::Tensor& f_s) const;

  const EstimatorOptions& options() const { return opts_; }

 private:
  nn::Tensor regress(const nn::Tensor& x) const;

  const nn::ParameterStore& store_;
  EstimatorOptions opts_;
};

// Affine map from an h x w pixel grid to a work x work grid under half-pixel
// resizing: x_small = a * x_big + (a - 1) / 2.
Mat3 resize_map(int work, int h, int w);

// Working-resolution homography (from displacements) lifted to full pixel
// coordinates: thermal (t_h x t_w) -> rgb (rgb_h x rgb_w). With `inverse`
// the result maps rgb pixels to thermal pixels, which is what warping the
// thermal image into the RGB frame needs. Differentiable.
nn::Tensor lift_homography(const nn::Tensor& displacement, int work, int rgb_h, int rgb_w,
                           int t_h, int t_w, bool inverse);

// Inference convenience wrapper: Homography mapping thermal pixels to RGB
// pixels at the images' own resolutions.
Homography estimate_homography(const HomographyEstimator& estimator, const Image& rgb,
                               const Image& thermal, const nn::Tensor& f_s);

}  // namespace pcnet::she

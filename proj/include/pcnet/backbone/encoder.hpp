#pragma once

#include <array>
#include <random>
#include <string>

#include "pcnet/iimc/correlation.hpp"
#include "pcnet/nn/parameters.hpp"
#include "pcnet/nn/tensor.hpp"

namespace pcnet::backbone {

// Four levels at strides 4, 8, 16, 32.
struct FeaturePyramid {
  std::array<nn::Tensor, 4> levels;
};

// Hierarchical encoder: per stage a strided patch embedding (4x4 for the
// first stage, 2x2 after), channel LayerNorm and one mixing block
// (depthwise 3x3, LayerNorm, pointwise C->2C, relu, pointwise 2C->C,
// residual). Weights live under `prefix`.
class Encoder {
 public:
  Encoder(const nn::ParameterStore& store, std::string prefix);

  static void init(nn::ParameterStore& store, const std::string& prefix, int in_channels,
                   const std::array<int, 4>& channels, std::mt19937_64& rng);

  // images: [N, C, H, W] with H and W divisible by 32 (ShapeError
  // otherwise). Inputs are shifted by -0.5.
  FeaturePyramid encode(const nn::Tensor& images) const;

 private:
  const nn::ParameterStore& store_;
  std::string prefix_;
};

// Cross-attention from RGB (queries) to thermal (keys/values) on the top
// level, followed by a 1x1 projection with bias to the semantic width.
class SemanticFusion {
 public:
  SemanticFusion(const nn::ParameterStore& store, std::string prefix);

  static void init(nn::ParameterStore& store, const std::string& prefix, int channels,
                   int attention_dim, int semantic_channels, std::mt19937_64& rng);

  // Throws ShapeError when the inputs differ in shape.
  nn::Tensor fuse(const nn::Tensor& f_rgb4, const nn::Tensor& f_t4) const;
  // The attention output before the projection.
  nn::Tensor attend(const nn::Tensor& f_rgb4, const nn::Tensor& f_t4) const;

 private:
  const nn::ParameterStore& store_;
  std::string prefix_;
};

}  // namespace pcnet::backbone

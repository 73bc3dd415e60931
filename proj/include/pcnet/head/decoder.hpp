#pragma once

#include <array>
#include <random>
#include <string>
#include <vector>

#include "pcnet/nn/parameters.hpp"
#include "pcnet/nn/tensor.hpp"

namespace pcnet::head {

// Top-down decoder: every level is projected to D channels; starting from
// the coarsest, the running map is upsampled 2x, the next finer projection
// is added and a mixing block (depthwise 3x3, relu, pointwise, residual)
// runs. A 1x1 head gives one logit channel, upsampled 4x to input size.
class Decoder {
 public:
  Decoder(const nn::ParameterStore& store, std::string prefix);

  static void init(nn::ParameterStore& store, const std::string& prefix,
                   const std::array<int, 4>& channels, int width, std::mt19937_64& rng);

  // levels: strides 4, 8, 16, 32 of one input. Returns logits [N, 1, 4h1, 4w1].
  nn::Tensor decode(const std::array<nn::Tensor, 4>& levels) const;

 private:
  const nn::ParameterStore& store_;
  std::string prefix_;
};

// bce_w * mean BCE(clamp(p, 1e-7, 1 - 1e-7), g) + dice_w * mean over the batch
// of 1 - (2 sum(p g) + 1) / (sum p + sum g + 1), with p = sigmoid(logits).
// Fused and differentiable w.r.t. logits. gt is a constant.
nn::Tensor bce_dice_loss(const nn::Tensor& logits, const nn::Tensor& gt, double bce_w = 1.0,
                         double dice_w = 1.0);

// Same objective on a single probability map.
double bce_dice_value(const std::vector<double>& prob, const std::vector<double>& gt,
                      double bce_w = 1.0, double dice_w = 1.0);

}  // namespace pcnet::head

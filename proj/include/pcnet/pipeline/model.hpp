#pragma once

#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "pcnet/core/config.hpp"
#include "pcnet/core/homography.hpp"
#include "pcnet/core/image.hpp"
#include "pcnet/data/dataset.hpp"
#include "pcnet/nn/parameters.hpp"
#include "pcnet/nn/tensor.hpp"

namespace pcnet::pipeline {

// Parameter name prefixes.
inline constexpr const char* kEstimatorPrefix = "estimator.";
inline constexpr const char* kAdapterPrefix = "adapter.";

struct ModelOutput {
  nn::Tensor logits;          // [N, 1, S, S]
  nn::Tensor homography;      // [N, 9, 1, 1] thermal -> rgb on the S grid, constant
  nn::Tensor warped_thermal;  // [N, 3, S, S], thermal resampled into the RGB frame
  nn::Tensor valid;           // [N, 1, S, S]
  std::vector<bool> flagged;  // estimator rejected an update for this sample
};

// Full network: two encoders, semantic fusion, the adapted estimator, the
// thermal warp, per-level correlation and the decoder. Reads every weight
// from the store on each call, so the store may be updated between calls.
class PCNet {
 public:
  PCNet(const nn::ParameterStore& store, RunConfig config);

  // Registers every tensor of the model. Estimator base weights are created
  // too; training loads them from a pretraining checkpoint.
  static void init(nn::ParameterStore& store, const RunConfig& config, std::mt19937_64& rng);

  // rgb, thermal: [N, 3, S, S] with S = config.input_size.
  ModelOutput forward(const nn::Tensor& rgb, const nn::Tensor& thermal) const;

  const RunConfig& config() const { return config_; }

 private:
  const nn::ParameterStore& store_;
  RunConfig config_;
};

// A sample resized to the network input size.
struct PreparedSample {
  std::string id;
  Image rgb;      // 3 x S x S
  Image thermal;  // 3 x S x S; gray RGB under thermal_as_rgb
  std::optional<Image> gt;  // 1 x S x S, binarized
  std::optional<Image> gt_full;  // original resolution, for evaluation
  std::set<std::string> attributes;
  int rgb_height = 0, rgb_width = 0;
  int thermal_height = 0, thermal_width = 0;
};

PreparedSample prepare_sample(const data::Sample& sample, int size, const AblationFlags& ablation);

struct Batch {
  nn::Tensor rgb, thermal, gt;  // gt undefined when any sample lacks it
  std::vector<std::string> ids;
};

Batch make_batch(const std::vector<PreparedSample>& samples, const std::vector<std::size_t>& indices);

// Lifts S-grid homographies to each sample's original pixel coordinates.
Homography lift_to_original(const Homography& h_small, int size, const PreparedSample& s);

}  // namespace pcnet::pipeline

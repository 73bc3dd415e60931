#pragma once

#include <functional>
#include <string>
#include <vector>

#include "pcnet/eval/metrics.hpp"
#include "pcnet/pipeline/checkpoint.hpp"
#include "pcnet/pipeline/model.hpp"

namespace pcnet::pipeline {

using LogFn = std::function<void(const std::string&)>;

// Fresh model state for stage-2 training: every tensor initialized from
// config.rng_seed, then the estimator base weights copied from a pretraining
// checkpoint and frozen (left trainable under full_finetune_estimator).
// Throws ConfigError when the checkpoint is not an estimator checkpoint or
// lacks a tensor, or when its estimator shape options differ from config.
Checkpoint init_training_state(const RunConfig& config, const Checkpoint& estimator);

struct TrainHooks {
  LogFn log;
  // Called after each finished epoch with the updated state.
  std::function<void(const Checkpoint&)> on_epoch;
};

// Trains from state.epoch until `until_epoch` epochs are complete. Batches
// come from a per-epoch shuffle seeded by (rng_seed, epoch), so resuming a
// saved state continues the exact same sequence. Samples whose id falls in
// the fixed 10% hash hold-out are used only for validation.
// Throws NonFiniteLoss ("epoch:batch"), EmptyDataset, and Error when a
// frozen tensor changes.
void train_model(Checkpoint& state, const std::vector<PreparedSample>& samples, int until_epoch,
                 const TrainHooks& hooks = {});

struct Prediction {
  std::string id;
  Image prob;             // 1 x rgb_h x rgb_w, 8-bit quantized
  Homography homography;  // thermal -> rgb, original pixel coordinates
  Homography homography_small;  // the same map on the network input grid
  bool flagged = false;
};

// Forward pass without gradients, in batches of config.batch_size.
std::vector<Prediction> predict(const PCNet& model, const std::vector<PreparedSample>& samples);

// Scores predictions against each sample's full-resolution gt.
eval::EvalReport evaluate_predictions(const std::vector<Prediction>& preds,
                                      const std::vector<PreparedSample>& samples);

// Fraction of hold-out samples in a dataset (fixed).
inline constexpr double kValidationFraction = 0.1;

}  // namespace pcnet::pipeline

#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pcnet/core/config.hpp"
#include "pcnet/core/image.hpp"
#include "pcnet/data/dataset.hpp"
#include "pcnet/she/estimator.hpp"

namespace pcnet::she {

// One supervised estimator example at working resolution.
struct EstimatorPair {
  std::string id;
  Image rgb;      // [1, S, S], standardized gray
  Image thermal;  // [1, S, S], standardized gray
  std::array<double, 8> target{};  // true corner displacement, working pixels
};

// Requires sample.true_homography (DataError otherwise).
EstimatorPair make_estimator_pair(const data::Sample& sample, int size);

// Symmetry g in [0, 8) of the square applied to both views (bit 2:
// transpose, then bit 0: flip x, bit 1: flip y). The target becomes the
// conjugated homography F H F^-1, so the pair stays exact.
EstimatorPair symmetric_pair(const EstimatorPair& pair, unsigned g);

struct PretrainOptions {
  int epochs = 20;
  int batch_size = 2;
  double lr = 1e-3;
  double weight_decay = 1e-4;
  double holdout = 0.1;
  std::uint64_t seed = 1;

  static PretrainOptions from(const RunConfig& config);
};

struct EstimatorEval {
  double identity_error = 0;  // mean corner error of the identity guess
  double final_error = 0;     // after the last iteration
  std::vector<double> per_iteration;  // index 0 = identity, k = after iteration k
  // Share of samples whose corner error never increases from one iteration
  // to the next (identity start included).
  double monotone_fraction = 0;
  std::vector<double> sample_errors;
  int flagged = 0;
};

EstimatorEval evaluate_estimator(const HomographyEstimator& estimator,
                                 const std::vector<EstimatorPair>& pairs, int batch_size = 16);

struct PretrainReport {
  EstimatorEval initial;  // hold-out set before training
  EstimatorEval final;    // hold-out set after training
  std::vector<double> epoch_loss;
  std::size_t train_count = 0;
  std::size_t holdout_count = 0;
};

using LogFn = std::function<void(const std::string&)>;

// Trains the "estimator." tensors of `store` (initialized by the caller) on
// the non-hold-out pairs with a per-iteration L1 corner loss summed over
// iterations. Each epoch every training pair is shown under a random
// symmetry of the square (see symmetric_pair). Cosine learning-rate decay
// over all steps. Deterministic for a given store, data and options.
// Throws EmptyDataset, NonFiniteLoss.
PretrainReport pretrain_estimator(const std::vector<EstimatorPair>& pairs,
                                  nn::ParameterStore& store, const EstimatorOptions& opts,
                                  const PretrainOptions& popts, const LogFn& log = {});

}  // namespace pcnet::she

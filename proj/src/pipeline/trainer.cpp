#include "pcnet/pipeline/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>

#include "pcnet/core/errors.hpp"
#include "pcnet/data/image_io.hpp"
#include "pcnet/head/decoder.hpp"
#include "pcnet/nn/ops.hpp"
#include "pcnet/she/estimator.hpp"
#include "pcnet/she/geometry.hpp"

namespace pcnet::pipeline {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string hex(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

bool starts_with(const std::string& s, const char* prefix) { return s.rfind(prefix, 0) == 0; }

nn::AdamW::Options adam_options(const RunConfig& c) {
  nn::AdamW::Options o;
  o.lr = c.lr;
  o.weight_decay = c.weight_decay;
  return o;
}

double max_identity_deviation(const Homography& h) {
  const Mat3 d = h.matrix() - Mat3::Identity();
  return d.cwiseAbs().maxCoeff();
}

}  // namespace

Checkpoint init_training_state(const RunConfig& config, const Checkpoint& estimator) {
  if (estimator.kind != "estimator")
    throw ConfigError("training needs a pretrained estimator checkpoint (got kind '" +
                      estimator.kind + "'); training the estimator jointly from scratch is not supported");
  const she::EstimatorOptions want = she::EstimatorOptions::from(config);
  const she::EstimatorOptions have = she::EstimatorOptions::from(estimator.config);
  if (want.size != have.size || want.channels != have.channels || want.hidden != have.hidden ||
      want.radius != have.radius)
    throw ConfigError("estimator options differ from the pretrained checkpoint");

  Checkpoint state;
  state.kind = "model";
  state.config = config;
  std::mt19937_64 rng(config.rng_seed);
  PCNet::init(state.params, config, rng);
  std::size_t expected = 0;
  for (const auto& [name, entry] : state.params.entries())
    if (starts_with(name, kEstimatorPrefix)) {
      ++expected;
      if (!estimator.params.contains(name))
        throw ConfigError("estimator checkpoint lacks tensor " + name);
    }
  const std::size_t copied = state.params.copy_from(estimator.params, kEstimatorPrefix);
  if (copied != expected) throw ConfigError("estimator checkpoint tensors have mismatched shapes");
  state.params.set_frozen_prefix(kEstimatorPrefix, !config.ablation.full_finetune_estimator);
  std::ostringstream rs;
  rs << rng;
  state.rng_state = rs.str();
  return state;
}

void train_model(Checkpoint& state, const std::vector<PreparedSample>& samples, int until_epoch,
                 const TrainHooks& hooks) {
  const RunConfig& c = state.config;
  auto log = [&](const std::string& s) {
    if (hooks.log) hooks.log(s);
  };
  std::vector<std::size_t> train, val;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!samples[i].gt) throw MissingGroundTruth("training sample '" + samples[i].id + "' has no gt");
    (data::is_holdout(samples[i].id, kValidationFraction) ? val : train).push_back(i);
  }
  if (train.empty()) throw EmptyDataset("no training samples outside the validation split");

  nn::AdamW opt(state.params, adam_options(c));
  opt.set_lr_scale(kAdapterPrefix, c.adapter_lr_scale);
  opt.set_steps(state.optimizer_steps);
  opt.first_moments() = state.adam_m;
  opt.second_moments() = state.adam_v;
  const PCNet model(state.params, c);
  const bool check_frozen = !c.ablation.full_finetune_estimator;
  const std::uint64_t frozen_hash = state.params.hash(kEstimatorPrefix);

  log("stage=train event=start lr=" + fmt(c.lr) + " weight_decay=" + fmt(c.weight_decay) +
      " batch=" + std::to_string(c.batch_size) + " epochs=" + std::to_string(until_epoch) +
      " start_epoch=" + std::to_string(state.epoch) + " train=" + std::to_string(train.size()) +
      " val=" + std::to_string(val.size()) + " input=" + std::to_string(c.input_size) +
      " frozen_hash=" + hex(frozen_hash));

  for (int epoch = state.epoch; epoch < until_epoch; ++epoch) {
    std::vector<std::size_t> order = train;
    std::mt19937_64 shuffle_rng(c.rng_seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0, grad_norm_max = 0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += c.batch_size) {
      const std::vector<std::size_t> idx(
          order.begin() + static_cast<std::ptrdiff_t>(start),
          order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + c.batch_size)));
      const Batch b = make_batch(samples, idx);
      const ModelOutput out = model.forward(b.rgb, b.thermal);
      const nn::Tensor loss = head::bce_dice_loss(out.logits, b.gt, c.bce_weight, c.dice_weight);
      if (!std::isfinite(loss.item()))
        throw NonFiniteLoss(std::to_string(epoch + 1) + ":" + std::to_string(batches) + " (" + b.ids.front() + ")");
      loss.backward();
      grad_norm_max = std::max(grad_norm_max, state.params.clip_grad_norm(c.grad_clip));
      opt.step();
      state.params.zero_grad();
      loss_sum += loss.item();
      ++batches;
    }
    state.epoch = epoch + 1;
    state.optimizer_steps = opt.steps();
    state.adam_m = opt.first_moments();
    state.adam_v = opt.second_moments();

    const std::uint64_t now = state.params.hash(kEstimatorPrefix);
    if (check_frozen && now != frozen_hash)
      throw Error("frozen estimator tensors changed during epoch " + std::to_string(state.epoch));

    std::string line = "stage=train epoch=" + std::to_string(state.epoch) +
                       " loss=" + fmt(loss_sum / batches) + " grad_norm_max=" + fmt(grad_norm_max);
    if (!val.empty()) {
      std::vector<PreparedSample> vs;
      for (std::size_t i : val) vs.push_back(samples[i]);
      const std::vector<Prediction> preds = predict(model, vs);
      const eval::EvalReport r = evaluate_predictions(preds, vs);
      double dev = 0;
      int flagged = 0;
      for (const Prediction& p : preds) {
        dev = std::max(dev, max_identity_deviation(p.homography_small));
        flagged += p.flagged;
      }
      line += " val_em=" + fmt(r.aggregate.mean.e) + " val_sm=" + fmt(r.aggregate.mean.s) +
              " val_fm=" + fmt(r.aggregate.mean.f) + " h_max_dev=" + fmt(dev) +
              " flagged=" + std::to_string(flagged);
      state.metrics["val_em"] = r.aggregate.mean.e;
      state.metrics["val_sm"] = r.aggregate.mean.s;
      state.metrics["val_fm"] = r.aggregate.mean.f;
    }
    state.metrics["train_loss"] = loss_sum / batches;
    log(line + " frozen_hash=" + hex(now));
    if (hooks.on_epoch) hooks.on_epoch(state);
  }
}

std::vector<Prediction> predict(const PCNet& model, const std::vector<PreparedSample>& samples) {
  nn::NoGradGuard no_grad;
  const int size = model.config().input_size;
  const std::size_t bs = static_cast<std::size_t>(std::max(1, model.config().batch_size));
  std::vector<Prediction> out;
  out.reserve(samples.size());
  for (std::size_t start = 0; start < samples.size(); start += bs) {
    std::vector<std::size_t> idx(std::min(bs, samples.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    const Batch b = make_batch(samples, idx);
    const ModelOutput o = model.forward(b.rgb, b.thermal);
    const nn::Tensor prob = nn::sigmoid(o.logits);
    const std::vector<Homography> hs = she::tensor_to_homographies(o.homography);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const PreparedSample& s = samples[idx[k]];
      Prediction p;
      p.id = s.id;
      p.prob = data::quantize_8bit(
          resize_bilinear(she::tensor_to_image(prob, static_cast<int>(k)), s.rgb_height, s.rgb_width));
      p.homography_small = hs[k];
      p.homography = lift_to_original(hs[k], size, s);
      p.flagged = o.flagged[k];
      out.push_back(std::move(p));
    }
  }
  return out;
}

eval::EvalReport evaluate_predictions(const std::vector<Prediction>& preds,
                                      const std::vector<PreparedSample>& samples) {
  std::vector<eval::EvalItem> items;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const PreparedSample& s = samples.at(i);
    if (!s.gt_full) throw MissingGroundTruth("sample '" + s.id + "' has no gt");
    items.push_back({preds[i].id, preds[i].prob, *s.gt_full, s.attributes});
  }
  return eval::evaluate_dataset(items);
}

}  // namespace pcnet::pipeline

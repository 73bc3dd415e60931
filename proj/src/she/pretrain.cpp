#include "pcnet/she/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "pcnet/core/errors.hpp"
#include "pcnet/nn/ops.hpp"
#include "pcnet/she/geometry.hpp"

namespace pcnet::she {

namespace {

struct Batch {
  nn::Tensor rgb, thermal, target;
};

Batch make_batch(const std::vector<EstimatorPair>& pairs, const std::vector<std::size_t>& idx,
                 std::size_t begin, std::size_t end) {
  std::vector<Image> rgb, th;
  std::vector<double> target;
  for (std::size_t i = begin; i < end; ++i) {
    const auto& p = pairs[idx[i]];
    rgb.push_back(p.rgb);
    th.push_back(p.thermal);
    target.insert(target.end(), p.target.begin(), p.target.end());
  }
  const int n = static_cast<int>(end - begin);
  return {images_to_tensor(rgb), images_to_tensor(th),
          nn::Tensor::from({n, 8, 1, 1}, std::move(target))};
}

double corner_error(const double* d, const std::array<double, 8>& t) {
  double s = 0;
  for (int j = 0; j < 4; ++j) s += std::hypot(d[2 * j] - t[2 * j], d[2 * j + 1] - t[2 * j + 1]);
  return s / 4;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

}  // namespace

EstimatorPair make_estimator_pair(const data::Sample& sample, int size) {
  if (!sample.true_homography)
    throw DataError("sample '" + sample.id + "' has no true homography");
  EstimatorPair p;
  p.id = sample.id;
  p.rgb = tensor_to_image(working_input(image_to_tensor(sample.rgb), size));
  p.thermal = tensor_to_image(working_input(image_to_tensor(sample.thermal), size));
  const Mat3 small = resize_map(size, sample.rgb.height(), sample.rgb.width()) *
                     sample.true_homography->matrix() *
                     resize_map(size, sample.thermal.height(), sample.thermal.width()).inverse();
  const Homography h = normalize_homography(small);
  const CornerDisplacement d = homography_to_displacement(h, size, size);
  for (int j = 0; j < 4; ++j) {
    p.target[2 * j] = d.d[j].x;
    p.target[2 * j + 1] = d.d[j].y;
  }
  return p;
}

EstimatorPair symmetric_pair(const EstimatorPair& p, unsigned g) {
  if (g == 0) return p;
  const int n = p.rgb.width();
  const double last = n - 1;
  Mat3 f = Mat3::Identity();
  if (g & 4) f << 0, 1, 0, 1, 0, 0, 0, 0, 1;
  if (g & 1) f.row(0) = Eigen::RowVector3d(0, 0, last) - f.row(0);
  if (g & 2) f.row(1) = Eigen::RowVector3d(0, 0, last) - f.row(1);
  auto move = [&](const Image& in) {
    Image out(in.channels(), n, n);
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const Eigen::Vector3d q = f * Eigen::Vector3d(x, y, 1);
        const int qy = static_cast<int>(std::lround(q.y())), qx = static_cast<int>(std::lround(q.x()));
        for (int c = 0; c < in.channels(); ++c) out.at(c, qy, qx) = in.at(c, y, x);
      }
    return out;
  };
  EstimatorPair out{p.id, move(p.rgb), move(p.thermal), {}};
  CornerDisplacement cd;
  for (int j = 0; j < 4; ++j) cd.d[j] = {p.target[2 * j], p.target[2 * j + 1]};
  const Mat3 h = displacement_to_homography(cd, n, n).matrix();
  const CornerDisplacement moved =
      homography_to_displacement(normalize_homography(f * h * f.inverse()), n, n);
  for (int j = 0; j < 4; ++j) {
    out.target[2 * j] = moved.d[j].x;
    out.target[2 * j + 1] = moved.d[j].y;
  }
  return out;
}

PretrainOptions PretrainOptions::from(const RunConfig& c) {
  PretrainOptions o;
  o.epochs = c.pretrain_epochs;
  o.batch_size = c.pretrain_batch_size;
  o.lr = c.pretrain_lr;
  o.weight_decay = c.pretrain_weight_decay;
  o.holdout = c.pretrain_holdout;
  o.seed = c.rng_seed;
  return o;
}

EstimatorEval evaluate_estimator(const HomographyEstimator& estimator,
                                 const std::vector<EstimatorPair>& pairs, int batch_size) {
  nn::NoGradGuard no_grad;
  EstimatorEval ev;
  const int k = estimator.options().iterations;
  ev.per_iteration.assign(k + 1, 0.0);
  if (pairs.empty()) return ev;
  std::vector<std::size_t> idx(pairs.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const std::array<double, 8> zero{};
  int monotone = 0;
  for (std::size_t b = 0; b < pairs.size(); b += batch_size) {
    const std::size_t e = std::min(pairs.size(), b + batch_size);
    const Batch batch = make_batch(pairs, idx, b, e);
    const EstimatorRun run = estimator.run(batch.rgb, batch.thermal, nn::Tensor());
    for (std::size_t s = 0; s < e - b; ++s) {
      const auto& t = pairs[b + s].target;
      double prev = corner_error(zero.data(), t);
      ev.per_iteration[0] += prev;
      bool mono = true;
      for (int it = 0; it < k; ++it) {
        const double err = corner_error(run.displacements[it].values().data() + s * 8, t);
        ev.per_iteration[it + 1] += err;
        mono = mono && err <= prev;
        prev = err;
      }
      ev.sample_errors.push_back(prev);
      monotone += mono;
      ev.flagged += run.flagged[s];
    }
  }
  for (double& v : ev.per_iteration) v /= static_cast<double>(pairs.size());
  ev.identity_error = ev.per_iteration.front();
  ev.final_error = ev.per_iteration.back();
  ev.monotone_fraction = static_cast<double>(monotone) / static_cast<double>(pairs.size());
  return ev;
}

PretrainReport pretrain_estimator(const std::vector<EstimatorPair>& pairs,
                                  nn::ParameterStore& store, const EstimatorOptions& opts,
                                  const PretrainOptions& popts, const LogFn& log) {
  std::vector<EstimatorPair> holdout;
  std::vector<std::size_t> train;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (data::is_holdout(pairs[i].id, popts.holdout)) holdout.push_back(pairs[i]);
    else train.push_back(i);
  }
  if (train.empty()) throw EmptyDataset("no training pairs left after the hold-out split");

  const HomographyEstimator estimator(store, opts);
  PretrainReport report;
  report.train_count = train.size();
  report.holdout_count = holdout.size();
  report.initial = evaluate_estimator(estimator, holdout);
  if (log)
    log("stage=pretrain event=start train=" + std::to_string(train.size()) +
        " holdout=" + std::to_string(holdout.size()) +
        " identity_error=" + fmt(report.initial.identity_error) +
        " initial_error=" + fmt(report.initial.final_error));

  // Only the base estimator is optimized here.
  std::map<std::string, bool> saved_frozen;
  for (auto& [name, entry] : store.entries()) {
    saved_frozen[name] = entry.frozen;
    if (name.rfind("estimator.", 0) != 0) store.set_frozen(name, true);
  }
  nn::AdamW opt(store, {.lr = popts.lr, .weight_decay = popts.weight_decay});
  const std::size_t bs = static_cast<std::size_t>(popts.batch_size);
  const std::size_t steps_per_epoch = (train.size() + bs - 1) / bs;
  const double total_steps = static_cast<double>(steps_per_epoch) * popts.epochs;
  std::int64_t step = 0;

  for (int epoch = 0; epoch < popts.epochs; ++epoch) {
    std::vector<std::size_t> order = train;
    std::mt19937_64 rng(popts.seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0;
    for (std::size_t b = 0; b < order.size(); b += bs) {
      const std::size_t e = std::min(order.size(), b + bs);
      std::vector<EstimatorPair> augmented;
      for (std::size_t i = b; i < e; ++i) augmented.push_back(symmetric_pair(pairs[order[i]], rng() >> 61));
      std::vector<std::size_t> local(augmented.size());
      for (std::size_t i = 0; i < local.size(); ++i) local[i] = i;
      const Batch batch = make_batch(augmented, local, 0, augmented.size());
      const EstimatorRun run = estimator.run(batch.rgb, batch.thermal, nn::Tensor());
      nn::Tensor loss;
      for (const auto& d : run.displacements) {
        const nn::Tensor l = nn::mean_all(nn::abs(nn::sub(d, batch.target)));
        loss = loss.defined() ? nn::add(loss, l) : l;
      }
      const double lv = loss.item();
      if (!std::isfinite(lv)) throw NonFiniteLoss(std::to_string(epoch + 1) + ":" + std::to_string(b / bs));
      loss.backward();
      opt.set_lr(popts.lr * (0.5 * (1 + std::cos(std::numbers::pi * step / total_steps))));
      opt.step();
      store.zero_grad();
      loss_sum += lv * static_cast<double>(e - b);
      ++step;
    }
    report.epoch_loss.push_back(loss_sum / static_cast<double>(order.size()));
    if (log) {
      const EstimatorEval ev = evaluate_estimator(estimator, holdout);
      log("stage=pretrain epoch=" + std::to_string(epoch + 1) +
          " loss=" + fmt(report.epoch_loss.back()) + " holdout_error=" + fmt(ev.final_error) +
          " monotone=" + fmt(ev.monotone_fraction));
    }
  }
  for (const auto& [name, frozen] : saved_frozen) store.set_frozen(name, frozen);
  report.final = evaluate_estimator(estimator, holdout);
  if (log)
    log("stage=pretrain event=done holdout_error=" + fmt(report.final.final_error) +
        " identity_error=" + fmt(report.final.identity_error) +
        " monotone=" + fmt(report.final.monotone_fraction));
  return report;
}

}  // namespace pcnet::she

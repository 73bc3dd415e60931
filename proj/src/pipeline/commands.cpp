#include "pcnet/pipeline/commands.hpp"

#include <cstdio>
#include <random>

#include "pcnet/core/errors.hpp"
#include "pcnet/data/image_io.hpp"
#include "pcnet/data/synthetic.hpp"
#include "pcnet/she/geometry.hpp"

namespace pcnet::pipeline {

namespace {

void emit(const LogFn& log, const std::string& s) {
  if (log) log(s);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::vector<PreparedSample> prepare_all(const std::vector<data::Sample>& samples, const RunConfig& c) {
  std::vector<PreparedSample> out;
  out.reserve(samples.size());
  for (const data::Sample& s : samples) out.push_back(prepare_sample(s, c.input_size, c.ablation));
  return out;
}

Checkpoint load_model(const fs::path& path, const std::vector<std::string>& ablation) {
  Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.kind != "model")
    throw ConfigError(path.string() + " is a '" + ckpt.kind + "' checkpoint, expected a trained model");
  for (const std::string& a : ablation) apply_ablation(ckpt.config.ablation, a);
  return ckpt;
}

std::string epoch_name(int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%03d.ckpt", epoch);
  return buf;
}

}  // namespace

std::vector<data::Sample> synthesize_dataset(const RunConfig& c) {
  c.validate();
  std::mt19937_64 rng(c.rng_seed);
  std::uniform_int_distribution<int> objects(c.synth_min_objects, c.synth_max_objects);
  std::uniform_int_distribution<int> distractors(0, c.synth_max_distractors);
  data::ToySceneSpec spec;
  spec.image_size = c.synth_image_size;
  spec.misalign = {c.synth_rotation_deg, c.synth_translation, c.synth_scale, c.synth_perspective};
  std::vector<data::Sample> out;
  out.reserve(c.synth_count);
  for (int i = 0; i < c.synth_count; ++i) {
    spec.n_objects = objects(rng);
    spec.n_distractors = distractors(rng);
    data::Sample s = data::generate_toy_scene(spec, rng());
    char id[16];
    std::snprintf(id, sizeof id, "%05d", i);
    s.id = id;
    out.push_back(std::move(s));
  }
  return out;
}

void cmd_synth(const RunConfig& c, const fs::path& out_root, const LogFn& log) {
  const std::vector<data::Sample> samples = synthesize_dataset(c);
  data::write_vt_dataset(out_root, samples);
  emit(log, "stage=synth count=" + std::to_string(samples.size()) + " size=" +
                std::to_string(c.synth_image_size) + " seed=" + std::to_string(c.rng_seed) +
                " out=" + out_root.string());
}

PretrainResult cmd_pretrain(const RunConfig& c, const fs::path& out_dir, const LogFn& log) {
  c.validate();
  if (c.pretrain_root.empty()) throw ConfigError("pretrain_root is not set");
  const std::vector<data::Sample> samples = data::load_vt_dataset(c.pretrain_root, data::Split::kTest);
  const she::EstimatorOptions eo = she::EstimatorOptions::from(c);
  std::vector<she::EstimatorPair> pairs;
  pairs.reserve(samples.size());
  for (const data::Sample& s : samples) pairs.push_back(she::make_estimator_pair(s, eo.size));

  Checkpoint ckpt;
  ckpt.kind = "estimator";
  ckpt.config = c;
  std::mt19937_64 rng(c.rng_seed);
  she::init_estimator(ckpt.params, eo, rng);
  PretrainResult result;
  result.report = she::pretrain_estimator(pairs, ckpt.params, eo, she::PretrainOptions::from(c), log);
  ckpt.params.set_frozen_prefix("", true);
  ckpt.epoch = c.pretrain_epochs;
  ckpt.metrics["identity_error"] = result.report.final.identity_error;
  ckpt.metrics["initial_error"] = result.report.initial.final_error;
  ckpt.metrics["holdout_error"] = result.report.final.final_error;
  ckpt.metrics["monotone_fraction"] = result.report.final.monotone_fraction;
  result.checkpoint = out_dir / "estimator.ckpt";
  save_checkpoint(ckpt, result.checkpoint);
  emit(log, "stage=pretrain event=saved holdout_error=" + fmt(result.report.final.final_error) +
                " initial_error=" + fmt(result.report.initial.final_error) +
                " checkpoint=" + result.checkpoint.string());
  return result;
}

Checkpoint cmd_train(const RunConfig& c, const std::optional<fs::path>& estimator_ckpt,
                     const std::optional<fs::path>& resume_ckpt, const fs::path& out_dir,
                     const LogFn& log) {
  c.validate();
  if (c.train_root.empty()) throw ConfigError("train_root is not set");
  Checkpoint state;
  if (resume_ckpt) {
    state = load_checkpoint(*resume_ckpt);
    if (state.kind != "model") throw ConfigError("--resume needs a model checkpoint");
    // Only the epoch budget may change on resume.
    RunConfig stored = state.config;
    stored.epochs = c.epochs;
    stored.checkpoint_every = c.checkpoint_every;
    if (!(stored == c)) throw ConfigError("resume config differs from the checkpoint's config");
    state.config = c;
  } else {
    if (!estimator_ckpt)
      throw ConfigError("train needs --estimator (a pretrain checkpoint); the estimator is never trained from scratch here");
    state = init_training_state(c, load_checkpoint(*estimator_ckpt));
  }
  const std::vector<PreparedSample> samples =
      prepare_all(data::load_vt_dataset(c.train_root, data::Split::kTrain), c);
  TrainHooks hooks;
  hooks.log = log;
  hooks.on_epoch = [&](const Checkpoint& s) {
    if (c.checkpoint_every > 0 && s.epoch % c.checkpoint_every == 0)
      save_checkpoint(s, out_dir / epoch_name(s.epoch));
  };
  train_model(state, samples, c.epochs, hooks);
  save_checkpoint(state, out_dir / "final.ckpt");
  emit(log, "stage=train event=saved epoch=" + std::to_string(state.epoch) +
                " checkpoint=" + (out_dir / "final.ckpt").string());
  return state;
}

eval::EvalReport cmd_eval(const fs::path& checkpoint, const fs::path& data_root,
                          const fs::path& report, const std::optional<fs::path>& pred_dir,
                          const std::vector<std::string>& ablation, const LogFn& log) {
  const Checkpoint ckpt = load_model(checkpoint, ablation);
  const std::vector<PreparedSample> samples =
      prepare_all(data::load_vt_dataset(data_root, data::Split::kTrain), ckpt.config);
  const PCNet model(ckpt.params, ckpt.config);
  const std::vector<Prediction> preds = predict(model, samples);
  if (pred_dir) fs::create_directories(*pred_dir);
  if (pred_dir)
    for (const Prediction& p : preds) data::write_png(*pred_dir / (p.id + ".png"), p.prob);
  const eval::EvalReport r = evaluate_predictions(preds, samples);
  eval::write_report(r, report);
  emit(log, "stage=eval count=" + std::to_string(r.per_image.size()) + " em=" +
                fmt(r.aggregate.mean.e) + " sm=" + fmt(r.aggregate.mean.s) + " fm=" +
                fmt(r.aggregate.mean.f) + " report=" + report.string());
  return r;
}

void cmd_infer(const fs::path& checkpoint, const fs::path& rgb_path, const fs::path& thermal_path,
               const fs::path& out_dir, const std::vector<std::string>& ablation, const LogFn& log) {
  const Checkpoint ckpt = load_model(checkpoint, ablation);
  data::Sample s;
  s.id = rgb_path.stem().string();
  s.rgb = to_three_channel(data::read_image(rgb_path));
  s.thermal = data::read_image(thermal_path);
  const PreparedSample prepared = prepare_sample(s, ckpt.config.input_size, ckpt.config.ablation);
  const PCNet model(ckpt.params, ckpt.config);
  const Prediction p = predict(model, {prepared}).front();

  const Image& thermal = ckpt.config.ablation.thermal_as_rgb ? s.rgb : s.thermal;
  const she::WarpResult w =
      she::warp_image(thermal, p.homography.inverse(), s.rgb.height(), s.rgb.width());
  fs::create_directories(out_dir);
  data::write_png(out_dir / "pred.png", p.prob);
  data::write_homography(out_dir / "H.txt", p.homography);
  data::write_png(out_dir / "warped_t.png", w.warped);
  emit(log, "stage=infer id=" + s.id + " flagged=" + std::to_string(p.flagged) +
                " out=" + out_dir.string());
}

}  // namespace pcnet::pipeline

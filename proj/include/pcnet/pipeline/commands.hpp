#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pcnet/core/config.hpp"
#include "pcnet/data/dataset.hpp"
#include "pcnet/eval/metrics.hpp"
#include "pcnet/pipeline/checkpoint.hpp"
#include "pcnet/pipeline/trainer.hpp"
#include "pcnet/she/pretrain.hpp"

namespace pcnet::pipeline {

namespace fs = std::filesystem;

// Toy scenes for config.synth_*; object and distractor counts and per-scene
// seeds come from config.rng_seed. Ids are zero-padded indices.
std::vector<data::Sample> synthesize_dataset(const RunConfig& config);

// Materializes synthesize_dataset under out_root (RGB/T/GT/H + attributes).
void cmd_synth(const RunConfig& config, const fs::path& out_root, const LogFn& log = {});

struct PretrainResult {
  she::PretrainReport report;
  fs::path checkpoint;
};

// Pretrains the estimator on config.pretrain_root and writes
// out_dir/estimator.ckpt with every tensor frozen. DataError names the first
// sample without a homography file.
PretrainResult cmd_pretrain(const RunConfig& config, const fs::path& out_dir, const LogFn& log = {});

// Stage-2 training on config.train_root from a pretrained estimator, or
// resumed from a model checkpoint. Writes out_dir/epoch_NNN.ckpt every
// config.checkpoint_every epochs and out_dir/final.ckpt. Returns the final
// state.
Checkpoint cmd_train(const RunConfig& config, const std::optional<fs::path>& estimator_ckpt,
                     const std::optional<fs::path>& resume_ckpt, const fs::path& out_dir,
                     const LogFn& log = {});

// Runs the model from a checkpoint over a dataset with gt, writes the
// tab-separated report and, when pred_dir is set, the 8-bit predictions.
// `ablation` names are applied on top of the checkpoint's flags.
eval::EvalReport cmd_eval(const fs::path& checkpoint, const fs::path& data_root,
                          const fs::path& report, const std::optional<fs::path>& pred_dir,
                          const std::vector<std::string>& ablation = {}, const LogFn& log = {});

// Writes out_dir/pred.png (rgb size), out_dir/H.txt (thermal -> rgb,
// original pixels) and out_dir/warped_t.png (thermal warped into the RGB
// frame at rgb size).
void cmd_infer(const fs::path& checkpoint, const fs::path& rgb, const fs::path& thermal,
               const fs::path& out_dir, const std::vector<std::string>& ablation = {},
               const LogFn& log = {});

}  // namespace pcnet::pipeline

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

namespace pcnet {

// Switches that reproduce the ablation table. All off is the full model.
struct AblationFlags {
  bool disable_she = false;        // H forced to identity
  bool disable_iimc = false;       // f_rgb + f_t instead of correlation
  bool disable_intra = false;      // skip the intra-modal step
  bool disable_semantics = false;  // f_s replaced by ones
  bool thermal_as_rgb = false;     // thermal input replaced by gray RGB
  bool full_finetune_estimator = false;

  friend bool operator==(const AblationFlags&, const AblationFlags&) = default;
};

// Applies a named ablation (she|iimc|intra|semantics|thermal|fft).
// Throws ConfigError on an unknown name.
void apply_ablation(AblationFlags& flags, const std::string& name);

struct RunConfig {
  // Network.
  int input_size = 192;
  std::array<int, 4> backbone_channels{32, 64, 128, 256};
  int adapter_dim = 8;
  int attention_dim = 32;
  int semantic_channels = 64;
  int decoder_channels = 64;
  int estimator_iterations = 6;
  int estimator_size = 128;
  std::array<int, 3> estimator_channels{32, 64, 64};
  int estimator_hidden = 64;
  int corr_radius = 2;
  int max_tokens_side = 24;

  // Objective and optimizer.
  double bce_weight = 1.0;
  double dice_weight = 1.0;
  double lr = 1e-5;
  double weight_decay = 1e-4;
  int batch_size = 4;
  // Global gradient-norm limit per step; 0 disables clipping.
  double grad_clip = 1.0;
  // Learning-rate multiplier for the adapters inside the frozen estimator.
  double adapter_lr_scale = 0.1;
  int epochs = 30;
  int checkpoint_every = 5;

  // Estimator pretraining.
  double pretrain_lr = 1e-3;
  double pretrain_weight_decay = 1e-4;
  int pretrain_batch_size = 2;
  int pretrain_epochs = 20;
  double pretrain_holdout = 0.1;

  AblationFlags ablation;
  std::uint64_t rng_seed = 1;

  // Datasets.
  std::string train_root;
  std::string test_root;
  std::string pretrain_root;

  // Synthetic data generation.
  int synth_count = 100;
  int synth_image_size = 192;
  int synth_min_objects = 1;
  int synth_max_objects = 3;
  int synth_max_distractors = 2;
  double synth_rotation_deg = 10.0;
  double synth_translation = 0.10;
  double synth_scale = 0.10;
  double synth_perspective = 0.02;

  // Full-scale settings: 384 px inputs, 80 epochs.
  static RunConfig full_scale_defaults();

  // Throws ConfigError when a dimension is non-positive or inconsistent.
  void validate() const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

// Flat "key = value" text, one per line, '#' starts a comment. Keys not
// present keep the values of `base`. Unknown keys throw ConfigError.
RunConfig parse_run_config(const std::string& text,
                           const RunConfig& base = RunConfig{});
RunConfig load_run_config(const std::filesystem::path& path,
                          const RunConfig& base = RunConfig{});

// Writes every key; parse_run_config(format_run_config(c)) == c.
std::string format_run_config(const RunConfig& config);

}  // namespace pcnet

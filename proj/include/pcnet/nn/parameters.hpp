#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "pcnet/nn/tensor.hpp"

namespace pcnet::nn {

// Named learnable tensors. Iteration is in key order, so everything derived
// from a store (initialization order aside) is deterministic.
class ParameterStore {
 public:
  struct Entry {
    Tensor tensor;
    bool frozen = false;
  };

  // Registers a zero tensor. Throws if the name is taken.
  Tensor& add(const std::string& name, Shape shape);
  // Uniform in +-sqrt(6 / fan_in) * gain, drawn from rng.
  Tensor& add_kaiming(const std::string& name, Shape shape, int fan_in,
                      std::mt19937_64& rng, double gain = 1.0);
  Tensor& add_constant(const std::string& name, Shape shape, double value);

  bool contains(const std::string& name) const;
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;

  // Frozen tensors do not require grad and are skipped by optimizers.
  void set_frozen(const std::string& name, bool frozen);
  bool frozen(const std::string& name) const;
  // Applies to every name starting with prefix.
  void set_frozen_prefix(const std::string& prefix, bool frozen);

  const std::map<std::string, Entry>& entries() const { return entries_; }
  std::map<std::string, Entry>& entries() { return entries_; }

  std::size_t total_size() const;
  void zero_grad();
  // Global L2 norm over the gradients of trainable tensors. When it exceeds
  // max_norm (> 0) every gradient is scaled down to that norm. Returns the
  // norm before scaling.
  double clip_grad_norm(double max_norm);

  // Copies values (and frozen flags) for every name present in both stores
  // with matching shapes. Returns the number of tensors copied.
  std::size_t copy_from(const ParameterStore& other, const std::string& prefix = "");

  // FNV-1a over names and raw bytes; cheap bitwise-equality check.
  std::uint64_t hash(const std::string& prefix = "") const;

 private:
  std::map<std::string, Entry> entries_;
};

// Decoupled weight decay Adam. Frozen parameters are skipped entirely.
class AdamW {
 public:
  struct Options {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-2;
  };

  AdamW(ParameterStore& params, Options options);

  void step();
  void set_lr(double lr) { options_.lr = lr; }
  // Multiplies the learning rate (and the decay it drives) for every tensor
  // whose name starts with prefix. Later calls win on overlapping prefixes.
  void set_lr_scale(const std::string& prefix, double scale) { lr_scale_.emplace_back(prefix, scale); }
  const Options& options() const { return options_; }

  std::int64_t steps() const { return step_; }
  void set_steps(std::int64_t s) { step_ = s; }

  // Moment buffers keyed by parameter name, for checkpointing.
  std::map<std::string, std::vector<double>>& first_moments() { return m_; }
  std::map<std::string, std::vector<double>>& second_moments() { return v_; }

 private:
  ParameterStore& params_;
  Options options_;
  std::int64_t step_ = 0;
  std::vector<std::pair<std::string, double>> lr_scale_;
  std::map<std::string, std::vector<double>> m_;
  std::map<std::string, std::vector<double>> v_;
};

}  // namespace pcnet::nn

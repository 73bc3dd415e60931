#include "pcnet/nn/parameters.hpp"

#include <cmath>
#include <cstring>

#include "pcnet/core/errors.hpp"

namespace pcnet::nn {

Tensor& ParameterStore::add(const std::string& name, Shape shape) {
  auto [it, inserted] = entries_.try_emplace(name);
  if (!inserted) throw ConfigError("parameter '" + name + "' registered twice");
  it->second.tensor = Tensor::zeros(shape, true);
  return it->second.tensor;
}

Tensor& ParameterStore::add_kaiming(const std::string& name, Shape shape, int fan_in,
                                    std::mt19937_64& rng, double gain) {
  Tensor& t = add(name, shape);
  const double bound = gain * std::sqrt(6.0 / fan_in);
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : t.values()) v = dist(rng);
  return t;
}

Tensor& ParameterStore::add_constant(const std::string& name, Shape shape, double value) {
  Tensor& t = add(name, shape);
  std::fill(t.values().begin(), t.values().end(), value);
  return t;
}

bool ParameterStore::contains(const std::string& name) const {
  return entries_.count(name) != 0;
}

Tensor& ParameterStore::get(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return it->second.tensor;
}

const Tensor& ParameterStore::get(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return it->second.tensor;
}

void ParameterStore::set_frozen(const std::string& name, bool frozen) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ConfigError("unknown parameter '" + name + "'");
  it->second.frozen = frozen;
  it->second.tensor.set_requires_grad(!frozen);
}

bool ParameterStore::frozen(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return it->second.frozen;
}

void ParameterStore::set_frozen_prefix(const std::string& prefix, bool frozen) {
  for (auto& [name, entry] : entries_)
    if (name.rfind(prefix, 0) == 0) {
      entry.frozen = frozen;
      entry.tensor.set_requires_grad(!frozen);
    }
}

std::size_t ParameterStore::total_size() const {
  std::size_t n = 0;
  for (const auto& [name, entry] : entries_) n += entry.tensor.numel();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& [name, entry] : entries_) entry.tensor.zero_grad();
}

double ParameterStore::clip_grad_norm(double max_norm) {
  double sq = 0;
  for (auto& [name, entry] : entries_)
    if (!entry.frozen && entry.tensor.has_grad())
      for (double g : entry.tensor.grad_values()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const double k = max_norm / norm;
    for (auto& [name, entry] : entries_)
      if (!entry.frozen && entry.tensor.has_grad())
        for (double& g : entry.tensor.grad_values()) g *= k;
  }
  return norm;
}

std::size_t ParameterStore::copy_from(const ParameterStore& other, const std::string& prefix) {
  std::size_t copied = 0;
  for (auto& [name, entry] : entries_) {
    if (name.rfind(prefix, 0) != 0) continue;
    auto it = other.entries_.find(name);
    if (it == other.entries_.end()) continue;
    if (!(it->second.tensor.shape() == entry.tensor.shape()))
      throw ShapeError("parameter '" + name + "' has shape " +
                       to_string(it->second.tensor.shape()) + ", expected " +
                       to_string(entry.tensor.shape()));
    entry.tensor.values() = it->second.tensor.values();
    entry.frozen = it->second.frozen;
    entry.tensor.set_requires_grad(!entry.frozen);
    ++copied;
  }
  return copied;
}

std::uint64_t ParameterStore::hash(const std::string& prefix) const {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* data, std::size_t size) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& [name, entry] : entries_) {
    if (name.rfind(prefix, 0) != 0) continue;
    mix(name.data(), name.size());
    mix(entry.tensor.values().data(), entry.tensor.numel() * sizeof(double));
  }
  return h;
}

AdamW::AdamW(ParameterStore& params, Options options)
    : params_(params), options_(options) {}

void AdamW::step() {
  ++step_;
  const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(step_));
  for (auto& [name, entry] : params_.entries()) {
    if (entry.frozen) continue;
    Tensor& t = entry.tensor;
    if (!t.has_grad()) continue;
    const std::vector<double> g = t.grad();
    auto& m = m_[name];
    auto& v = v_[name];
    if (m.empty()) {
      m.assign(g.size(), 0.0);
      v.assign(g.size(), 0.0);
    }
    double lr = options_.lr;
    for (const auto& [prefix, scale] : lr_scale_)
      if (name.rfind(prefix, 0) == 0) lr = options_.lr * scale;
    auto& p = t.values();
    const double decay = 1.0 - lr * options_.weight_decay;
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] *= decay;
      m[i] = options_.beta1 * m[i] + (1 - options_.beta1) * g[i];
      v[i] = options_.beta2 * v[i] + (1 - options_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + options_.eps);
    }
  }
}

}  // namespace pcnet::nn

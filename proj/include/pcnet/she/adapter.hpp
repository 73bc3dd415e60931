#pragma once

#include <random>
#include <string>

#include "pcnet/nn/parameters.hpp"
#include "pcnet/nn/tensor.hpp"

namespace pcnet::she {

// X * sigmoid(channel_mean(Y)); Y's single-channel gate broadcasts over X.
// Throws ShapeError when the spatial sizes differ.
nn::Tensor semantic_gate(const nn::Tensor& x, const nn::Tensor& y);

// Weights of one bottleneck adapter. Names: <prefix>.dn [a, C, 1, 1],
// <prefix>.dn_s [a, C_s, 1, 1], <prefix>.up [C, a, 1, 1] (zero at init).
struct AdapterParams {
  nn::Tensor dn;
  nn::Tensor dn_s;
  nn::Tensor up;

  static AdapterParams from(const nn::ParameterStore& store, const std::string& prefix);
};

void init_adapter(nn::ParameterStore& store, const std::string& prefix, int channels,
                  int semantic_channels, int adapter_dim, std::mt19937_64& rng);

// relu(gate(F W_dn, resize(f_s) W_dn_s)) W_up. f_s is resized bilinearly to
// F's spatial size first. The caller adds the residual F.
nn::Tensor s_adapter_forward(const nn::Tensor& f, const nn::Tensor& f_s, const AdapterParams& p);

}  // namespace pcnet::she

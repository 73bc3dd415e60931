#pragma once

#include <random>
#include <string>

#include "pcnet/nn/parameters.hpp"
#include "pcnet/nn/tensor.hpp"

namespace pcnet::iimc {

// Single-head attention weights. Q = P_Q(q_input), K = P_K(kv_input),
// V = P_V(kv_input), all projected to dk channels without bias.
struct AttentionParams {
  nn::Tensor pq;  // [dk, Cq, 1, 1]
  nn::Tensor pk;  // [dk, Ckv, 1, 1]
  nn::Tensor pv;  // [dk, Ckv, 1, 1]

  int dk() const { return pq.shape().n; }
  static AttentionParams from(const nn::ParameterStore& store, const std::string& prefix);
};

void init_attention(nn::ParameterStore& store, const std::string& prefix, int q_channels,
                    int kv_channels, int dk, std::mt19937_64& rng);

// Smallest k dividing both sides with max(h, w) / k <= max_side; 1 when
// max_side <= 0 or the map is already small enough.
int token_pool_factor(int h, int w, int max_side);

// softmax(Q K^T / sqrt(dk)) as [N, Tq, Tk, 1]; rows sum to one. Inputs are
// used at their given resolution.
nn::Tensor attention_weights(const nn::Tensor& q_input, const nn::Tensor& kv_input,
                             const AttentionParams& p);

// softmax(Q K^T / sqrt(dk)) V + Q reshaped to q_input's spatial size, with dk
// output channels. When max_side > 0 and a map exceeds it, queries and
// keys/values are average-pooled to at most max_side per side, the attention
// term is computed there and bilinearly upsampled; the Q residual stays at
// full resolution. Throws ShapeError on channel mismatch.
nn::Tensor attention_correlate(const nn::Tensor& q_input, const nn::Tensor& kv_input,
                               const AttentionParams& p, int max_side = 0);

// Gray(warped) * valid, bilinearly resized to h x w. `valid` is a constant;
// the map is differentiable w.r.t. `warped`.
nn::Tensor region_map(const nn::Tensor& warped, const nn::Tensor& valid, int h, int w);

// sigmoid(channel_mean(f_s)) resized to h x w: [N, 1, h, w].
nn::Tensor semantic_level_gate(const nn::Tensor& f_s, int h, int w);

// attention_correlate(f_rgb * map * gate, f_t); f_t is the unwarped
// thermal feature of the same level.
nn::Tensor inter_modal_correlate(const nn::Tensor& f_rgb, const nn::Tensor& f_t,
                                 const nn::Tensor& map, const nn::Tensor& gate,
                                 const AttentionParams& p, int max_side = 0);

// Self-attention over f_rgb + f_inter.
nn::Tensor intra_modal_correlate(const nn::Tensor& f_rgb, const nn::Tensor& f_inter,
                                 const AttentionParams& p, int max_side = 0);

}  // namespace pcnet::iimc

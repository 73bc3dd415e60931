#include "pcnet/iimc/correlation.hpp"

#include <cmath>

#include "pcnet/core/errors.hpp"
#include "pcnet/nn/ops.hpp"

namespace pcnet::iimc {

AttentionParams AttentionParams::from(const nn::ParameterStore& store, const std::string& prefix) {
  return {store.get(prefix + ".pq"), store.get(prefix + ".pk"), store.get(prefix + ".pv")};
}

void init_attention(nn::ParameterStore& store, const std::string& prefix, int q_channels,
                    int kv_channels, int dk, std::mt19937_64& rng) {
  // Unit-gain init keeps Q close in scale to its input, so the residual path
  // starts as a rough identity.
  store.add_kaiming(prefix + ".pq", {dk, q_channels, 1, 1}, q_channels, rng, std::sqrt(0.5));
  store.add_kaiming(prefix + ".pk", {dk, kv_channels, 1, 1}, kv_channels, rng, std::sqrt(0.5));
  store.add_kaiming(prefix + ".pv", {dk, kv_channels, 1, 1}, kv_channels, rng, std::sqrt(0.5));
}

int token_pool_factor(int h, int w, int max_side) {
  if (max_side <= 0) return 1;
  for (int k = 1; k <= std::max(h, w); ++k)
    if (h % k == 0 && w % k == 0 && std::max(h, w) / k <= max_side) return k;
  return 1;
}

namespace {

void check_channels(const nn::Tensor& q_input, const nn::Tensor& kv_input,
                    const AttentionParams& p) {
  if (q_input.shape().n != kv_input.shape().n) throw ShapeError("attention: batch mismatch");
  if (p.pq.shape().c != q_input.shape().c || p.pk.shape().c != kv_input.shape().c ||
      p.pv.shape().c != kv_input.shape().c || p.pk.shape().n != p.dk() || p.pv.shape().n != p.dk())
    throw ShapeError("attention: channels " + nn::to_string(q_input.shape()) + " / " +
                     nn::to_string(kv_input.shape()) + " do not fit the projections");
}

nn::Tensor weights_from(const nn::Tensor& q, const nn::Tensor& k, int dk) {
  return nn::softmax_rows(nn::scale(nn::matmul(q, k, true, false), 1.0 / std::sqrt(dk)));
}

}  // namespace

nn::Tensor attention_weights(const nn::Tensor& q_input, const nn::Tensor& kv_input,
                             const AttentionParams& p) {
  check_channels(q_input, kv_input, p);
  return weights_from(nn::pointwise(q_input, p.pq, nn::Tensor()),
                      nn::pointwise(kv_input, p.pk, nn::Tensor()), p.dk());
}

nn::Tensor attention_correlate(const nn::Tensor& q_input, const nn::Tensor& kv_input,
                               const AttentionParams& p, int max_side) {
  check_channels(q_input, kv_input, p);
  const nn::Shape qs = q_input.shape(), ks = kv_input.shape();
  const int fq = token_pool_factor(qs.h, qs.w, max_side);
  const int fk = token_pool_factor(ks.h, ks.w, max_side);
  const nn::Tensor q_full = nn::pointwise(q_input, p.pq, nn::Tensor());
  const nn::Tensor q = fq > 1 ? nn::avg_pool(q_full, fq, fq) : q_full;
  const nn::Tensor kv = fk > 1 ? nn::avg_pool(kv_input, fk, fk) : kv_input;
  const nn::Tensor k = nn::pointwise(kv, p.pk, nn::Tensor());
  const nn::Tensor v = nn::pointwise(kv, p.pv, nn::Tensor());
  const nn::Tensor a = weights_from(q, k, p.dk());              // [N, Tq, Tk, 1]
  const nn::Tensor attended = nn::matmul(v, a, false, true);    // [N, dk, Tq, 1]
  const nn::Shape ps = q.shape();
  nn::Tensor out = nn::reshape(attended, {qs.n, p.dk(), ps.h, ps.w});
  if (fq > 1) out = nn::resize_bilinear(out, qs.h, qs.w);
  return nn::add(out, q_full);
}

nn::Tensor region_map(const nn::Tensor& warped, const nn::Tensor& valid, int h, int w) {
  const nn::Shape s = warped.shape();
  if (valid.shape() != nn::Shape{s.n, 1, s.h, s.w})
    throw ShapeError("region_map: valid mask " + nn::to_string(valid.shape()) + " vs " +
                     nn::to_string(s));
  nn::Tensor gray;
  if (s.c == 1) {
    gray = warped;
  } else if (s.c == 3) {
    gray = nn::pointwise(warped, nn::Tensor::from({1, 3, 1, 1}, {0.299, 0.587, 0.114}),
                         nn::Tensor());
  } else {
    throw ShapeError("region_map expects 1 or 3 channels");
  }
  return nn::resize_bilinear(nn::mul(gray, valid.detach()), h, w);
}

nn::Tensor semantic_level_gate(const nn::Tensor& f_s, int h, int w) {
  return nn::resize_bilinear(nn::sigmoid(nn::channel_mean(f_s)), h, w);
}

nn::Tensor inter_modal_correlate(const nn::Tensor& f_rgb, const nn::Tensor& f_t,
                                 const nn::Tensor& map, const nn::Tensor& gate,
                                 const AttentionParams& p, int max_side) {
  const nn::Shape s = f_rgb.shape();
  for (const nn::Tensor* m : {&map, &gate})
    if (m->shape() != nn::Shape{s.n, 1, s.h, s.w})
      throw ShapeError("inter_modal_correlate: mask " + nn::to_string(m->shape()) +
                       " does not match " + nn::to_string(s));
  return attention_correlate(nn::mul(nn::mul(f_rgb, map), gate), f_t, p, max_side);
}

nn::Tensor intra_modal_correlate(const nn::Tensor& f_rgb, const nn::Tensor& f_inter,
                                 const AttentionParams& p, int max_side) {
  if (f_rgb.shape() != f_inter.shape())
    throw ShapeError("intra_modal_correlate: " + nn::to_string(f_rgb.shape()) + " vs " +
                     nn::to_string(f_inter.shape()));
  const nn::Tensor x = nn::add(f_rgb, f_inter);
  return attention_correlate(x, x, p, max_side);
}

}  // namespace pcnet::iimc

#include "pcnet/she/adapter.hpp"

#include "pcnet/core/errors.hpp"
#include "pcnet/nn/ops.hpp"

namespace pcnet::she {

nn::Tensor semantic_gate(const nn::Tensor& x, const nn::Tensor& y) {
  if (x.shape().h != y.shape().h || x.shape().w != y.shape().w || x.shape().n != y.shape().n)
    throw ShapeError("semantic_gate: " + nn::to_string(x.shape()) + " vs " +
                     nn::to_string(y.shape()));
  return nn::mul(x, nn::sigmoid(nn::channel_mean(y)));
}

AdapterParams AdapterParams::from(const nn::ParameterStore& store, const std::string& prefix) {
  return {store.get(prefix + ".dn"), store.get(prefix + ".dn_s"), store.get(prefix + ".up")};
}

void init_adapter(nn::ParameterStore& store, const std::string& prefix, int channels,
                  int semantic_channels, int adapter_dim, std::mt19937_64& rng) {
  store.add_kaiming(prefix + ".dn", {adapter_dim, channels, 1, 1}, channels, rng);
  store.add_kaiming(prefix + ".dn_s", {adapter_dim, semantic_channels, 1, 1}, semantic_channels,
                    rng);
  store.add(prefix + ".up", {channels, adapter_dim, 1, 1});
}

nn::Tensor s_adapter_forward(const nn::Tensor& f, const nn::Tensor& f_s, const AdapterParams& p) {
  const nn::Shape fs = f.shape();
  if (f_s.shape().n != fs.n) throw ShapeError("s_adapter: batch mismatch");
  if (p.dn.shape().c != fs.c || p.dn_s.shape().c != f_s.shape().c)
    throw ShapeError("s_adapter: channel mismatch");
  const nn::Tensor s = nn::resize_bilinear(f_s, fs.h, fs.w);
  const nn::Tensor down = nn::pointwise(f, p.dn, nn::Tensor());
  const nn::Tensor sem = nn::pointwise(s, p.dn_s, nn::Tensor());
  return nn::pointwise(nn::relu(semantic_gate(down, sem)), p.up, nn::Tensor());
}

}  // namespace pcnet::she

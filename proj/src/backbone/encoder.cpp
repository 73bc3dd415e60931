#include "pcnet/backbone/encoder.hpp"

#include "pcnet/core/errors.hpp"
#include "pcnet/nn/ops.hpp"

namespace pcnet::backbone {

namespace {

std::string stage(const std::string& prefix, int s) { return prefix + ".stage" + std::to_string(s); }

}  // namespace

Encoder::Encoder(const nn::ParameterStore& store, std::string prefix)
    : store_(store), prefix_(std::move(prefix)) {}

void Encoder::init(nn::ParameterStore& store, const std::string& prefix, int in_channels,
                   const std::array<int, 4>& channels, std::mt19937_64& rng) {
  int in = in_channels;
  for (int s = 0; s < 4; ++s) {
    const std::string p = stage(prefix, s);
    const int c = channels[s];
    const int k = s == 0 ? 4 : 2;
    store.add_kaiming(p + ".embed.w", {c, in, k, k}, in * k * k, rng);
    store.add(p + ".embed.b", {1, c, 1, 1});
    store.add_constant(p + ".norm.g", {1, c, 1, 1}, 1.0);
    store.add(p + ".norm.b", {1, c, 1, 1});
    store.add_kaiming(p + ".mix.dw.w", {c, 1, 3, 3}, 9, rng);
    store.add(p + ".mix.dw.b", {1, c, 1, 1});
    store.add_constant(p + ".mix.norm.g", {1, c, 1, 1}, 1.0);
    store.add(p + ".mix.norm.b", {1, c, 1, 1});
    store.add_kaiming(p + ".mix.pw1.w", {2 * c, c, 1, 1}, c, rng);
    store.add(p + ".mix.pw1.b", {1, 2 * c, 1, 1});
    // Small output projection keeps the residual branch gentle at init.
    store.add_kaiming(p + ".mix.pw2.w", {c, 2 * c, 1, 1}, 2 * c, rng, 0.1);
    store.add(p + ".mix.pw2.b", {1, c, 1, 1});
    in = c;
  }
}

FeaturePyramid Encoder::encode(const nn::Tensor& images) const {
  const nn::Shape s = images.shape();
  if (s.h % 32 != 0 || s.w % 32 != 0)
    throw ShapeError("encoder input " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                     " is not divisible by 32");
  auto w = [&](const std::string& name) -> const nn::Tensor& { return store_.get(name); };
  FeaturePyramid out;
  nn::Tensor x = nn::add_scalar(images, -0.5);
  for (int st = 0; st < 4; ++st) {
    const std::string p = stage(prefix_, st);
    const int k = st == 0 ? 4 : 2;
    x = nn::conv2d(x, w(p + ".embed.w"), w(p + ".embed.b"), k, 0);
    x = nn::layer_norm_channels(x, w(p + ".norm.g"), w(p + ".norm.b"));
    nn::Tensor y = nn::depthwise_conv2d(x, w(p + ".mix.dw.w"), w(p + ".mix.dw.b"), 1);
    y = nn::layer_norm_channels(y, w(p + ".mix.norm.g"), w(p + ".mix.norm.b"));
    y = nn::relu(nn::pointwise(y, w(p + ".mix.pw1.w"), w(p + ".mix.pw1.b")));
    y = nn::pointwise(y, w(p + ".mix.pw2.w"), w(p + ".mix.pw2.b"));
    x = nn::add(x, y);
    out.levels[st] = x;
  }
  return out;
}

SemanticFusion::SemanticFusion(const nn::ParameterStore& store, std::string prefix)
    : store_(store), prefix_(std::move(prefix)) {}

void SemanticFusion::init(nn::ParameterStore& store, const std::string& prefix, int channels,
                          int attention_dim, int semantic_channels, std::mt19937_64& rng) {
  iimc::init_attention(store, prefix + ".attn", channels, channels, attention_dim, rng);
  store.add_kaiming(prefix + ".proj.w", {semantic_channels, attention_dim, 1, 1}, attention_dim,
                    rng);
  store.add(prefix + ".proj.b", {1, semantic_channels, 1, 1});
}

nn::Tensor SemanticFusion::attend(const nn::Tensor& f_rgb4, const nn::Tensor& f_t4) const {
  if (f_rgb4.shape() != f_t4.shape())
    throw ShapeError("fuse_semantics: " + nn::to_string(f_rgb4.shape()) + " vs " +
                     nn::to_string(f_t4.shape()));
  return iimc::attention_correlate(f_rgb4, f_t4,
                                   iimc::AttentionParams::from(store_, prefix_ + ".attn"));
}

nn::Tensor SemanticFusion::fuse(const nn::Tensor& f_rgb4, const nn::Tensor& f_t4) const {
  return nn::pointwise(attend(f_rgb4, f_t4), store_.get(prefix_ + ".proj.w"),
                       store_.get(prefix_ + ".proj.b"));
}

}  // namespace pcnet::backbone

#include "pcnet/head/decoder.hpp"

#include <algorithm>
#include <cmath>

#include "pcnet/core/errors.hpp"
#include "pcnet/nn/ops.hpp"

namespace pcnet::head {

namespace {

constexpr double kClampLo = 1e-7;
constexpr double kClampHi = 1.0 - 1e-7;

std::string level(const std::string& prefix, int i) { return prefix + ".l" + std::to_string(i); }

}  // namespace

Decoder::Decoder(const nn::ParameterStore& store, std::string prefix)
    : store_(store), prefix_(std::move(prefix)) {}

void Decoder::init(nn::ParameterStore& store, const std::string& prefix,
                   const std::array<int, 4>& channels, int width, std::mt19937_64& rng) {
  for (int i = 0; i < 4; ++i) {
    const std::string p = level(prefix, i);
    store.add_kaiming(p + ".lat.w", {width, channels[i], 1, 1}, channels[i], rng);
    store.add(p + ".lat.b", {1, width, 1, 1});
    store.add_kaiming(p + ".dw.w", {width, 1, 3, 3}, 9, rng);
    store.add(p + ".dw.b", {1, width, 1, 1});
    store.add_kaiming(p + ".pw.w", {width, width, 1, 1}, width, rng, 0.5);
    store.add(p + ".pw.b", {1, width, 1, 1});
  }
  store.add_kaiming(prefix + ".head.w", {1, width, 1, 1}, width, rng, 0.5);
  store.add(prefix + ".head.b", {1, 1, 1, 1});
}

nn::Tensor Decoder::decode(const std::array<nn::Tensor, 4>& levels) const {
  for (int i = 0; i < 3; ++i) {
    const nn::Shape a = levels[i].shape(), b = levels[i + 1].shape();
    if (a.n != b.n || a.h != 2 * b.h || a.w != 2 * b.w)
      throw ShapeError("decoder: level " + std::to_string(i + 1) + " " + nn::to_string(a) +
                       " does not double level " + std::to_string(i + 2) + " " + nn::to_string(b));
  }
  auto w = [&](const std::string& name) -> const nn::Tensor& { return store_.get(name); };
  auto mix = [&](const nn::Tensor& x, const std::string& p) {
    const nn::Tensor y = nn::relu(nn::depthwise_conv2d(x, w(p + ".dw.w"), w(p + ".dw.b"), 1));
    return nn::add(x, nn::pointwise(y, w(p + ".pw.w"), w(p + ".pw.b")));
  };
  nn::Tensor x;
  for (int i = 3; i >= 0; --i) {
    const std::string p = level(prefix_, i);
    const nn::Tensor lat = nn::pointwise(levels[i], w(p + ".lat.w"), w(p + ".lat.b"));
    if (x.defined()) {
      const nn::Shape s = levels[i].shape();
      x = nn::add(nn::resize_bilinear(x, s.h, s.w), lat);
    } else {
      x = lat;
    }
    x = mix(x, p);
  }
  const nn::Tensor logits = nn::pointwise(x, w(prefix_ + ".head.w"), w(prefix_ + ".head.b"));
  const nn::Shape s = logits.shape();
  return nn::resize_bilinear(logits, 4 * s.h, 4 * s.w);
}

nn::Tensor bce_dice_loss(const nn::Tensor& logits, const nn::Tensor& gt, double bce_w,
                         double dice_w) {
  const nn::Shape s = logits.shape();
  if (gt.shape() != s)
    throw ShapeError("loss: logits " + nn::to_string(s) + " vs gt " + nn::to_string(gt.shape()));
  const auto& x = logits.values();
  const auto& g = gt.values();
  const std::size_t item = s.item();
  const double count = static_cast<double>(s.numel());
  std::vector<double> p(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) p[i] = 1.0 / (1.0 + std::exp(-x[i]));
  double bce = 0, dice = 0;
  std::vector<double> inter(s.n, 0.0), total(s.n, 0.0);
  for (int n = 0; n < s.n; ++n) {
    for (std::size_t k = 0; k < item; ++k) {
      const std::size_t i = n * item + k;
      const double pc = std::clamp(p[i], kClampLo, kClampHi);
      bce -= g[i] * std::log(pc) + (1 - g[i]) * std::log(1 - pc);
      inter[n] += p[i] * g[i];
      total[n] += p[i] + g[i];
    }
    dice += 1.0 - (2 * inter[n] + 1) / (total[n] + 1);
  }
  const double value = bce_w * bce / count + dice_w * dice / s.n;
  auto probs = std::make_shared<std::vector<double>>(std::move(p));
  return nn::make_result(
      {1, 1, 1, 1}, {value}, {logits},
      [s, item, count, bce_w, dice_w, probs, g, inter, total](nn::detail::Node& self) {
        auto& d = self.parents[0]->grad_buffer();
        const double up = self.grad[0];
        for (int n = 0; n < s.n; ++n) {
          const double den = total[n] + 1;
          for (std::size_t k = 0; k < item; ++k) {
            const std::size_t i = n * item + k;
            const double pi = (*probs)[i];
            double gp = 0;
            // d BCE / d x is (p - g) inside the clamp range and 0 where clamped.
            if (pi > kClampLo && pi < kClampHi) gp += bce_w * (pi - g[i]) / count;
            const double ddice_dp = -(2 * g[i] * den - (2 * inter[n] + 1)) / (den * den);
            gp += dice_w * ddice_dp * pi * (1 - pi) / s.n;
            d[i] += up * gp;
          }
        }
      });
}

double bce_dice_value(const std::vector<double>& prob, const std::vector<double>& gt, double bce_w,
                      double dice_w) {
  if (prob.size() != gt.size() || prob.empty()) throw ShapeError("loss: size mismatch");
  double bce = 0, inter = 0, total = 0;
  for (std::size_t i = 0; i < prob.size(); ++i) {
    const double pc = std::clamp(prob[i], kClampLo, kClampHi);
    bce -= gt[i] * std::log(pc) + (1 - gt[i]) * std::log(1 - pc);
    inter += prob[i] * gt[i];
    total += prob[i] + gt[i];
  }
  return bce_w * bce / static_cast<double>(prob.size()) +
         dice_w * (1.0 - (2 * inter + 1) / (total + 1));
}

}  // namespace pcnet::head

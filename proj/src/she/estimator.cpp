#include "pcnet/she/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "pcnet/core/errors.hpp"
#include "pcnet/nn/ops.hpp"
#include "pcnet/she/adapter.hpp"
#include "pcnet/she/geometry.hpp"

namespace pcnet::she {

namespace {

std::string layer_name(int l) { return "estimator.enc" + std::to_string(l); }

}  // namespace

Mat3 resize_map(int work, int h, int w) {
  const double ax = static_cast<double>(work) / w;
  const double ay = static_cast<double>(work) / h;
  Mat3 m = Mat3::Identity();
  m(0, 0) = ax;
  m(0, 2) = 0.5 * ax - 0.5;
  m(1, 1) = ay;
  m(1, 2) = 0.5 * ay - 0.5;
  return m;
}

EstimatorOptions EstimatorOptions::from(const RunConfig& c) {
  EstimatorOptions o;
  o.size = c.estimator_size;
  o.channels = c.estimator_channels;
  o.hidden = c.estimator_hidden;
  o.iterations = c.estimator_iterations;
  o.radius = c.corr_radius;
  o.adapter_dim = c.adapter_dim;
  o.semantic_channels = c.semantic_channels;
  return o;
}

void init_estimator(nn::ParameterStore& store, const EstimatorOptions& o, std::mt19937_64& rng) {
  int in = 1;
  for (int l = 0; l < 3; ++l) {
    const int out = o.channels[l];
    store.add_kaiming(layer_name(l) + ".w", {out, in, 3, 3}, in * 9, rng);
    store.add(layer_name(l) + ".b", {1, out, 1, 1});
    in = out;
  }
  const int window = (2 * o.radius + 1) * (2 * o.radius + 1);
  const int h = o.hidden;
  store.add_kaiming("estimator.reg0.w", {h, 2 * window + 2, 1, 1}, 2 * window + 2, rng);
  store.add("estimator.reg0.b", {1, h, 1, 1});
  for (int k = 1; k <= 3; ++k) {
    store.add_kaiming("estimator.reg" + std::to_string(k) + ".w", {h, h, 3, 3}, h * 9, rng);
    store.add("estimator.reg" + std::to_string(k) + ".b", {1, h, 1, 1});
  }
  // Zero head: the first pass predicts no motion.
  store.add("estimator.head.w", {8, h, 2, 2});
  store.add("estimator.head.b", {1, 8, 1, 1});
  // Learned step size per iteration, starting at 1.
  for (double& g : store.add("estimator.step_gain", {1, o.iterations, 1, 1}).values()) g = 1.0;
}

void init_estimator_adapters(nn::ParameterStore& store, const EstimatorOptions& o,
                             std::mt19937_64& rng) {
  for (int l = 0; l < 3; ++l)
    init_adapter(store, "adapter.enc" + std::to_string(l), o.channels[l], o.semantic_channels,
                 o.adapter_dim, rng);
}

nn::Tensor build_correlation_volume(const nn::Tensor& fa, const nn::Tensor& fb) {
  const nn::Shape a = fa.shape(), b = fb.shape();
  if (a.c != b.c || a.n != b.n)
    throw ShapeError("correlation: " + nn::to_string(a) + " vs " + nn::to_string(b));
  const nn::Tensor m = nn::matmul(fa, fb, true, false);  // [N, Ta, Tb, 1]
  return nn::scale(nn::reshape(m, {a.n, a.h * a.w, b.h, b.w}), 1.0 / std::sqrt(a.c));
}

nn::Tensor corr_lookup(const nn::Tensor& volume, const nn::Tensor& coords, int radius) {
  const nn::Shape vs = volume.shape(), cs = coords.shape();
  if (cs.c != 2 || cs.n != vs.n || static_cast<std::size_t>(vs.c) != cs.plane())
    throw ShapeError("corr_lookup: volume " + nn::to_string(vs) + " coords " + nn::to_string(cs));
  const int k = 2 * radius + 1;
  const nn::Shape os{vs.n, k * k, cs.h, cs.w};
  const int hr = vs.h, wr = vs.w;
  const int tq = vs.c;
  // Four taps per output value: flat source index and weight (index -1 = none).
  struct Tap {
    std::array<long, 4> idx;
    std::array<double, 4> w;
  };
  auto taps = std::make_shared<std::vector<Tap>>(os.numel());
  std::vector<double> out(os.numel(), 0.0);
  const auto& vv = volume.values();
  const auto& cv = coords.values();
  for (int n = 0; n < vs.n; ++n)
    for (int q = 0; q < tq; ++q) {
      const double cx = cv[(static_cast<std::size_t>(n) * 2) * tq + q];
      const double cy = cv[(static_cast<std::size_t>(n) * 2 + 1) * tq + q];
      const std::size_t base = (static_cast<std::size_t>(n) * tq + q) * hr * wr;
      for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx) {
          const int ch = (dy + radius) * k + (dx + radius);
          const std::size_t o = (static_cast<std::size_t>(n) * k * k + ch) * tq + q;
          Tap& t = (*taps)[o];
          t.idx.fill(-1);
          t.w.fill(0.0);
          const double x = cx + dx, y = cy + dy;
          if (!std::isfinite(x) || !std::isfinite(y)) continue;
          const double fx = std::floor(x), fy = std::floor(y);
          const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
          const double ax = x - fx, ay = y - fy;
          const int xs[2] = {x0, x0 + 1}, ys[2] = {y0, y0 + 1};
          const double wxs[2] = {1 - ax, ax}, wys[2] = {1 - ay, ay};
          double s = 0;
          for (int j = 0; j < 2; ++j)
            for (int i = 0; i < 2; ++i) {
              if (xs[i] < 0 || xs[i] >= wr || ys[j] < 0 || ys[j] >= hr) continue;
              const long src = static_cast<long>(base + static_cast<std::size_t>(ys[j]) * wr + xs[i]);
              t.idx[j * 2 + i] = src;
              t.w[j * 2 + i] = wxs[i] * wys[j];
              s += wxs[i] * wys[j] * vv[src];
            }
          out[o] = s;
        }
    }
  return nn::make_result(os, std::move(out), {volume}, [taps](nn::detail::Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t o = 0; o < taps->size(); ++o) {
      const double go = self.grad[o];
      if (go == 0.0) continue;
      const Tap& t = (*taps)[o];
      for (int i = 0; i < 4; ++i)
        if (t.idx[i] >= 0) g[t.idx[i]] += t.w[i] * go;
    }
  });
}

nn::Tensor working_input(const nn::Tensor& images, int size) {
  nn::NoGradGuard no_grad;
  const nn::Shape s = images.shape();
  if (s.c != 1 && s.c != 3) throw ShapeError("working_input expects 1 or 3 channels");
  std::vector<double> gray(static_cast<std::size_t>(s.n) * s.plane());
  const auto& v = images.values();
  for (int n = 0; n < s.n; ++n)
    for (std::size_t p = 0; p < s.plane(); ++p) {
      const std::size_t b = static_cast<std::size_t>(n) * s.item() + p;
      gray[n * s.plane() + p] =
          s.c == 1 ? v[b] : 0.299 * v[b] + 0.587 * v[b + s.plane()] + 0.114 * v[b + 2 * s.plane()];
    }
  nn::Tensor g = nn::resize_bilinear(nn::Tensor::from({s.n, 1, s.h, s.w}, std::move(gray)), size,
                                     size);
  std::vector<double> out = g.values();
  const std::size_t plane = static_cast<std::size_t>(size) * size;
  for (int n = 0; n < s.n; ++n) {
    double mean = 0, var = 0;
    for (std::size_t p = 0; p < plane; ++p) mean += out[n * plane + p];
    mean /= plane;
    for (std::size_t p = 0; p < plane; ++p) var += (out[n * plane + p] - mean) * (out[n * plane + p] - mean);
    const double inv = 1.0 / (std::sqrt(var / plane) + 1e-3);
    for (std::size_t p = 0; p < plane; ++p) out[n * plane + p] = (out[n * plane + p] - mean) * inv;
  }
  return nn::Tensor::from({s.n, 1, size, size}, std::move(out));
}

HomographyEstimator::HomographyEstimator(const nn::ParameterStore& store, EstimatorOptions opts)
    : store_(store), opts_(opts) {
  if (opts_.size % 32 != 0 || opts_.size < 64)
    throw ConfigError("estimator size must be a multiple of 32 and at least 64");
}

nn::Tensor HomographyEstimator::encode(const nn::Tensor& x, const nn::Tensor& f_s) const {
  nn::Tensor f = x;
  for (int l = 0; l < 3; ++l) {
    f = nn::conv2d(f, store_.get(layer_name(l) + ".w"), store_.get(layer_name(l) + ".b"), 2, 1);
    if (l < 2) f = nn::relu(f);
    if (f_s.defined())
      f = nn::add(f, s_adapter_forward(f, f_s, AdapterParams::from(store_, "adapter.enc" + std::to_string(l))));
  }
  return f;
}

nn::Tensor HomographyEstimator::regress(const nn::Tensor& x) const {
  auto w = [&](const std::string& n) { return store_.get("estimator." + n); };
  nn::Tensor h = nn::relu(nn::pointwise(x, w("reg0.w"), w("reg0.b")));
  h = nn::relu(nn::conv2d(h, w("reg1.w"), w("reg1.b"), 2, 1));
  h = nn::relu(nn::conv2d(h, w("reg2.w"), w("reg2.b"), 1, 1));
  h = nn::relu(nn::conv2d(h, w("reg3.w"), w("reg3.b"), 2, 1));
  const nn::Shape s = h.shape();
  h = nn::avg_pool(h, s.h / 2, s.w / 2);
  return nn::conv2d(h, w("head.w"), w("head.b"), 1, 0);  // [N, 8, 1, 1]
}

EstimatorRun HomographyEstimator::run(const nn::Tensor& rgb, const nn::Tensor& thermal,
                                      const nn::Tensor& f_s) const {
  const int size = opts_.size;
  const nn::Shape rs = rgb.shape();
  if (rs.c != 1 || rs.h != size || rs.w != size || !(thermal.shape() == rs))
    throw ShapeError("estimator inputs must be [N,1," + std::to_string(size) + "," +
                     std::to_string(size) + "] working tensors");
  const int n = rs.n;
  const int fsz = opts_.feature_size();
  const double stride = opts_.stride();

  const nn::Tensor f_rgb = encode(rgb, f_s);
  const nn::Tensor f_t = encode(thermal, f_s);
  // Queries are thermal positions, the searched map is RGB.
  const nn::Tensor vol1 = build_correlation_volume(f_t, f_rgb);
  const nn::Tensor vol2 = nn::avg_pool(vol1, 2, 2);

  EstimatorRun result;
  result.flagged.assign(n, false);
  nn::Tensor d = nn::Tensor::zeros({n, 8, 1, 1});
  std::vector<Homography> current(n, Homography::identity());
  const std::size_t tq = static_cast<std::size_t>(fsz) * fsz;

  for (int it = 0; it < opts_.iterations; ++it) {
    std::vector<double> c1(n * 2 * tq), c2(n * 2 * tq), flow(n * 2 * tq);
    for (int s = 0; s < n; ++s) {
      const Mat3& m = current[s].matrix();
      for (int i = 0; i < fsz; ++i)
        for (int j = 0; j < fsz; ++j) {
          // Feature cell (j, i) is centred on image pixel (8j, 8i).
          const double x = stride * j, y = stride * i;
          const double w = m(2, 0) * x + m(2, 1) * y + m(2, 2);
          double u = (m(0, 0) * x + m(0, 1) * y + m(0, 2)) / w / stride;
          double v = (m(1, 0) * x + m(1, 1) * y + m(1, 2)) / w / stride;
          if (!std::isfinite(u) || !std::isfinite(v) || std::abs(w) < 1e-12) u = v = -1e6;
          const std::size_t q = static_cast<std::size_t>(i) * fsz + j;
          c1[(s * 2) * tq + q] = u;
          c1[(s * 2 + 1) * tq + q] = v;
          c2[(s * 2) * tq + q] = (u - 0.5) / 2;
          c2[(s * 2 + 1) * tq + q] = (v - 0.5) / 2;
          flow[(s * 2) * tq + q] = std::clamp(u - j, -64.0, 64.0);
          flow[(s * 2 + 1) * tq + q] = std::clamp(v - i, -64.0, 64.0);
        }
    }
    const nn::Shape gs{n, 2, fsz, fsz};
    const nn::Tensor feats = nn::concat_channels(
        {corr_lookup(vol1, nn::Tensor::from(gs, std::move(c1)), opts_.radius),
         corr_lookup(vol2, nn::Tensor::from(gs, std::move(c2)), opts_.radius),
         nn::Tensor::from(gs, std::move(flow))});
    const nn::Tensor delta =
        nn::mul(regress(feats), nn::slice_channels(store_.get("estimator.step_gain"), it, 1));

    // Reject updates that would degenerate the corner quadrilateral.
    std::vector<double> keep(static_cast<std::size_t>(n) * 8, 1.0);
    std::vector<Homography> next = current;
    for (int s = 0; s < n; ++s) {

      CornerDisplacement cd;
      for (int j = 0; j < 4; ++j)
        cd.d[j] = {d.values()[s * 8 + 2 * j] + delta.values()[s * 8 + 2 * j],
                   d.values()[s * 8 + 2 * j + 1] + delta.values()[s * 8 + 2 * j + 1]};
      bool ok = true;
      for (const auto& p : cd.d) ok = ok && std::isfinite(p.x) && std::isfinite(p.y);
      if (ok) {
        try {
          next[s] = displacement_to_homography(cd, size, size);
        } catch (const DegenerateHomography&) {
          ok = false;
        }
      }
      if (!ok) {
        result.flagged[s] = true;
        std::fill(keep.begin() + s * 8, keep.begin() + s * 8 + 8, 0.0);
      }
    }
    const nn::Tensor mask = nn::Tensor::from({n, 8, 1, 1}, std::move(keep));
    d = nn::add(d.detach(), nn::mul(delta, mask));
    current = std::move(next);
    result.displacements.push_back(d);
  }
  return result;
}

nn::Tensor lift_homography(const nn::Tensor& displacement, int work, int rgb_h, int rgb_w,
                           int t_h, int t_w, bool inverse) {
  const nn::Tensor h = dlt_from_displacement(displacement, work, work, inverse);
  const Mat3 a_rgb = resize_map(work, rgb_h, rgb_w);
  const Mat3 a_t = resize_map(work, t_h, t_w);
  if (inverse) return conjugate_homography(h, a_t.inverse(), a_rgb);
  return conjugate_homography(h, a_rgb.inverse(), a_t);
}

Homography estimate_homography(const HomographyEstimator& estimator, const Image& rgb,
                               const Image& thermal, const nn::Tensor& f_s) {
  nn::NoGradGuard no_grad;
  const int size = estimator.options().size;
  const EstimatorRun run = estimator.run(working_input(image_to_tensor(rgb), size),
                                         working_input(image_to_tensor(thermal), size), f_s);
  const nn::Tensor h = lift_homography(run.final(), size, rgb.height(), rgb.width(),
                                       thermal.height(), thermal.width(), false);
  return tensor_to_homographies(h).front();
}

}  // namespace pcnet::she

#include "pcnet/data/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "pcnet/core/errors.hpp"
#include "pcnet/she/geometry.hpp"

namespace pcnet::data {

namespace {

// Always consumes exactly one draw so zero-width ranges keep the stream in
// step with non-zero ones.
double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * std::generate_canonical<double, 53>(rng);
}

}  // namespace

Homography sample_misalignment(const MisalignParams& params, int width, int height,
                               std::mt19937_64& rng) {
  const auto corners = image_corners(width, height);
  const double cx = (width - 1) / 2.0;
  const double cy = (height - 1) / 2.0;
  constexpr int kAttempts = 8;
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    const double theta =
        uniform(rng, -params.rotation_deg, params.rotation_deg) * std::numbers::pi / 180.0;
    const double tx = uniform(rng, -params.translation, params.translation) * width;
    const double ty = uniform(rng, -params.translation, params.translation) * height;
    const double s = uniform(rng, 1.0 - params.scale, 1.0 + params.scale);
    std::array<Point2, 4> moved;
    for (int j = 0; j < 4; ++j) {
      const double dx = corners[j].x - cx;
      const double dy = corners[j].y - cy;
      const double jx = uniform(rng, -params.perspective, params.perspective) * width;
      const double jy = uniform(rng, -params.perspective, params.perspective) * height;
      moved[j] = {cx + tx + s * (std::cos(theta) * dx - std::sin(theta) * dy) + jx,
                  cy + ty + s * (std::sin(theta) * dx + std::cos(theta) * dy) + jy};
    }
    if (params.is_identity()) return Homography::identity();
    try {
      return she::solve_dlt(corners, moved);
    } catch (const DegenerateHomography&) {
    }
  }
  throw DegenerateHomography("no valid misalignment after 8 draws");
}

Sample apply_misalignment(const Sample& sample, const Homography& h) {
  Sample out = sample;
  out.thermal = she::warp_image(sample.thermal, h).warped;
  out.true_homography = h;
  return out;
}

Sample synthesize_misalignment(const Sample& sample, const MisalignParams& params,
                               std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Homography h =
      sample_misalignment(params, sample.thermal.width(), sample.thermal.height(), rng);
  return apply_misalignment(sample, h);
}

namespace {

struct Shape {
  enum Kind { kEllipse, kRectangle, kTriangle } kind;
  double cx, cy, a, b, phi;
  std::array<Point2, 3> tri;
  std::array<double, 3> color;
  double shade;  // linear brightness gradient across the shape

  bool contains(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    const double u = dx * std::cos(phi) + dy * std::sin(phi);
    const double v = -dx * std::sin(phi) + dy * std::cos(phi);
    switch (kind) {
      case kEllipse: return (u * u) / (a * a) + (v * v) / (b * b) <= 1.0;
      case kRectangle: return std::abs(u) <= a && std::abs(v) <= b;
      case kTriangle: {
        auto edge = [&](const Point2& p, const Point2& q) {
          return (q.x - p.x) * (y - p.y) - (q.y - p.y) * (x - p.x);
        };
        const double e0 = edge(tri[0], tri[1]);
        const double e1 = edge(tri[1], tri[2]);
        const double e2 = edge(tri[2], tri[0]);
        return (e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0);
      }
    }
    return false;
  }
};

Shape random_shape(std::mt19937_64& rng, double size, double r_lo, double r_hi,
                   const std::array<double, 3>& background) {
  Shape s{};
  s.kind = static_cast<Shape::Kind>(std::min(2, static_cast<int>(uniform(rng, 0, 3))));
  const double r = uniform(rng, r_lo, r_hi) * size;
  s.cx = uniform(rng, r, size - 1 - r);
  s.cy = uniform(rng, r, size - 1 - r);
  s.phi = uniform(rng, 0, std::numbers::pi);
  switch (s.kind) {
    case Shape::kEllipse:
      s.a = r;
      s.b = r * uniform(rng, 0.6, 1.0);
      break;
    case Shape::kRectangle:
      s.a = 0.85 * r;
      s.b = s.a * uniform(rng, 0.6, 1.0);
      break;
    case Shape::kTriangle:
      for (int k = 0; k < 3; ++k) {
        const double ang = s.phi + 2.0 * std::numbers::pi * k / 3.0;
        const double rr = r * uniform(rng, 0.85, 1.0);
        s.tri[k] = {s.cx + rr * std::cos(ang), s.cy + rr * std::sin(ang)};
      }
      break;
  }
  // Keep shapes distinguishable from the background base color.
  for (int tries = 0; tries < 16; ++tries) {
    double dist = 0;
    for (int c = 0; c < 3; ++c) {
      s.color[c] = uniform(rng, 0.0, 1.0);
      dist += std::abs(s.color[c] - background[c]);
    }
    if (dist >= 0.45) break;
  }
  s.shade = uniform(rng, -0.1, 0.1);
  return s;
}

// Per-pixel N(0, sigma^2) noise with a Gaussian spatial correlation (2 px).
// White noise is blurred separably, then rescaled by the kernel norm so the
// marginal standard deviation stays sigma.
std::vector<double> smooth_noise(int n, double sigma, std::mt19937_64& rng) {
  constexpr int kRadius = 6;
  constexpr double kWidth = 2.0;
  std::array<double, 2 * kRadius + 1> k;
  double norm2 = 0;
  for (int i = -kRadius; i <= kRadius; ++i) k[i + kRadius] = std::exp(-0.5 * i * i / (kWidth * kWidth));
  for (double a : k)
    for (double b : k) norm2 += a * a * b * b;
  const int m = n + 2 * kRadius;
  std::normal_distribution<double> white(0.0, 1.0);
  std::vector<double> raw(static_cast<std::size_t>(m) * m), rows(static_cast<std::size_t>(m) * n);
  for (double& v : raw) v = white(rng);
  for (int y = 0; y < m; ++y)
    for (int x = 0; x < n; ++x) {
      double s = 0;
      for (int i = 0; i <= 2 * kRadius; ++i) s += k[i] * raw[y * m + x + i];
      rows[y * n + x] = s;
    }
  std::vector<double> out(static_cast<std::size_t>(n) * n);
  const double gain = sigma / std::sqrt(norm2);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      double s = 0;
      for (int i = 0; i <= 2 * kRadius; ++i) s += k[i] * rows[(y + i) * n + x];
      out[y * n + x] = gain * s;
    }
  return out;
}

}  // namespace

Sample generate_toy_scene(const ToySceneSpec& spec, std::uint64_t seed) {
  if (spec.image_size < 16) throw ConfigError("toy scene image_size must be >= 16");
  if (spec.n_objects < 1) throw ConfigError("toy scene needs at least one object");
  if (spec.n_distractors < 0) throw ConfigError("n_distractors must be >= 0");
  const int n = spec.image_size;
  std::mt19937_64 rng(seed);

  std::array<double, 3> base;
  for (double& b : base) b = uniform(rng, 0.2, 0.8);
  Image rgb(3, n, n);
  for (int c = 0; c < 3; ++c) {
    double fx[2], fy[2], ph[2];
    for (int k = 0; k < 2; ++k) {
      fx[k] = uniform(rng, 1.0, 6.0) * 2.0 * std::numbers::pi / n;
      fy[k] = uniform(rng, 1.0, 6.0) * 2.0 * std::numbers::pi / n;
      ph[k] = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    }
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x)
        rgb.at(c, y, x) = base[c] + 0.06 * std::sin(fx[0] * x + fy[0] * y + ph[0]) +
                          0.04 * std::sin(fx[1] * x - fy[1] * y + ph[1]);
  }

  // Radii shrink with the object count so crowded scenes stay bounded.
  const int total = spec.n_objects + spec.n_distractors;
  const double crowd = std::sqrt(3.0 / std::max(3, total));
  const double r_lo = 0.14 * crowd;
  const double r_hi = 0.22 * crowd;

  std::vector<Shape> distractors, objects;
  for (int k = 0; k < spec.n_distractors; ++k)
    distractors.push_back(random_shape(rng, n, r_lo, r_hi, base));
  for (int k = 0; k < spec.n_objects; ++k)
    objects.push_back(random_shape(rng, n, r_lo, r_hi, base));

  Image gt(1, n, n);
  auto paint = [&](const Shape& s, bool salient) {
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        if (!s.contains(x, y)) continue;
        const double g = s.shade * ((x - s.cx) + (y - s.cy)) / n;
        for (int c = 0; c < 3; ++c) rgb.at(c, y, x) = s.color[c] + g;
        gt.at(0, y, x) = salient ? 1.0 : 0.0;
      }
  };
  for (const auto& s : distractors) paint(s, false);
  for (const auto& s : objects) paint(s, true);

  std::normal_distribution<double> noise(0.0, 0.03);
  for (double& v : rgb.data()) v = std::clamp(v + noise(rng), 0.0, 1.0);

  // The thermal view is rendered on a canvas padded by n/2 on every side
  // (background plus noise, since shapes lie inside the frame), so the
  // misaligned crop has no empty border that would give the motion away.
  const int pad = n / 2, m = n + 2 * pad;
  Image canvas(1, m, m);
  const std::vector<double> tnoise = smooth_noise(m, 0.05, rng);
  for (int y = 0; y < m; ++y)
    for (int x = 0; x < m; ++x) {
      const int fy = y - pad, fx = x - pad;
      const bool inside = fy >= 0 && fy < n && fx >= 0 && fx < n;
      const double g = inside ? gt.at(0, fy, fx) : 0.0;
      canvas.at(0, y, x) = std::clamp(0.2 + 0.7 * g + tnoise[static_cast<std::size_t>(y) * m + x], 0.0, 1.0);
    }
  Image thermal(1, n, n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) thermal.at(0, y, x) = canvas.at(0, y + pad, x + pad);

  Sample s;
  s.id = "toy_" + std::to_string(seed);
  s.rgb = std::move(rgb);
  s.thermal = std::move(thermal);
  double fg = 0;
  for (double v : gt.data()) fg += v;
  fg /= static_cast<double>(gt.size());
  s.gt_mask = std::move(gt);
  if (spec.n_objects > 1) s.attributes.insert("MSO");
  if (fg < 0.05) s.attributes.insert("SSO");
  if (fg > 0.25) s.attributes.insert("BSO");
  std::mt19937_64 mrng(seed ^ 0x9E3779B97F4A7C15ULL);
  const Homography h = sample_misalignment(spec.misalign, n, n, mrng);
  s.true_homography = h;
  if (h == Homography::identity()) return s;
  const Mat3 shifted = Homography::translation(pad, pad).matrix() * h.matrix();
  s.thermal = she::warp_image(canvas, normalize_homography(shifted), n, n).warped;
  return s;
}

}  // namespace pcnet::data

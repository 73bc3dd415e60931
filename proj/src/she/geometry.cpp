#include "pcnet/she/geometry.hpp"

#include <cmath>
#include <memory>

#include <Eigen/Dense>

#include "pcnet/core/errors.hpp"
#include "pcnet/nn/ops.hpp"

namespace pcnet::she {

namespace {

using Mat8 = Eigen::Matrix<double, 8, 8>;
using Vec8 = Eigen::Matrix<double, 8, 1>;

// Similarity moving the centroid to the origin with mean distance sqrt(2).
Mat3 hartley(const std::array<Point2, 4>& pts) {
  double cx = 0, cy = 0;
  for (const auto& p : pts) {
    cx += p.x;
    cy += p.y;
  }
  cx /= 4;
  cy /= 4;
  double mean = 0;
  for (const auto& p : pts) mean += std::hypot(p.x - cx, p.y - cy);
  mean /= 4;
  if (!(mean > 0)) throw DegenerateHomography("all four corners coincide");
  const double s = std::sqrt(2.0) / mean;
  Mat3 t;
  t << s, 0, -s * cx, 0, s, -s * cy, 0, 0, 1;
  return t;
}

void check_quad(const std::array<Point2, 4>& q) {
  double scale = 0;
  for (const auto& p : q) scale = std::max({scale, std::abs(p.x), std::abs(p.y), 1.0});
  for (int a = 0; a < 4; ++a)
    for (int b = a + 1; b < 4; ++b)
      for (int c = b + 1; c < 4; ++c) {
        const double cross = (q[b].x - q[a].x) * (q[c].y - q[a].y) -
                             (q[b].y - q[a].y) * (q[c].x - q[a].x);
        if (!std::isfinite(cross) || std::abs(cross) < 1e-9 * scale * scale)
          throw DegenerateHomography("three corners are collinear");
      }
}

void fill_system(const std::array<Point2, 4>& src, const std::array<Point2, 4>& dst,
                 Mat8& a, Vec8& b) {
  for (int j = 0; j < 4; ++j) {
    const double x = src[j].x, y = src[j].y, u = dst[j].x, v = dst[j].y;
    a.row(2 * j) << x, y, 1, 0, 0, 0, -u * x, -u * y;
    a.row(2 * j + 1) << 0, 0, 0, x, y, 1, -v * x, -v * y;
    b(2 * j) = u;
    b(2 * j + 1) = v;
  }
}

Point2 apply_mat(const Mat3& m, Point2 p) {
  const double w = m(2, 0) * p.x + m(2, 1) * p.y + m(2, 2);
  return {(m(0, 0) * p.x + m(0, 1) * p.y + m(0, 2)) / w,
          (m(1, 0) * p.x + m(1, 1) * p.y + m(1, 2)) / w};
}

}  // namespace

Homography solve_dlt(const std::array<Point2, 4>& src, const std::array<Point2, 4>& dst) {
  if (src == dst) {
    check_quad(src);
    return Homography::identity();
  }
  check_quad(src);
  check_quad(dst);
  const Mat3 ts = hartley(src);
  const Mat3 td = hartley(dst);
  std::array<Point2, 4> ns, nd;
  for (int j = 0; j < 4; ++j) {
    ns[j] = apply_mat(ts, src[j]);
    nd[j] = apply_mat(td, dst[j]);
  }
  Mat8 a;
  Vec8 b;
  fill_system(ns, nd, a, b);
  Eigen::JacobiSVD<Mat8> svd(a);
  const auto& sv = svd.singularValues();
  if (!(sv(7) > 0) || sv(0) / sv(7) > 1e12)
    throw DegenerateHomography("DLT system is ill-conditioned");
  const Vec8 h = a.fullPivLu().solve(b);
  Mat3 hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), 1.0;
  return normalize_homography(td.inverse() * hn * ts);
}

Homography displacement_to_homography(const CornerDisplacement& d, int width, int height) {
  const auto corners = image_corners(width, height);
  std::array<Point2, 4> moved;
  for (int j = 0; j < 4; ++j) moved[j] = {corners[j].x + d.d[j].x, corners[j].y + d.d[j].y};
  return solve_dlt(corners, moved);
}

CornerDisplacement homography_to_displacement(const Homography& h, int width, int height) {
  const auto corners = image_corners(width, height);
  CornerDisplacement d;
  for (int j = 0; j < 4; ++j) {
    const Point2 p = h.apply(corners[j]);
    d.d[j] = {p.x - corners[j].x, p.y - corners[j].y};
  }
  return d;
}

WarpResult warp_image(const Image& img, const Homography& h, int out_height, int out_width) {
  if (out_height <= 0) out_height = img.height();
  if (out_width <= 0) out_width = img.width();
  nn::NoGradGuard no_grad;
  const auto res = warp_tensor(image_to_tensor(img), homography_to_tensor({h}), out_height,
                               out_width);
  return {tensor_to_image(res.warped), tensor_to_image(res.valid)};
}

nn::Tensor dlt_from_displacement(const nn::Tensor& displacement, int width, int height,
                                 bool inverse) {
  const nn::Shape ds = displacement.shape();
  if (ds.item() != 8) throw ShapeError("displacement must hold 8 values per sample");
  const auto corners = image_corners(width, height);
  const int n = ds.n;
  std::vector<double> out(static_cast<std::size_t>(n) * 9);
  // Per sample: raw system matrix and solution, reused by the backward pass.
  auto systems = std::make_shared<std::vector<Mat8>>(n);
  auto solutions = std::make_shared<std::vector<Vec8>>(n);
  auto sources = std::make_shared<std::vector<std::array<Point2, 4>>>(n);
  auto targets = std::make_shared<std::vector<std::array<Point2, 4>>>(n);
  const auto& dv = displacement.values();
  for (int s = 0; s < n; ++s) {
    std::array<Point2, 4> moved;
    for (int j = 0; j < 4; ++j)
      moved[j] = {corners[j].x + dv[s * 8 + 2 * j], corners[j].y + dv[s * 8 + 2 * j + 1]};
    const auto& src = inverse ? moved : corners;
    const auto& dst = inverse ? corners : moved;
    const Homography hm = solve_dlt(src, dst);
    for (int k = 0; k < 9; ++k) out[s * 9 + k] = hm.matrix()(k / 3, k % 3);
    Vec8 b;
    fill_system(src, dst, (*systems)[s], b);
    for (int k = 0; k < 8; ++k) (*solutions)[s](k) = out[s * 9 + k];
    (*sources)[s] = src;
    (*targets)[s] = dst;
  }
  return nn::make_result(
      nn::Shape{n, 9, 1, 1}, std::move(out), {displacement},
      [n, inverse, systems, solutions, sources, targets](nn::detail::Node& self) {
        auto& dd = self.parents[0]->grad_buffer();
        for (int s = 0; s < n; ++s) {
          Vec8 gh;
          for (int k = 0; k < 8; ++k) gh(k) = self.grad[s * 9 + k];
          const Vec8 lambda = (*systems)[s].transpose().fullPivLu().solve(gh);
          const Vec8& h = (*solutions)[s];
          for (int j = 0; j < 4; ++j) {
            const double x = (*sources)[s][j].x, y = (*sources)[s][j].y;
            const double u = (*targets)[s][j].x, v = (*targets)[s][j].y;
            const double l0 = lambda(2 * j), l1 = lambda(2 * j + 1);
            double gx, gy;
            if (!inverse) {
              // Residuals depend on the target point (u, v).
              const double w = x * h(6) + y * h(7) + 1.0;
              gx = l0 * w;
              gy = l1 * w;
            } else {
              // Residuals depend on the source point (x, y).
              gx = -(l0 * (h(0) - u * h(6)) + l1 * (h(3) - v * h(6)));
              gy = -(l0 * (h(1) - u * h(7)) + l1 * (h(4) - v * h(7)));
            }
            dd[s * 8 + 2 * j] += gx;
            dd[s * 8 + 2 * j + 1] += gy;
          }
        }
      });
}

nn::Tensor conjugate_homography(const nn::Tensor& h, const Mat3& left, const Mat3& right) {
  const nn::Shape hs = h.shape();
  if (hs.item() != 9) throw ShapeError("homography tensor must hold 9 values per sample");
  std::vector<double> out(h.numel());
  for (int s = 0; s < hs.n; ++s) {
    Eigen::Map<const Eigen::Matrix<double, 3, 3, Eigen::RowMajor>> m(h.values().data() + s * 9);
    Eigen::Map<Eigen::Matrix<double, 3, 3, Eigen::RowMajor>> o(out.data() + s * 9);
    o = left * m * right;
  }
  return nn::make_result(hs, std::move(out), {h}, [hs, left, right](nn::detail::Node& self) {
    auto& d = self.parents[0]->grad_buffer();
    for (int s = 0; s < hs.n; ++s) {
      Eigen::Map<const Eigen::Matrix<double, 3, 3, Eigen::RowMajor>> g(self.grad.data() + s * 9);
      Eigen::Map<Eigen::Matrix<double, 3, 3, Eigen::RowMajor>> dm(d.data() + s * 9);
      dm += left.transpose() * g * right.transpose();
    }
  });
}

WarpTensors warp_tensor(const nn::Tensor& img, const nn::Tensor& h, int out_h, int out_w) {
  const nn::Tensor grid = nn::homography_grid(h, out_h, out_w);
  const nn::Shape is = img.shape();
  return {nn::grid_sample(img, grid), nn::grid_valid_mask(grid, is.h, is.w)};
}

nn::Tensor homography_to_tensor(const std::vector<Homography>& hs) {
  std::vector<double> v;
  v.reserve(hs.size() * 9);
  for (const auto& h : hs)
    for (double x : h.values()) v.push_back(x);
  return nn::Tensor::from(nn::Shape{static_cast<int>(hs.size()), 9, 1, 1}, std::move(v));
}

std::vector<Homography> tensor_to_homographies(const nn::Tensor& h) {
  std::vector<Homography> out;
  for (int s = 0; s < h.shape().n; ++s) {
    Mat3 m;
    for (int k = 0; k < 9; ++k) m(k / 3, k % 3) = h.values()[s * 9 + k];
    out.push_back(normalize_homography(m));
  }
  return out;
}

nn::Tensor image_to_tensor(const Image& img) {
  return nn::Tensor::from(nn::Shape{1, img.channels(), img.height(), img.width()}, img.data());
}

nn::Tensor images_to_tensor(const std::vector<Image>& imgs) {
  if (imgs.empty()) throw ShapeError("empty image batch");
  const Image& first = imgs.front();
  std::vector<double> v;
  v.reserve(imgs.size() * first.size());
  for (const auto& im : imgs) {
    if (im.channels() != first.channels() || !im.same_size(first))
      throw ShapeError("images in a batch must share a shape");
    v.insert(v.end(), im.data().begin(), im.data().end());
  }
  return nn::Tensor::from(
      nn::Shape{static_cast<int>(imgs.size()), first.channels(), first.height(), first.width()},
      std::move(v));
}

Image tensor_to_image(const nn::Tensor& t, int index) {
  const nn::Shape s = t.shape();
  const auto begin = t.values().begin() + static_cast<std::ptrdiff_t>(index * s.item());
  return Image(s.c, s.h, s.w, std::vector<double>(begin, begin + s.item()));
}

}  // namespace pcnet::she

#include "pcnet/core/homography.hpp"

#include <cmath>
#include <string>

#include "pcnet/core/errors.hpp"

namespace pcnet {

namespace {
constexpr double kEps = 1e-12;
}

Homography Homography::translation(double dx, double dy) {
  Mat3 m = Mat3::Identity();
  m(0, 2) = dx;
  m(1, 2) = dy;
  return Homography(m);
}

Homography Homography::scaling(double sx, double sy) {
  Mat3 m = Mat3::Identity();
  m(0, 0) = sx;
  m(1, 1) = sy;
  return normalize_homography(m);
}

Point2 Homography::apply(Point2 p) const { return apply_homography(*this, p); }

Homography Homography::inverse() const {
  return normalize_homography(m_.inverse());
}

std::array<double, 9> Homography::values() const {
  std::array<double, 9> v{};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) v[r * 3 + c] = m_(r, c);
  return v;
}

Homography normalize_homography(const Mat3& m) {
  if (!m.allFinite()) throw DegenerateHomography("homography has non-finite entries");
  if (std::abs(m(2, 2)) < kEps)
    throw DegenerateHomography("homography has m[2][2] ~ 0");
  Mat3 n = m / m(2, 2);
  n(2, 2) = 1.0;
  if (std::abs(n.determinant()) <= kEps)
    throw DegenerateHomography("homography is singular");
  return Homography(n);
}

Point2 apply_homography(const Homography& h, Point2 p) {
  const Mat3& m = h.matrix();
  const double w = m(2, 0) * p.x + m(2, 1) * p.y + m(2, 2);
  if (std::abs(w) <= kEps)
    throw PointAtInfinity("point maps to infinity");
  return {(m(0, 0) * p.x + m(0, 1) * p.y + m(0, 2)) / w,
          (m(1, 0) * p.x + m(1, 1) * p.y + m(1, 2)) / w};
}

Homography compose(const Homography& h1, const Homography& h2) {
  return normalize_homography(h1.matrix() * h2.matrix());
}

bool CornerDisplacement::is_zero() const {
  for (const auto& p : d)
    if (p.x != 0.0 || p.y != 0.0) return false;
  return true;
}

std::array<Point2, 4> image_corners(int width, int height) {
  const double w = width - 1;
  const double h = height - 1;
  return {Point2{0, 0}, Point2{w, 0}, Point2{w, h}, Point2{0, h}};
}

double mean_corner_error(const Homography& a, const Homography& b, int width,
                         int height) {
  double sum = 0.0;
  for (const auto& c : image_corners(width, height)) {
    const Point2 pa = a.apply(c);
    const Point2 pb = b.apply(c);
    sum += std::hypot(pa.x - pb.x, pa.y - pb.y);
  }
  return sum / 4.0;
}

}  // namespace pcnet

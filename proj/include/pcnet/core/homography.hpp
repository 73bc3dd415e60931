#pragma once

#include <array>

#include <Eigen/Dense>

namespace pcnet {

using Mat3 = Eigen::Matrix3d;

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

// Projective transform in pixel coordinates, normalized so that m(2,2) == 1.
// By convention it maps target (thermal) points to source (RGB) points.
class Homography {
 public:
  Homography() : m_(Mat3::Identity()) {}

  static Homography identity() { return Homography(); }
  static Homography translation(double dx, double dy);
  static Homography scaling(double sx, double sy);

  const Mat3& matrix() const { return m_; }
  double operator()(int r, int c) const { return m_(r, c); }

  Point2 apply(Point2 p) const;
  Homography inverse() const;

  // Row-major 9 values.
  std::array<double, 9> values() const;

  friend bool operator==(const Homography& a, const Homography& b) {
    return a.m_ == b.m_;
  }

 private:
  friend Homography normalize_homography(const Mat3& m);
  explicit Homography(const Mat3& m) : m_(m) {}

  Mat3 m_;
};

// Divides by m(2,2). Throws DegenerateHomography when |m(2,2)| < 1e-12 or the
// normalized matrix is singular.
Homography normalize_homography(const Mat3& m);

// Throws PointAtInfinity when the projective denominator vanishes.
Point2 apply_homography(const Homography& h, Point2 p);

// apply(compose(h1, h2), p) == apply(h1, apply(h2, p)).
Homography compose(const Homography& h1, const Homography& h2);

// Offsets of the four image corners, ordered (0,0), (W-1,0), (W-1,H-1),
// (0,H-1).
struct CornerDisplacement {
  std::array<Point2, 4> d{};

  static CornerDisplacement zero() { return {}; }
  bool is_zero() const;
};

// Pixel-center corners of a width x height image in the order used by
// CornerDisplacement.
std::array<Point2, 4> image_corners(int width, int height);

// Mean Euclidean distance between the corners mapped by a and by b.
double mean_corner_error(const Homography& a, const Homography& b, int width,
                         int height);

}  // namespace pcnet

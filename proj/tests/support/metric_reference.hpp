#pragma once

// Straightforward re-implementations of the saliency metrics, written from
// the formulas over plain row-major grids. Used only as test oracles.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace testing::ref {

using Grid = std::vector<std::vector<double>>;

inline double grid_mean(const Grid& g) {
  double s = 0;
  std::size_t n = 0;
  for (const auto& row : g) {
    s = std::accumulate(row.begin(), row.end(), s);
    n += row.size();
  }
  return n ? s / n : 0.0;
}

inline Grid binarize(const Grid& pred) {
  const double t = std::min(1.0, 2 * grid_mean(pred));
  Grid b = pred;
  for (auto& row : b)
    for (auto& v : row) v = (v > 0 && v >= t) ? 1 : 0;
  return b;
}

inline double f_measure(const Grid& pred, const Grid& gt) {
  const Grid b = binarize(pred);
  int tp = 0, fp = 0, fn = 0;
  for (std::size_t y = 0; y < gt.size(); ++y)
    for (std::size_t x = 0; x < gt[y].size(); ++x) {
      if (b[y][x] == 1 && gt[y][x] == 1) ++tp;
      if (b[y][x] == 1 && gt[y][x] == 0) ++fp;
      if (b[y][x] == 0 && gt[y][x] == 1) ++fn;
    }
  const double p = tp + fp ? double(tp) / (tp + fp) : 0;
  const double r = tp + fn ? double(tp) / (tp + fn) : 0;
  return p + r > 0 ? 1.3 * p * r / (0.3 * p + r) : 0;
}

inline double e_measure(const Grid& pred, const Grid& gt) {
  const Grid b = binarize(pred);
  const double mg = grid_mean(gt), mb = grid_mean(b);
  if (mg == 0) return 1 - mb;
  if (mg == 1) return mb;
  double sum = 0;
  double count = 0;
  for (std::size_t y = 0; y < gt.size(); ++y)
    for (std::size_t x = 0; x < gt[y].size(); ++x) {
      const double pg = gt[y][x] - mg, pf = b[y][x] - mb;
      const double align = 2 * pg * pf / (pg * pg + pf * pf + 1e-12);
      sum += (align + 1) * (align + 1) / 4;
      count += 1;
    }
  return sum / count;
}

namespace detail {

constexpr double eps = std::numeric_limits<double>::epsilon();

inline double obj(const std::vector<double>& v) {
  if (v.empty()) return 0;
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  double var = 0;
  for (double x : v) var += (x - m) * (x - m);
  const double sd = v.size() > 1 ? std::sqrt(var / (v.size() - 1)) : 0;
  return 2 * m / (m * m + 1 + sd + eps);
}

inline double ssim(const std::vector<double>& p, const std::vector<double>& g) {
  const double n = p.size();
  if (n == 0) return 0;
  const double mx = std::accumulate(p.begin(), p.end(), 0.0) / n;
  const double my = std::accumulate(g.begin(), g.end(), 0.0) / n;
  double vx = 0, vy = 0, cxy = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    vx += (p[i] - mx) * (p[i] - mx);
    vy += (g[i] - my) * (g[i] - my);
    cxy += (p[i] - mx) * (g[i] - my);
  }
  vx /= n - 1 + eps;
  vy /= n - 1 + eps;
  cxy /= n - 1 + eps;
  const double a = 4 * mx * my * cxy, b = (mx * mx + my * my) * (vx + vy);
  if (a != 0) return a / (b + eps);
  if (b != 0) return 0;
  if (mx == 0 && my == 0) return 1;
  return 2 * mx * my / (mx * mx + my * my);
}

}  // namespace detail

inline double s_measure(const Grid& pred, const Grid& gt) {
  const int h = gt.size(), w = gt[0].size();
  const double u = grid_mean(gt);
  if (u == 0) return 1 - grid_mean(pred);
  if (u == 1) return grid_mean(pred);
  std::vector<double> fg, bg;
  double xs = 0, ys = 0, area = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (gt[y][x] == 1) {
        fg.push_back(pred[y][x]);
        xs += x + 1;
        ys += y + 1;
        area += 1;
      } else {
        bg.push_back(1 - pred[y][x]);
      }
    }
  const double object = u * detail::obj(fg) + (1 - u) * detail::obj(bg);
  const int cx = std::lround(xs / area), cy = std::lround(ys / area);
  double region = 0;
  const int xb[3] = {0, cx, w}, yb[3] = {0, cy, h};
  for (int by = 0; by < 2; ++by)
    for (int bx = 0; bx < 2; ++bx) {
      std::vector<double> p, g;
      for (int y = yb[by]; y < yb[by + 1]; ++y)
        for (int x = xb[bx]; x < xb[bx + 1]; ++x) {
          p.push_back(pred[y][x]);
          g.push_back(gt[y][x]);
        }
      region += double(p.size()) / (h * w) * detail::ssim(p, g);
    }
  return std::max(0.0, (object + region) / 2);
}

}  // namespace testing::ref

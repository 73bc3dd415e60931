#include "pcnet/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <ostream>

#include "pcnet/core/errors.hpp"

namespace pcnet::eval {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

void check_pair(const Image& pred, const Image& gt, const char* what) {
  if (pred.channels() != 1 || gt.channels() != 1 || !pred.same_size(gt))
    throw ShapeError(std::string(what) + ": pred and gt must be single-channel maps of equal size");
}

double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// Mean and sample standard deviation of pred over pixels where mask is set.
double object_similarity(const std::vector<double>& pred, const std::vector<double>& gt, bool fg) {
  double sum = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < gt.size(); ++i)
    if ((gt[i] > 0.5) == fg) {
      sum += pred[i];
      ++n;
    }
  if (n == 0) return 0.0;
  const double x = sum / static_cast<double>(n);
  double ss = 0;
  for (std::size_t i = 0; i < gt.size(); ++i)
    if ((gt[i] > 0.5) == fg) ss += (pred[i] - x) * (pred[i] - x);
  const double sigma = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
  return 2.0 * x / (x * x + 1.0 + sigma + kEps);
}

struct Block {
  int y0, y1, x0, x1;
};

double block_ssim(const Image& pred, const Image& gt, const Block& b) {
  const int n = (b.y1 - b.y0) * (b.x1 - b.x0);
  if (n <= 0) return 0.0;
  double mx = 0, my = 0;
  for (int y = b.y0; y < b.y1; ++y)
    for (int x = b.x0; x < b.x1; ++x) {
      mx += pred.at(0, y, x);
      my += gt.at(0, y, x);
    }
  mx /= n;
  my /= n;
  double sxx = 0, syy = 0, sxy = 0;
  for (int y = b.y0; y < b.y1; ++y)
    for (int x = b.x0; x < b.x1; ++x) {
      const double dx = pred.at(0, y, x) - mx, dy = gt.at(0, y, x) - my;
      sxx += dx * dx;
      syy += dy * dy;
      sxy += dx * dy;
    }
  const double denom = n - 1 + kEps;
  sxx /= denom;
  syy /= denom;
  sxy /= denom;
  const double alpha = 4 * mx * my * sxy;
  const double beta = (mx * mx + my * my) * (sxx + syy);
  if (alpha != 0) return alpha / (beta + kEps);
  if (beta != 0) return 0.0;
  // Both blocks constant: only their levels can be compared.
  return mx == 0 && my == 0 ? 1.0 : 2 * mx * my / (mx * mx + my * my);
}

double region_similarity(const Image& pred, const Image& gt) {
  const int h = gt.height(), w = gt.width();
  // Split point: rounded 1-based centroid of the foreground.
  double sx = 0, sy = 0, area = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (gt.at(0, y, x) > 0.5) {
        sx += x + 1;
        sy += y + 1;
        area += 1;
      }
  const int cx = static_cast<int>(std::round(sx / area));
  const int cy = static_cast<int>(std::round(sy / area));
  const double total = static_cast<double>(h) * w;
  const double w1 = static_cast<double>(cx) * cy / total;
  const double w2 = static_cast<double>(w - cx) * cy / total;
  const double w3 = static_cast<double>(cx) * (h - cy) / total;
  const double w4 = 1.0 - w1 - w2 - w3;
  return w1 * block_ssim(pred, gt, {0, cy, 0, cx}) + w2 * block_ssim(pred, gt, {0, cy, cx, w}) +
         w3 * block_ssim(pred, gt, {cy, h, 0, cx}) + w4 * block_ssim(pred, gt, {cy, h, cx, w});
}

void accumulate(Scores& s, const Scores& x) {
  s.e += x.e;
  s.s += x.s;
  s.f += x.f;
}

Aggregate average(const std::vector<const Scores*>& xs) {
  Aggregate a;
  for (const Scores* x : xs) accumulate(a.mean, *x);
  a.count = xs.size();
  const double n = static_cast<double>(xs.size());
  a.mean.e /= n;
  a.mean.s /= n;
  a.mean.f /= n;
  return a;
}

void write_row(std::ostream& out, const std::string& label, const Scores& s) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "\t%.6f\t%.6f\t%.6f\n", s.e, s.s, s.f);
  out << label << buf;
}

}  // namespace

std::vector<double> adaptive_binarize(const Image& pred) {
  const auto& p = pred.data();
  const double tau = std::min(1.0, 2.0 * mean(p));
  std::vector<double> bin(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) bin[i] = p[i] >= tau && p[i] > 0 ? 1.0 : 0.0;
  return bin;
}

double f_measure(const Image& pred, const Image& gt) {
  check_pair(pred, gt, "f_measure");
  const std::vector<double> bin = adaptive_binarize(pred);
  const auto& g = gt.data();
  double tp = 0, predicted = 0, positive = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const bool gi = g[i] > 0.5;
    tp += bin[i] * gi;
    predicted += bin[i];
    positive += gi;
  }
  const double p = predicted > 0 ? tp / predicted : 0.0;
  const double r = positive > 0 ? tp / positive : 0.0;
  if (p + r == 0) return 0.0;
  constexpr double beta2 = 0.3;
  return (1 + beta2) * p * r / (beta2 * p + r);
}

double s_measure(const Image& pred, const Image& gt) {
  check_pair(pred, gt, "s_measure");
  const auto& p = pred.data();
  const auto& g = gt.data();
  double fg = 0;
  for (double v : g) fg += v > 0.5;
  const double u = fg / static_cast<double>(g.size());
  if (u == 0) return 1.0 - mean(p);
  if (u == 1) return mean(p);

  std::vector<double> inverted(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) inverted[i] = 1.0 - p[i];
  const double object = u * object_similarity(p, g, true) + (1 - u) * object_similarity(inverted, g, false);
  const double region = region_similarity(pred, gt);
  return std::max(0.0, 0.5 * object + 0.5 * region);
}

double e_measure(const Image& pred, const Image& gt) {
  check_pair(pred, gt, "e_measure");
  const std::vector<double> bin = adaptive_binarize(pred);
  const auto& g = gt.data();
  const std::size_t n = g.size();
  std::vector<double> gb(n);
  for (std::size_t i = 0; i < n; ++i) gb[i] = g[i] > 0.5 ? 1.0 : 0.0;
  const double mg = mean(gb);
  if (mg == 0) return 1.0 - mean(bin);
  if (mg == 1) return mean(bin);
  const double mb = mean(bin);
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = gb[i] - mg, b = bin[i] - mb;
    const double xi = 2 * a * b / (a * a + b * b + 1e-12);
    total += (1 + xi) * (1 + xi) / 4;
  }
  return total / static_cast<double>(n);
}

Scores score_image(const Image& pred, const Image& gt) {
  return {e_measure(pred, gt), s_measure(pred, gt), f_measure(pred, gt)};
}

EvalReport evaluate_dataset(const std::vector<EvalItem>& items) {
  if (items.empty()) throw EmptyDataset("evaluate_dataset: no items");
  EvalReport report;
  std::map<std::string, std::vector<const Scores*>> by_attribute;
  report.per_image.reserve(items.size());
  for (const EvalItem& item : items) {
    const Image& gt = item.gt;
    Image pred = item.pred.channels() == 1 ? item.pred : to_grayscale(item.pred);
    if (!pred.same_size(gt)) pred = resize_bilinear(pred, gt.height(), gt.width());
    report.per_image.push_back({item.id, score_image(pred, gt)});
  }
  std::vector<const Scores*> all;
  for (std::size_t i = 0; i < items.size(); ++i) {
    all.push_back(&report.per_image[i].scores);
    for (const std::string& a : items[i].attributes) by_attribute[a].push_back(&report.per_image[i].scores);
  }
  report.aggregate = average(all);
  for (const auto& [a, xs] : by_attribute) report.per_attribute[a] = average(xs);
  return report;
}

void write_report(const EvalReport& report, std::ostream& out) {
  out << "id\tEm\tSm\tFm\n";
  for (const ImageScores& r : report.per_image) write_row(out, r.id, r.scores);
  out << "\n# summary (F uses the adaptive threshold)\nsubset\tcount\tEm\tSm\tFm\n";
  write_row(out, "all\t" + std::to_string(report.aggregate.count), report.aggregate.mean);
  for (const auto& [a, agg] : report.per_attribute)
    write_row(out, "attr:" + a + "\t" + std::to_string(agg.count), agg.mean);
}

void write_report(const EvalReport& report, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  write_report(report, out);
}

}  // namespace pcnet::eval

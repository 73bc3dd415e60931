#pragma once

// Straightforward reference implementations used only by tests. They are
// written directly from the formulas, without sharing code with the library.

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "pcnet/core/homography.hpp"
#include "pcnet/core/image.hpp"

namespace pcnet::testing {

// Per-pixel inverse mapping with tent-weighted neighbors.
inline std::pair<Image, Image> brute_force_warp(const Image& img, const Mat3& h) {
  const int H = img.height(), W = img.width();
  Image out(img.channels(), H, W), valid(1, H, W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const double w = h(2, 0) * x + h(2, 1) * y + h(2, 2);
      const double u = (h(0, 0) * x + h(0, 1) * y + h(0, 2)) / w;
      const double v = (h(1, 0) * x + h(1, 1) * y + h(1, 2)) / w;
      if (!(u >= 0 && u <= W - 1 && v >= 0 && v <= H - 1)) continue;
      valid.at(0, y, x) = 1;
      for (int c = 0; c < img.channels(); ++c) {
        double s = 0;
        for (int j = 0; j < H; ++j)
          for (int i = 0; i < W; ++i) {
            const double k = std::max(0.0, 1 - std::abs(u - i)) * std::max(0.0, 1 - std::abs(v - j));
            s += k * img.at(c, j, i);
          }
        out.at(c, y, x) = s;
      }
    }
  return {out, valid};
}

// Single-head attention on token lists: q [Tq][Cq], kv [Tk][Ck]; weights are
// row-major [out][in].
using Mat = std::vector<std::vector<double>>;

inline Mat project(const Mat& tokens, const Mat& weight) {
  Mat out(tokens.size(), std::vector<double>(weight.size(), 0.0));
  for (std::size_t t = 0; t < tokens.size(); ++t)
    for (std::size_t o = 0; o < weight.size(); ++o)
      for (std::size_t i = 0; i < weight[o].size(); ++i) out[t][o] += weight[o][i] * tokens[t][i];
  return out;
}

inline Mat attention_oracle(const Mat& q_in, const Mat& kv_in, const Mat& pq, const Mat& pk,
                            const Mat& pv, Mat* weights = nullptr) {
  const Mat q = project(q_in, pq), k = project(kv_in, pk), v = project(kv_in, pv);
  const double scale = 1.0 / std::sqrt(static_cast<double>(pq.size()));
  Mat out = q;
  if (weights) weights->assign(q.size(), std::vector<double>(k.size()));
  for (std::size_t i = 0; i < q.size(); ++i) {
    std::vector<double> logits(k.size());
    for (std::size_t j = 0; j < k.size(); ++j) {
      double dot = 0;
      for (std::size_t c = 0; c < q[i].size(); ++c) dot += q[i][c] * k[j][c];
      logits[j] = dot * scale;
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0;
    for (double& l : logits) z += (l = std::exp(l - mx));
    for (std::size_t j = 0; j < k.size(); ++j) {
      const double a = logits[j] / z;
      if (weights) (*weights)[i][j] = a;
      for (std::size_t c = 0; c < v[j].size(); ++c) out[i][c] += a * v[j][c];
    }
  }
  return out;
}

}  // namespace pcnet::testing

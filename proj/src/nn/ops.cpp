#include "pcnet/nn/ops.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>

#include <Eigen/Core>

#include "pcnet/core/errors.hpp"

namespace pcnet::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

detail::Node& parent(detail::Node& self, std::size_t i) { return *self.parents[i]; }

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

// Index arithmetic for broadcasting binary ops.
struct Broadcast {
  Shape out;
  std::array<std::size_t, 4> sa{};
  std::array<std::size_t, 4> sb{};

  Broadcast(const Shape& a, const Shape& b) {
    const std::array<int, 4> da{a.n, a.c, a.h, a.w};
    const std::array<int, 4> db{b.n, b.c, b.h, b.w};
    std::array<int, 4> d{};
    for (int i = 0; i < 4; ++i) {
      require(da[i] == db[i] || da[i] == 1 || db[i] == 1,
              "cannot broadcast " + to_string(a) + " with " + to_string(b));
      d[i] = std::max(da[i], db[i]);
    }
    out = {d[0], d[1], d[2], d[3]};
    auto strides = [&](const std::array<int, 4>& dims, std::array<std::size_t, 4>& s) {
      std::size_t acc = 1;
      for (int i = 3; i >= 0; --i) {
        s[i] = dims[i] == 1 ? 0 : acc;
        acc *= dims[i];
      }
    };
    strides(da, sa);
    strides(db, sb);
  }

  template <class F>
  void each(F&& f) const {
    std::size_t o = 0;
    for (int n = 0; n < out.n; ++n)
      for (int c = 0; c < out.c; ++c)
        for (int h = 0; h < out.h; ++h)
          for (int w = 0; w < out.w; ++w, ++o)
            f(o, n * sa[0] + c * sa[1] + h * sa[2] + w * sa[3],
              n * sb[0] + c * sb[1] + h * sb[2] + w * sb[3]);
  }
};

template <class Fwd, class GradA, class GradB>
Tensor binary(const Tensor& a, const Tensor& b, Fwd fwd, GradA ga, GradB gb) {
  if (a.shape() == b.shape()) {
    const auto& av = a.values();
    const auto& bv = b.values();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i], bv[i]);
    return make_result(a.shape(), std::move(out), {a, b}, [ga, gb](detail::Node& self) {
      auto& pa = parent(self, 0);
      auto& pb = parent(self, 1);
      const auto& g = self.grad;
      if (pa.requires_grad) {
        auto& d = pa.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * ga(pa.value[i], pb.value[i]);
      }
      if (pb.requires_grad) {
        auto& d = pb.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * gb(pa.value[i], pb.value[i]);
      }
    });
  }
  auto bc = std::make_shared<Broadcast>(a.shape(), b.shape());
  std::vector<double> out(bc->out.numel());
  const auto& av = a.values();
  const auto& bv = b.values();
  bc->each([&](std::size_t o, std::size_t ia, std::size_t ib) { out[o] = fwd(av[ia], bv[ib]); });
  return make_result(bc->out, std::move(out), {a, b}, [bc, ga, gb](detail::Node& self) {
    auto& pa = parent(self, 0);
    auto& pb = parent(self, 1);
    const auto& g = self.grad;
    if (pa.requires_grad) {
      auto& d = pa.grad_buffer();
      bc->each([&](std::size_t o, std::size_t ia, std::size_t ib) {
        d[ia] += g[o] * ga(pa.value[ia], pb.value[ib]);
      });
    }
    if (pb.requires_grad) {
      auto& d = pb.grad_buffer();
      bc->each([&](std::size_t o, std::size_t ia, std::size_t ib) {
        d[ib] += g[o] * gb(pa.value[ia], pb.value[ib]);
      });
    }
  });
}

template <class Fwd, class Deriv>
Tensor unary(const Tensor& x, Fwd fwd, Deriv deriv) {
  const auto& xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xv[i]);
  return make_result(x.shape(), std::move(out), {x}, [deriv](detail::Node& self) {
    auto& px = parent(self, 0);
    auto& d = px.grad_buffer();
    for (std::size_t i = 0; i < d.size(); ++i)
      d[i] += self.grad[i] * deriv(px.value[i], self.value[i]);
  });
}

void check_bias(const Tensor& bias, int channels) {
  if (!bias.defined()) return;
  require(bias.numel() == static_cast<std::size_t>(channels),
          "bias has " + std::to_string(bias.numel()) + " entries, expected " +
              std::to_string(channels));
}

void add_bias(std::vector<double>& out, const Tensor& bias, const Shape& s) {
  if (!bias.defined()) return;
  const auto& b = bias.values();
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      double* o = out.data() + (static_cast<std::size_t>(n) * s.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) o[i] += b[c];
    }
}

void bias_backward(detail::Node& self, std::size_t index) {
  if (self.parents.size() <= index) return;
  auto& pb = parent(self, index);
  if (!pb.requires_grad) return;
  auto& d = pb.grad_buffer();
  const Shape& s = self.shape;
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const double* g = self.grad.data() + (static_cast<std::size_t>(n) * s.c + c) * plane;
      double acc = 0.0;
      for (std::size_t i = 0; i < plane; ++i) acc += g[i];
      d[c] += acc;
    }
}

// Bilinear taps for one axis with half-pixel centers and edge clamping.
struct Taps {
  std::vector<int> i0, i1;
  std::vector<double> l;
};

Taps resize_taps(int in, int out) {
  Taps t;
  t.i0.resize(out);
  t.i1.resize(out);
  t.l.resize(out);
  const double s = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    const double f = std::max(0.0, (o + 0.5) * s - 0.5);
    const int i0 = std::min(static_cast<int>(f), in - 1);
    t.i0[o] = i0;
    t.i1[o] = std::min(i0 + 1, in - 1);
    t.l[o] = f - i0;
  }
  return t;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(a, b, [](double x, double y) { return x + y; },
                [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(a, b, [](double x, double y) { return x - y; },
                [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(a, b, [](double x, double y) { return x * y; },
                [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor scale(const Tensor& a, double s) {
  return unary(a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor relu(const Tensor& x) {
  return unary(x, [](double v) { return v > 0.0 ? v : 0.0; },
               [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
               [](double, double y) { return y * (1.0 - y); });
}

Tensor abs(const Tensor& x) {
  return unary(x, [](double v) { return std::abs(v); },
               [](double v, double) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
}

Tensor channel_mean(const Tensor& x) {
  const Shape s = x.shape();
  const std::size_t plane = s.plane();
  Shape os{s.n, 1, s.h, s.w};
  std::vector<double> out(os.numel(), 0.0);
  const auto& xv = x.values();
  for (int n = 0; n < s.n; ++n) {
    double* o = out.data() + n * plane;
    for (int c = 0; c < s.c; ++c) {
      const double* xi = xv.data() + (static_cast<std::size_t>(n) * s.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) o[i] += xi[i];
    }
    for (std::size_t i = 0; i < plane; ++i) o[i] /= s.c;
  }
  return make_result(os, std::move(out), {x}, [s, plane](detail::Node& self) {
    auto& d = parent(self, 0).grad_buffer();
    for (int n = 0; n < s.n; ++n) {
      const double* g = self.grad.data() + n * plane;
      for (int c = 0; c < s.c; ++c) {
        double* di = d.data() + (static_cast<std::size_t>(n) * s.c + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) di[i] += g[i] / s.c;
      }
    }
  });
}

Tensor sum_all(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  return make_result(Shape{}, {acc}, {x}, [](detail::Node& self) {
    auto& d = parent(self, 0).grad_buffer();
    for (auto& v : d) v += self.grad[0];
  });
}

Tensor mean_all(const Tensor& x) { return scale(sum_all(x), 1.0 / x.numel()); }

Tensor reshape(const Tensor& x, Shape shape) {
  require(shape.numel() == x.numel(),
          "reshape " + to_string(x.shape()) + " -> " + to_string(shape));
  return make_result(shape, x.values(), {x}, [](detail::Node& self) {
    auto& d = parent(self, 0).grad_buffer();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i];
  });
}

Tensor concat_channels(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat of nothing");
  Shape s = parts[0].shape();
  s.c = 0;
  for (const auto& p : parts) {
    require(p.shape().n == s.n && p.shape().h == s.h && p.shape().w == s.w,
            "concat shape mismatch " + to_string(p.shape()));
    s.c += p.shape().c;
  }
  const std::size_t plane = s.plane();
  std::vector<double> out(s.numel());
  std::vector<int> offsets;
  int off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const int pc = p.shape().c;
    for (int n = 0; n < s.n; ++n)
      std::copy_n(p.values().data() + static_cast<std::size_t>(n) * pc * plane, pc * plane,
                  out.data() + (static_cast<std::size_t>(n) * s.c + off) * plane);
    off += pc;
  }
  return make_result(s, std::move(out), parts, [s, plane, offsets](detail::Node& self) {
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      auto& p = parent(self, k);
      if (!p.requires_grad) continue;
      auto& d = p.grad_buffer();
      const int pc = p.shape.c;
      for (int n = 0; n < s.n; ++n) {
        const double* g = self.grad.data() + (static_cast<std::size_t>(n) * s.c + offsets[k]) * plane;
        double* di = d.data() + static_cast<std::size_t>(n) * pc * plane;
        for (std::size_t i = 0; i < pc * plane; ++i) di[i] += g[i];
      }
    }
  });
}

Tensor slice_channels(const Tensor& x, int begin, int count) {
  const Shape s = x.shape();
  require(begin >= 0 && count > 0 && begin + count <= s.c, "channel slice out of range");
  Shape os{s.n, count, s.h, s.w};
  const std::size_t plane = s.plane();
  std::vector<double> out(os.numel());
  for (int n = 0; n < s.n; ++n)
    std::copy_n(x.values().data() + (static_cast<std::size_t>(n) * s.c + begin) * plane,
                count * plane, out.data() + static_cast<std::size_t>(n) * count * plane);
  return make_result(os, std::move(out), {x}, [s, begin, count, plane](detail::Node& self) {
    auto& d = parent(self, 0).grad_buffer();
    for (int n = 0; n < s.n; ++n) {
      const double* g = self.grad.data() + static_cast<std::size_t>(n) * count * plane;
      double* di = d.data() + (static_cast<std::size_t>(n) * s.c + begin) * plane;
      for (std::size_t i = 0; i < count * plane; ++i) di[i] += g[i];
    }
  });
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride,
              int pad) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  require(ws.c == xs.c && ws.h == ws.w,
          "conv2d weight " + to_string(ws) + " vs input " + to_string(xs));
  require(stride > 0 && pad >= 0, "conv2d stride/pad");
  check_bias(bias, ws.n);
  const int k = ws.h;
  const int ho = (xs.h + 2 * pad - k) / stride + 1;
  const int wo = (xs.w + 2 * pad - k) / stride + 1;
  require(ho > 0 && wo > 0, "conv2d output would be empty");
  const Shape os{xs.n, ws.n, ho, wo};
  const int kk = xs.c * k * k;
  const int p = ho * wo;

  auto cols = std::make_shared<std::vector<double>>(static_cast<std::size_t>(xs.n) * kk * p, 0.0);
  const auto& xv = x.values();
  for (int n = 0; n < xs.n; ++n) {
    double* col = cols->data() + static_cast<std::size_t>(n) * kk * p;
    const double* xn = xv.data() + static_cast<std::size_t>(n) * xs.item();
    for (int c = 0; c < xs.c; ++c)
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx) {
          double* row = col + static_cast<std::size_t>((c * k + ky) * k + kx) * p;
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= xs.h) continue;
            const double* src = xn + (static_cast<std::size_t>(c) * xs.h + iy) * xs.w;
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * stride - pad + kx;
              if (ix >= 0 && ix < xs.w) row[oy * wo + ox] = src[ix];
            }
          }
        }
  }

  std::vector<double> out(os.numel());
  ConstMapMat wm(weight.values().data(), ws.n, kk);
  for (int n = 0; n < xs.n; ++n) {
    ConstMapMat col(cols->data() + static_cast<std::size_t>(n) * kk * p, kk, p);
    MapMat o(out.data() + static_cast<std::size_t>(n) * ws.n * p, ws.n, p);
    o.noalias() = wm * col;
  }
  add_bias(out, bias, os);

  return make_result(os, std::move(out), {x, weight, bias},
                     [cols, xs, ws, k, kk, p, ho, wo, stride, pad](detail::Node& self) {
    auto& px = parent(self, 0);
    auto& pw = parent(self, 1);
    if (pw.requires_grad) {
      MapMat dw(pw.grad_buffer().data(), ws.n, kk);
      for (int n = 0; n < xs.n; ++n) {
        ConstMapMat g(self.grad.data() + static_cast<std::size_t>(n) * ws.n * p, ws.n, p);
        ConstMapMat col(cols->data() + static_cast<std::size_t>(n) * kk * p, kk, p);
        dw.noalias() += g * col.transpose();
      }
    }
    bias_backward(self, 2);
    if (px.requires_grad) {
      auto& dx = px.grad_buffer();
      ConstMapMat wm(pw.value.data(), ws.n, kk);
      RowMat dcol(kk, p);
      for (int n = 0; n < xs.n; ++n) {
        ConstMapMat g(self.grad.data() + static_cast<std::size_t>(n) * ws.n * p, ws.n, p);
        dcol.noalias() = wm.transpose() * g;
        double* dxn = dx.data() + static_cast<std::size_t>(n) * xs.item();
        for (int c = 0; c < xs.c; ++c)
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              const double* row = dcol.data() + static_cast<std::size_t>((c * k + ky) * k + kx) * p;
              for (int oy = 0; oy < ho; ++oy) {
                const int iy = oy * stride - pad + ky;
                if (iy < 0 || iy >= xs.h) continue;
                double* dst = dxn + (static_cast<std::size_t>(c) * xs.h + iy) * xs.w;
                for (int ox = 0; ox < wo; ++ox) {
                  const int ix = ox * stride - pad + kx;
                  if (ix >= 0 && ix < xs.w) dst[ix] += row[oy * wo + ox];
                }
              }
            }
      }
    }
  });
}

Tensor depthwise_conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int pad) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  require(ws.n == xs.c && ws.c == 1 && ws.h == ws.w, "depthwise weight " + to_string(ws));
  check_bias(bias, xs.c);
  const int k = ws.h;
  const int ho = xs.h + 2 * pad - k + 1;
  const int wo = xs.w + 2 * pad - k + 1;
  require(ho > 0 && wo > 0, "depthwise output would be empty");
  const Shape os{xs.n, xs.c, ho, wo};
  std::vector<double> out(os.numel(), 0.0);
  const auto& xv = x.values();
  const auto& wv = weight.values();
  for (int n = 0; n < xs.n; ++n)
    for (int c = 0; c < xs.c; ++c) {
      const double* src = xv.data() + (static_cast<std::size_t>(n) * xs.c + c) * xs.plane();
      double* dst = out.data() + (static_cast<std::size_t>(n) * xs.c + c) * os.plane();
      const double* kw = wv.data() + static_cast<std::size_t>(c) * k * k;
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx) {
          const double wgt = kw[ky * k + kx];
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy - pad + ky;
            if (iy < 0 || iy >= xs.h) continue;
            const int x_lo = std::max(0, pad - kx);
            const int x_hi = std::min(wo, xs.w + pad - kx);
            const double* s = src + static_cast<std::size_t>(iy) * xs.w + (kx - pad);
            double* d = dst + static_cast<std::size_t>(oy) * wo;
            for (int ox = x_lo; ox < x_hi; ++ox) d[ox] += wgt * s[ox];
          }
        }
    }
  add_bias(out, bias, os);
  return make_result(os, std::move(out), {x, weight, bias},
                     [xs, os, k, pad](detail::Node& self) {
    auto& px = parent(self, 0);
    auto& pw = parent(self, 1);
    const bool need_x = px.requires_grad;
    const bool need_w = pw.requires_grad;
    double* dx = need_x ? px.grad_buffer().data() : nullptr;
    double* dw = need_w ? pw.grad_buffer().data() : nullptr;
    for (int n = 0; n < xs.n; ++n)
      for (int c = 0; c < xs.c; ++c) {
        const std::size_t ib = (static_cast<std::size_t>(n) * xs.c + c) * xs.plane();
        const double* src = px.value.data() + ib;
        const double* g = self.grad.data() + (static_cast<std::size_t>(n) * xs.c + c) * os.plane();
        const double* kw = pw.value.data() + static_cast<std::size_t>(c) * k * k;
        for (int ky = 0; ky < k; ++ky)
          for (int kx = 0; kx < k; ++kx) {
            const double wgt = kw[ky * k + kx];
            double acc = 0.0;
            const int x_lo = std::max(0, pad - kx);
            const int x_hi = std::min(os.w, xs.w + pad - kx);
            for (int oy = 0; oy < os.h; ++oy) {
              const int iy = oy - pad + ky;
              if (iy < 0 || iy >= xs.h) continue;
              const std::size_t row = static_cast<std::size_t>(iy) * xs.w + (kx - pad);
              const double* gr = g + static_cast<std::size_t>(oy) * os.w;
              if (need_w)
                for (int ox = x_lo; ox < x_hi; ++ox) acc += gr[ox] * src[row + ox];
              if (need_x)
                for (int ox = x_lo; ox < x_hi; ++ox) dx[ib + row + ox] += gr[ox] * wgt;
            }
            if (need_w) dw[static_cast<std::size_t>(c) * k * k + ky * k + kx] += acc;
          }
      }
    bias_backward(self, 2);
  });
}

Tensor pointwise(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  require(ws.c == xs.c && ws.h == 1 && ws.w == 1,
          "pointwise weight " + to_string(ws) + " vs input " + to_string(xs));
  check_bias(bias, ws.n);
  const Shape os{xs.n, ws.n, xs.h, xs.w};
  const int p = static_cast<int>(xs.plane());
  std::vector<double> out(os.numel());
  ConstMapMat wm(weight.values().data(), ws.n, ws.c);
  for (int n = 0; n < xs.n; ++n) {
    ConstMapMat xn(x.values().data() + static_cast<std::size_t>(n) * xs.item(), xs.c, p);
    MapMat o(out.data() + static_cast<std::size_t>(n) * os.item(), ws.n, p);
    o.noalias() = wm * xn;
  }
  add_bias(out, bias, os);
  return make_result(os, std::move(out), {x, weight, bias}, [xs, ws, os, p](detail::Node& self) {
    auto& px = parent(self, 0);
    auto& pw = parent(self, 1);
    ConstMapMat wm(pw.value.data(), ws.n, ws.c);
    for (int n = 0; n < xs.n; ++n) {
      ConstMapMat g(self.grad.data() + static_cast<std::size_t>(n) * os.item(), ws.n, p);
      if (pw.requires_grad) {
        MapMat dw(pw.grad_buffer().data(), ws.n, ws.c);
        ConstMapMat xn(px.value.data() + static_cast<std::size_t>(n) * xs.item(), xs.c, p);
        dw.noalias() += g * xn.transpose();
      }
      if (px.requires_grad) {
        MapMat dx(px.grad_buffer().data() + static_cast<std::size_t>(n) * xs.item(), xs.c, p);
        dx.noalias() += wm.transpose() * g;
      }
    }
    bias_backward(self, 2);
  });
}

Tensor layer_norm_channels(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                           double eps) {
  const Shape s = x.shape();
  require(gamma.numel() == static_cast<std::size_t>(s.c) &&
              beta.numel() == static_cast<std::size_t>(s.c),
          "layer norm parameters must have one entry per channel");
  const std::size_t plane = s.plane();
  auto xhat = std::make_shared<std::vector<double>>(s.numel());
  auto inv_std = std::make_shared<std::vector<double>>(static_cast<std::size_t>(s.n) * plane);
  std::vector<double> out(s.numel());
  const auto& xv = x.values();
  const auto& gv = gamma.values();
  const auto& bv = beta.values();
  for (int n = 0; n < s.n; ++n) {
    const std::size_t base = static_cast<std::size_t>(n) * s.item();
    for (std::size_t i = 0; i < plane; ++i) {
      double mean = 0.0;
      for (int c = 0; c < s.c; ++c) mean += xv[base + c * plane + i];
      mean /= s.c;
      double var = 0.0;
      for (int c = 0; c < s.c; ++c) {
        const double d = xv[base + c * plane + i] - mean;
        var += d * d;
      }
      var /= s.c;
      const double is = 1.0 / std::sqrt(var + eps);
      (*inv_std)[n * plane + i] = is;
      for (int c = 0; c < s.c; ++c) {
        const std::size_t k = base + c * plane + i;
        (*xhat)[k] = (xv[k] - mean) * is;
        out[k] = gv[c] * (*xhat)[k] + bv[c];
      }
    }
  }
  return make_result(s, std::move(out), {x, gamma, beta},
                     [s, plane, xhat, inv_std](detail::Node& self) {
    auto& px = parent(self, 0);
    auto& pg = parent(self, 1);
    auto& pb = parent(self, 2);
    const auto& g = self.grad;
    if (pg.requires_grad || pb.requires_grad) {
      auto& dg = pg.grad_buffer();
      auto& db = pb.grad_buffer();
      for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
          const std::size_t base = static_cast<std::size_t>(n) * s.item() + c * plane;
          double ag = 0.0, ab = 0.0;
          for (std::size_t i = 0; i < plane; ++i) {
            ag += g[base + i] * (*xhat)[base + i];
            ab += g[base + i];
          }
          dg[c] += ag;
          db[c] += ab;
        }
    }
    if (px.requires_grad) {
      auto& dx = px.grad_buffer();
      for (int n = 0; n < s.n; ++n) {
        const std::size_t base = static_cast<std::size_t>(n) * s.item();
        for (std::size_t i = 0; i < plane; ++i) {
          double m1 = 0.0, m2 = 0.0;
          for (int c = 0; c < s.c; ++c) {
            const std::size_t k = base + c * plane + i;
            const double dxh = g[k] * pg.value[c];
            m1 += dxh;
            m2 += dxh * (*xhat)[k];
          }
          m1 /= s.c;
          m2 /= s.c;
          const double is = (*inv_std)[n * plane + i];
          for (int c = 0; c < s.c; ++c) {
            const std::size_t k = base + c * plane + i;
            const double dxh = g[k] * pg.value[c];
            dx[k] += is * (dxh - m1 - (*xhat)[k] * m2);
          }
        }
      }
    }
  });
}

Tensor avg_pool(const Tensor& x, int kh, int kw) {
  const Shape s = x.shape();
  require(kh > 0 && kw > 0 && s.h % kh == 0 && s.w % kw == 0,
          "avg_pool kernel must divide " + to_string(s));
  if (kh == 1 && kw == 1) return x;
  const Shape os{s.n, s.c, s.h / kh, s.w / kw};
  std::vector<double> out(os.numel(), 0.0);
  const double inv = 1.0 / (kh * kw);
  const auto& xv = x.values();
  for (int nc = 0; nc < s.n * s.c; ++nc) {
    const double* src = xv.data() + static_cast<std::size_t>(nc) * s.plane();
    double* dst = out.data() + static_cast<std::size_t>(nc) * os.plane();
    for (int y = 0; y < s.h; ++y)
      for (int xx = 0; xx < s.w; ++xx) dst[(y / kh) * os.w + xx / kw] += src[y * s.w + xx] * inv;
  }
  return make_result(os, std::move(out), {x}, [s, os, kh, kw, inv](detail::Node& self) {
    auto& d = parent(self, 0).grad_buffer();
    for (int nc = 0; nc < s.n * s.c; ++nc) {
      double* dst = d.data() + static_cast<std::size_t>(nc) * s.plane();
      const double* g = self.grad.data() + static_cast<std::size_t>(nc) * os.plane();
      for (int y = 0; y < s.h; ++y)
        for (int xx = 0; xx < s.w; ++xx) dst[y * s.w + xx] += g[(y / kh) * os.w + xx / kw] * inv;
    }
  });
}

Tensor resize_bilinear(const Tensor& x, int h, int w) {
  const Shape s = x.shape();
  require(h > 0 && w > 0, "resize target must be positive");
  if (s.h == h && s.w == w) return x;
  const Shape os{s.n, s.c, h, w};
  auto ty = std::make_shared<Taps>(resize_taps(s.h, h));
  auto tx = std::make_shared<Taps>(resize_taps(s.w, w));
  std::vector<double> out(os.numel());
  const auto& xv = x.values();
  for (int nc = 0; nc < s.n * s.c; ++nc) {
    const double* src = xv.data() + static_cast<std::size_t>(nc) * s.plane();
    double* dst = out.data() + static_cast<std::size_t>(nc) * os.plane();
    for (int y = 0; y < h; ++y) {
      const double* r0 = src + static_cast<std::size_t>(ty->i0[y]) * s.w;
      const double* r1 = src + static_cast<std::size_t>(ty->i1[y]) * s.w;
      const double ly = ty->l[y];
      for (int xx = 0; xx < w; ++xx) {
        const double lx = tx->l[xx];
        const int x0 = tx->i0[xx], x1 = tx->i1[xx];
        const double top = r0[x0] * (1 - lx) + r0[x1] * lx;
        const double bot = r1[x0] * (1 - lx) + r1[x1] * lx;
        dst[y * w + xx] = top * (1 - ly) + bot * ly;
      }
    }
  }
  return make_result(os, std::move(out), {x}, [s, os, ty, tx](detail::Node& self) {
    auto& d = parent(self, 0).grad_buffer();
    for (int nc = 0; nc < s.n * s.c; ++nc) {
      double* dst = d.data() + static_cast<std::size_t>(nc) * s.plane();
      const double* g = self.grad.data() + static_cast<std::size_t>(nc) * os.plane();
      for (int y = 0; y < os.h; ++y) {
        double* r0 = dst + static_cast<std::size_t>(ty->i0[y]) * s.w;
        double* r1 = dst + static_cast<std::size_t>(ty->i1[y]) * s.w;
        const double ly = ty->l[y];
        for (int xx = 0; xx < os.w; ++xx) {
          const double gv = g[y * os.w + xx];
          const double lx = tx->l[xx];
          const int x0 = tx->i0[xx], x1 = tx->i1[xx];
          r0[x0] += gv * (1 - ly) * (1 - lx);
          r0[x1] += gv * (1 - ly) * lx;
          r1[x0] += gv * ly * (1 - lx);
          r1[x1] += gv * ly * lx;
        }
      }
    }
  });
}

Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_a, bool transpose_b) {
  const Shape as = a.shape();
  const Shape bs = b.shape();
  require(as.n == bs.n, "matmul batch mismatch");
  const int ar = as.c, ac = static_cast<int>(as.plane());
  const int br = bs.c, bc = static_cast<int>(bs.plane());
  const int m = transpose_a ? ac : ar;
  const int k1 = transpose_a ? ar : ac;
  const int k2 = transpose_b ? bc : br;
  const int p = transpose_b ? br : bc;
  require(k1 == k2, "matmul inner dimensions differ: " + to_string(as) + " x " + to_string(bs));
  const Shape os{as.n, m, p, 1};
  std::vector<double> out(os.numel());
  for (int n = 0; n < as.n; ++n) {
    ConstMapMat A(a.values().data() + static_cast<std::size_t>(n) * ar * ac, ar, ac);
    ConstMapMat B(b.values().data() + static_cast<std::size_t>(n) * br * bc, br, bc);
    MapMat C(out.data() + static_cast<std::size_t>(n) * m * p, m, p);
    if (!transpose_a && !transpose_b) C.noalias() = A * B;
    else if (transpose_a && !transpose_b) C.noalias() = A.transpose() * B;
    else if (!transpose_a && transpose_b) C.noalias() = A * B.transpose();
    else C.noalias() = A.transpose() * B.transpose();
  }
  return make_result(os, std::move(out), {a, b},
                     [=](detail::Node& self) {
    auto& pa = parent(self, 0);
    auto& pb = parent(self, 1);
    for (int n = 0; n < as.n; ++n) {
      ConstMapMat A(pa.value.data() + static_cast<std::size_t>(n) * ar * ac, ar, ac);
      ConstMapMat B(pb.value.data() + static_cast<std::size_t>(n) * br * bc, br, bc);
      ConstMapMat G(self.grad.data() + static_cast<std::size_t>(n) * m * p, m, p);
      if (pa.requires_grad) {
        MapMat dA(pa.grad_buffer().data() + static_cast<std::size_t>(n) * ar * ac, ar, ac);
        if (!transpose_a && !transpose_b) dA.noalias() += G * B.transpose();
        else if (transpose_a && !transpose_b) dA.noalias() += B * G.transpose();
        else if (!transpose_a && transpose_b) dA.noalias() += G * B;
        else dA.noalias() += B.transpose() * G.transpose();
      }
      if (pb.requires_grad) {
        MapMat dB(pb.grad_buffer().data() + static_cast<std::size_t>(n) * br * bc, br, bc);
        if (!transpose_a && !transpose_b) dB.noalias() += A.transpose() * G;
        else if (transpose_a && !transpose_b) dB.noalias() += A * G;
        else if (!transpose_a && transpose_b) dB.noalias() += G.transpose() * A;
        else dB.noalias() += G.transpose() * A.transpose();
      }
    }
  });
}

Tensor softmax_rows(const Tensor& x) {
  const Shape s = x.shape();
  const std::size_t cols = s.plane();
  const std::size_t rows = static_cast<std::size_t>(s.n) * s.c;
  std::vector<double> out(s.numel());
  const auto& xv = x.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = xv.data() + r * cols;
    double* dst = out.data() + r * cols;
    const double mx = *std::max_element(src, src + cols);
    double sum = 0.0;
    for (std::size_t i = 0; i < cols; ++i) sum += dst[i] = std::exp(src[i] - mx);
    for (std::size_t i = 0; i < cols; ++i) dst[i] /= sum;
  }
  return make_result(s, std::move(out), {x}, [rows, cols](detail::Node& self) {
    auto& d = parent(self, 0).grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.value.data() + r * cols;
      const double* g = self.grad.data() + r * cols;
      double dot = 0.0;
      for (std::size_t i = 0; i < cols; ++i) dot += g[i] * y[i];
      double* di = d.data() + r * cols;
      for (std::size_t i = 0; i < cols; ++i) di[i] += y[i] * (g[i] - dot);
    }
  });
}

Tensor grid_sample(const Tensor& x, const Tensor& grid) {
  const Shape xs = x.shape();
  const Shape gs = grid.shape();
  require(gs.c == 2 && gs.n == xs.n, "grid must be [N,2,H,W] matching the input batch");
  const Shape os{xs.n, xs.c, gs.h, gs.w};
  const std::size_t op = os.plane();
  std::vector<double> out(os.numel(), 0.0);
  const auto& xv = x.values();
  const auto& gv = grid.values();
  const double xmax = xs.w - 1, ymax = xs.h - 1;
  for (int n = 0; n < xs.n; ++n) {
    const double* gx = gv.data() + static_cast<std::size_t>(n) * 2 * op;
    const double* gy = gx + op;
    for (std::size_t i = 0; i < op; ++i) {
      const double fx = gx[i], fy = gy[i];
      if (!(fx >= 0.0 && fx <= xmax && fy >= 0.0 && fy <= ymax)) continue;
      const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
      const double lx = fx - x0, ly = fy - y0;
      const bool hx = x0 + 1 < xs.w, hy = y0 + 1 < xs.h;
      for (int c = 0; c < xs.c; ++c) {
        const double* src = xv.data() + (static_cast<std::size_t>(n) * xs.c + c) * xs.plane();
        const double* r0 = src + static_cast<std::size_t>(y0) * xs.w;
        double top = r0[x0] * (1 - lx);
        if (hx) top += r0[x0 + 1] * lx;
        double v = top * (1 - ly);
        if (hy) {
          const double* r1 = r0 + xs.w;
          double bot = r1[x0] * (1 - lx);
          if (hx) bot += r1[x0 + 1] * lx;
          v += bot * ly;
        }
        out[(static_cast<std::size_t>(n) * xs.c + c) * op + i] = v;
      }
    }
  }
  return make_result(os, std::move(out), {x, grid}, [xs, op, xmax, ymax](detail::Node& self) {
    auto& px = parent(self, 0);
    auto& pg = parent(self, 1);
    double* dx = px.requires_grad ? px.grad_buffer().data() : nullptr;
    double* dg = pg.requires_grad ? pg.grad_buffer().data() : nullptr;
    for (int n = 0; n < xs.n; ++n) {
      const double* gx = pg.value.data() + static_cast<std::size_t>(n) * 2 * op;
      const double* gy = gx + op;
      for (std::size_t i = 0; i < op; ++i) {
        const double fx = gx[i], fy = gy[i];
        if (!(fx >= 0.0 && fx <= xmax && fy >= 0.0 && fy <= ymax)) continue;
        const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
        const double lx = fx - x0, ly = fy - y0;
        const bool hx = x0 + 1 < xs.w, hy = y0 + 1 < xs.h;
        double dfx = 0.0, dfy = 0.0;
        for (int c = 0; c < xs.c; ++c) {
          const std::size_t base = (static_cast<std::size_t>(n) * xs.c + c) * xs.plane();
          const double g = self.grad[(static_cast<std::size_t>(n) * xs.c + c) * op + i];
          if (g == 0.0) continue;
          const std::size_t i00 = base + static_cast<std::size_t>(y0) * xs.w + x0;
          const double v00 = px.value[i00];
          const double v01 = hx ? px.value[i00 + 1] : 0.0;
          const double v10 = hy ? px.value[i00 + xs.w] : 0.0;
          const double v11 = hx && hy ? px.value[i00 + xs.w + 1] : 0.0;
          if (dx) {
            dx[i00] += g * (1 - lx) * (1 - ly);
            if (hx) dx[i00 + 1] += g * lx * (1 - ly);
            if (hy) dx[i00 + xs.w] += g * (1 - lx) * ly;
            if (hx && hy) dx[i00 + xs.w + 1] += g * lx * ly;
          }
          dfx += g * ((1 - ly) * (v01 - v00) + ly * (v11 - v10));
          dfy += g * ((1 - lx) * (v10 - v00) + lx * (v11 - v01));
        }
        if (dg) {
          dg[static_cast<std::size_t>(n) * 2 * op + i] += dfx;
          dg[static_cast<std::size_t>(n) * 2 * op + op + i] += dfy;
        }
      }
    }
  });
}

Tensor grid_valid_mask(const Tensor& grid, int in_h, int in_w) {
  const Shape gs = grid.shape();
  require(gs.c == 2, "grid must have 2 channels");
  const std::size_t op = gs.plane();
  std::vector<double> out(static_cast<std::size_t>(gs.n) * op);
  const auto& gv = grid.values();
  for (int n = 0; n < gs.n; ++n)
    for (std::size_t i = 0; i < op; ++i) {
      const double fx = gv[static_cast<std::size_t>(n) * 2 * op + i];
      const double fy = gv[static_cast<std::size_t>(n) * 2 * op + op + i];
      out[n * op + i] = (fx >= 0.0 && fx <= in_w - 1 && fy >= 0.0 && fy <= in_h - 1) ? 1.0 : 0.0;
    }
  return Tensor::from(Shape{gs.n, 1, gs.h, gs.w}, std::move(out));
}

Tensor homography_grid(const Tensor& h, int out_h, int out_w) {
  const Shape hs = h.shape();
  require(hs.item() == 9, "homography tensor must hold 9 values per sample");
  const Shape os{hs.n, 2, out_h, out_w};
  const std::size_t op = os.plane();
  std::vector<double> out(os.numel());
  const auto& hv = h.values();
  constexpr double kFar = -1e9;  // lands outside every image
  for (int n = 0; n < hs.n; ++n) {
    const double* m = hv.data() + n * 9;
    double* gx = out.data() + static_cast<std::size_t>(n) * 2 * op;
    double* gy = gx + op;
    for (int y = 0; y < out_h; ++y)
      for (int x = 0; x < out_w; ++x) {
        const double u = m[0] * x + m[1] * y + m[2];
        const double v = m[3] * x + m[4] * y + m[5];
        const double w = m[6] * x + m[7] * y + m[8];
        const std::size_t i = static_cast<std::size_t>(y) * out_w + x;
        if (std::abs(w) <= 1e-12) {
          gx[i] = gy[i] = kFar;
        } else {
          gx[i] = u / w;
          gy[i] = v / w;
        }
      }
  }
  return make_result(os, std::move(out), {h}, [hs, op, out_w, out_h](detail::Node& self) {
    auto& ph = parent(self, 0);
    auto& dh = ph.grad_buffer();
    for (int n = 0; n < hs.n; ++n) {
      const double* m = ph.value.data() + n * 9;
      const double* ggx = self.grad.data() + static_cast<std::size_t>(n) * 2 * op;
      const double* ggy = ggx + op;
      double acc[9] = {};
      for (int y = 0; y < out_h; ++y)
        for (int x = 0; x < out_w; ++x) {
          const std::size_t i = static_cast<std::size_t>(y) * out_w + x;
          const double w = m[6] * x + m[7] * y + m[8];
          if (std::abs(w) <= 1e-12) continue;
          const double u = m[0] * x + m[1] * y + m[2];
          const double v = m[3] * x + m[4] * y + m[5];
          const double iw = 1.0 / w;
          const double a = ggx[i] * iw, b = ggy[i] * iw;
          acc[0] += a * x; acc[1] += a * y; acc[2] += a;
          acc[3] += b * x; acc[4] += b * y; acc[5] += b;
          const double t = -(a * u + b * v) * iw;
          acc[6] += t * x; acc[7] += t * y; acc[8] += t;
        }
      for (int k = 0; k < 9; ++k) dh[n * 9 + k] += acc[k];
    }
  });
}

}  // namespace pcnet::nn

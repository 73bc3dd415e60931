#include "pcnet/core/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pcnet/core/errors.hpp"

namespace pcnet {

Image::Image(int channels, int height, int width, double fill)
    : channels_(channels), height_(height), width_(width) {
  if (channels <= 0 || height <= 0 || width <= 0)
    throw ShapeError("image dimensions must be positive");
  data_.assign(static_cast<std::size_t>(channels) * height * width, fill);
}

Image::Image(int channels, int height, int width, std::vector<double> data)
    : channels_(channels), height_(height), width_(width), data_(std::move(data)) {
  if (channels <= 0 || height <= 0 || width <= 0)
    throw ShapeError("image dimensions must be positive");
  if (data_.size() != static_cast<std::size_t>(channels) * height * width)
    throw ShapeError("image buffer size does not match dimensions");
}

std::span<double> Image::plane(int c) {
  const std::size_t n = static_cast<std::size_t>(height_) * width_;
  return {data_.data() + c * n, n};
}

std::span<const double> Image::plane(int c) const {
  const std::size_t n = static_cast<std::size_t>(height_) * width_;
  return {data_.data() + c * n, n};
}

bool Image::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

Image to_grayscale(const Image& img) {
  if (img.channels() == 1) return img;
  if (img.channels() != 3) throw ShapeError("grayscale needs 1 or 3 channels");
  Image out(1, img.height(), img.width());
  auto r = img.plane(0), g = img.plane(1), b = img.plane(2);
  auto o = out.plane(0);
  for (std::size_t i = 0; i < o.size(); ++i)
    o[i] = 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
  return out;
}

Image to_three_channel(const Image& img) {
  if (img.channels() == 3) return img;
  if (img.channels() != 1) throw ShapeError("expected a 1-channel image");
  Image out(3, img.height(), img.width());
  for (int c = 0; c < 3; ++c) std::ranges::copy(img.plane(0), out.plane(c).begin());
  return out;
}

Image resize_bilinear(const Image& img, int height, int width) {
  if (img.height() == height && img.width() == width) return img;
  Image out(img.channels(), height, width);
  const double sy = static_cast<double>(img.height()) / height;
  const double sx = static_cast<double>(img.width()) / width;
  for (int y = 0; y < height; ++y) {
    const double fy = std::max(0.0, (y + 0.5) * sy - 0.5);
    const int y0 = std::min(static_cast<int>(fy), img.height() - 1);
    const int y1 = std::min(y0 + 1, img.height() - 1);
    const double ly = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::max(0.0, (x + 0.5) * sx - 0.5);
      const int x0 = std::min(static_cast<int>(fx), img.width() - 1);
      const int x1 = std::min(x0 + 1, img.width() - 1);
      const double lx = fx - x0;
      for (int c = 0; c < img.channels(); ++c) {
        const double top = img.at(c, y0, x0) * (1 - lx) + img.at(c, y0, x1) * lx;
        const double bot = img.at(c, y1, x0) * (1 - lx) + img.at(c, y1, x1) * lx;
        out.at(c, y, x) = top * (1 - ly) + bot * ly;
      }
    }
  }
  return out;
}

}  // namespace pcnet

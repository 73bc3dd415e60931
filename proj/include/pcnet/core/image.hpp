#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace pcnet {

// Planar image, channels x height x width, values nominally in [0, 1].
class Image {
 public:
  Image() = default;
  Image(int channels, int height, int width, double fill = 0.0);
  Image(int channels, int height, int width, std::vector<double> data);

  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& at(int c, int y, int x) {
    return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
  }
  double at(int c, int y, int x) const {
    return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
  }

  std::span<double> plane(int c);
  std::span<const double> plane(int c) const;

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool all_finite() const;
  bool same_size(const Image& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

// Luma for 3-channel images, identity copy for 1-channel images.
Image to_grayscale(const Image& img);

// Replicates a 1-channel image into 3 channels; 3-channel input is copied.
Image to_three_channel(const Image& img);

// Bilinear resize with half-pixel centers and edge clamping.
Image resize_bilinear(const Image& img, int height, int width);

}  // namespace pcnet

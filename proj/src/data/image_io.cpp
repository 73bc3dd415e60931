#include "pcnet/data/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "pcnet/core/errors.hpp"

namespace pcnet::data {

Image read_image(const std::filesystem::path& path) {
  cv::Mat m;
  try {
    m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  } catch (const cv::Exception& e) {
    throw DecodeError("cannot decode " + path.string() + ": " + e.what());
  }
  if (m.empty()) throw DecodeError("cannot decode " + path.string());
  double denom;
  switch (m.depth()) {
    case CV_8U: denom = 255.0; break;
    case CV_16U: denom = 65535.0; break;
    default: throw DecodeError("unsupported pixel depth in " + path.string());
  }
  const int src_channels = m.channels();
  int channels;
  if (src_channels == 1) channels = 1;
  else if (src_channels == 3 || src_channels == 4) channels = 3;
  else throw DecodeError("unsupported channel count in " + path.string());

  Image img(channels, m.rows, m.cols);
  for (int y = 0; y < m.rows; ++y)
    for (int x = 0; x < m.cols; ++x)
      for (int c = 0; c < channels; ++c) {
        // OpenCV stores BGR(A); map to RGB.
        const int src_c = channels == 3 ? 2 - c : 0;
        double v;
        if (m.depth() == CV_8U) v = m.ptr<std::uint8_t>(y)[x * src_channels + src_c];
        else v = m.ptr<std::uint16_t>(y)[x * src_channels + src_c];
        img.at(c, y, x) = v / denom;
      }
  return img;
}

Image quantize_8bit(const Image& img) {
  Image out = img;
  for (double& v : out.data()) v = std::clamp(std::floor(v * 255.0 + 0.5), 0.0, 255.0) / 255.0;
  return out;
}

void write_png(const std::filesystem::path& path, const Image& img) {
  if (img.channels() != 1 && img.channels() != 3)
    throw IoError("can only write 1- or 3-channel images");
  cv::Mat m(img.height(), img.width(), img.channels() == 1 ? CV_8UC1 : CV_8UC3);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < img.channels(); ++c) {
        const double v = std::clamp(std::floor(img.at(c, y, x) * 255.0 + 0.5), 0.0, 255.0);
        const int dst_c = img.channels() == 3 ? 2 - c : 0;
        m.ptr<std::uint8_t>(y)[x * img.channels() + dst_c] = static_cast<std::uint8_t>(v);
      }
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), m);
  } catch (const cv::Exception& e) {
    throw IoError("cannot write " + path.string() + ": " + e.what());
  }
  if (!ok) throw IoError("cannot write " + path.string());
}

Homography read_homography(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read homography " + path.string());
  Mat3 m;
  for (int k = 0; k < 9; ++k) {
    if (!(in >> m(k / 3, k % 3)))
      throw DataError("homography file " + path.string() + " must hold 9 reals");
  }
  std::string rest;
  if (in >> rest) throw DataError("homography file " + path.string() + " has trailing data");
  try {
    return normalize_homography(m);
  } catch (const DegenerateHomography& e) {
    throw DataError("degenerate homography in " + path.string() + ": " + e.what());
  }
}

void write_homography(const std::filesystem::path& path, const Homography& h) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  const auto v = h.values();
  for (int r = 0; r < 3; ++r) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g\n", v[r * 3], v[r * 3 + 1], v[r * 3 + 2]);
    out << buf;
  }
  if (!out) throw IoError("cannot write " + path.string());
}

}  // namespace pcnet::data

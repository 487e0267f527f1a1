#include "redlesion/image.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "redlesion/error.hpp"

namespace redlesion {

PlanarImage::PlanarImage(int h, int w, int c, float fill)
    : height(h), width(w), channels(c) {
  if (h < 0 || w < 0 || c < 0) throw ShapeError("negative image dimensions");
  data.assign(static_cast<std::size_t>(h) * w * c, fill);
}

BinaryMask::BinaryMask(int h, int w, bool fill) : height(h), width(w) {
  if (h < 0 || w < 0) throw ShapeError("negative mask dimensions");
  bits.assign(static_cast<std::size_t>(h) * w, fill ? 1 : 0);
}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

PlanarImage extract_channel(const PlanarImage& image, int channel) {
  if (channel < 0 || channel >= image.channels) throw ShapeError("channel index out of range");
  PlanarImage out(image.height, image.width, 1);
  auto src = image.plane(channel);
  std::copy(src.begin(), src.end(), out.data.begin());
  return out;
}

PlanarImage scaled(const PlanarImage& image, float factor) {
  PlanarImage out = image;
  for (float& v : out.data) v *= factor;
  return out;
}

PlanarImage apply_mask(const PlanarImage& image, const BinaryMask& mask, float outside) {
  if (!mask.matches(image)) throw ShapeError("mask does not match image dimensions");
  PlanarImage out = image;
  const std::size_t n = image.plane_size();
  for (int c = 0; c < image.channels; ++c) {
    auto p = out.plane(c);
    for (std::size_t i = 0; i < n; ++i)
      if (!mask.bits[i]) p[i] = outside;
  }
  return out;
}

namespace {

template <class Op>
BinaryMask combine(const BinaryMask& a, const BinaryMask& b, Op op) {
  if (!a.same_geometry(b)) throw ShapeError("mask dimensions differ");
  BinaryMask out(a.height, a.width);
  for (std::size_t i = 0; i < a.bits.size(); ++i) out.bits[i] = op(a.bits[i] != 0, b.bits[i] != 0) ? 1 : 0;
  return out;
}

}  // namespace

BinaryMask mask_and(const BinaryMask& a, const BinaryMask& b) {
  return combine(a, b, [](bool x, bool y) { return x && y; });
}

BinaryMask mask_or(const BinaryMask& a, const BinaryMask& b) {
  return combine(a, b, [](bool x, bool y) { return x || y; });
}

BinaryMask mask_not(const BinaryMask& a) {
  BinaryMask out(a.height, a.width);
  for (std::size_t i = 0; i < a.bits.size(); ++i) out.bits[i] = a.bits[i] ? 0 : 1;
  return out;
}

PlanarImage read_image(const std::string& path) {
  cv::Mat m = cv::imread(path, cv::IMREAD_UNCHANGED);
  if (m.empty()) throw IoError("cannot read image: " + path);
  if (m.depth() != CV_8U) {
    cv::Mat tmp;
    m.convertTo(tmp, CV_8U, m.depth() == CV_16U ? 1.0 / 257.0 : 1.0);
    m = tmp;
  }
  if (m.channels() != 1 && m.channels() != 3) m = cv::imread(path, cv::IMREAD_COLOR);
  const int out_ch = m.channels() == 1 ? 1 : 3;
  PlanarImage img(m.rows, m.cols, out_ch);
  for (int y = 0; y < m.rows; ++y) {
    const std::uint8_t* row = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < m.cols; ++x) {
      if (out_ch == 1) {
        img.at(0, y, x) = row[x];
      } else {
        // OpenCV stores BGR; planes are kept in RGB order.
        const std::uint8_t* px = row + 3 * x;
        img.at(0, y, x) = px[2];
        img.at(1, y, x) = px[1];
        img.at(2, y, x) = px[0];
      }
    }
  }
  return img;
}

void write_image(const std::string& path, const PlanarImage& image) {
  if (image.channels != 1 && image.channels != 3) throw ShapeError("only 1- or 3-channel images can be written");
  cv::Mat m(image.height, image.width, image.channels == 1 ? CV_8UC1 : CV_8UC3);
  auto to_byte = [](float v) {
    return static_cast<std::uint8_t>(std::clamp(std::lround(static_cast<double>(v)), 0L, 255L));
  };
  for (int y = 0; y < image.height; ++y) {
    std::uint8_t* row = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < image.width; ++x) {
      if (image.channels == 1) {
        row[x] = to_byte(image.at(0, y, x));
      } else {
        row[3 * x + 0] = to_byte(image.at(2, y, x));
        row[3 * x + 1] = to_byte(image.at(1, y, x));
        row[3 * x + 2] = to_byte(image.at(0, y, x));
      }
    }
  }
  if (!cv::imwrite(path, m)) throw IoError("cannot write image: " + path);
}

BinaryMask read_mask(const std::string& path) {
  cv::Mat m = cv::imread(path, cv::IMREAD_GRAYSCALE);
  if (m.empty()) throw IoError("cannot read mask: " + path);
  BinaryMask mask(m.rows, m.cols);
  for (int y = 0; y < m.rows; ++y) {
    const std::uint8_t* row = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < m.cols; ++x) mask.set(y, x, row[x] > 127);
  }
  return mask;
}

void write_mask(const std::string& path, const BinaryMask& mask) {
  cv::Mat m(mask.height, mask.width, CV_8UC1);
  for (int y = 0; y < mask.height; ++y) {
    std::uint8_t* row = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < mask.width; ++x) row[x] = mask(y, x) ? 255 : 0;
  }
  if (!cv::imwrite(path, m)) throw IoError("cannot write mask: " + path);
}

}  // namespace redlesion

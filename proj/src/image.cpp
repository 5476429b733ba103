#include "hybridgen/image.hpp"

#include "hybridgen/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace hybridgen {

void validate_image(const Image& image, int expected_channels) {
  if (image.height <= 0 || image.width <= 0 || image.channels <= 0) {
    throw ShapeError("image dimensions must be positive, got " + std::to_string(image.height) + "x" +
                     std::to_string(image.width) + "x" + std::to_string(image.channels));
  }
  if (image.channels != expected_channels) {
    throw ShapeError("expected " + std::to_string(expected_channels) + " channels, got " +
                     std::to_string(image.channels));
  }
  if (image.pixels.size() != Eigen::Index(image.height) * image.width * image.channels) {
    throw ShapeError("pixel buffer size does not match image dimensions");
  }
  if (!image.pixels.allFinite()) throw InvalidInputError("image contains non-finite pixel values");
}

namespace {

struct Tap {
  int lo;
  int hi;
  double w_hi;
};

std::vector<Tap> axis_taps(int in, int out) {
  std::vector<Tap> taps(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / out;
  for (int i = 0; i < out; ++i) {
    double s = (i + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(in - 1));
    const int lo = static_cast<int>(std::floor(s));
    const int hi = std::min(lo + 1, in - 1);
    taps[static_cast<std::size_t>(i)] = {lo, hi, s - lo};
  }
  return taps;
}

}  // namespace

Eigen::SparseMatrix<double, Eigen::RowMajor> bilinear_resize_operator(Resolution from, Resolution to, int channels) {
  if (from.height <= 0 || from.width <= 0 || to.height <= 0 || to.width <= 0 || channels <= 0) {
    throw ShapeError("resize dimensions must be positive");
  }
  const auto ty = axis_taps(from.height, to.height);
  const auto tx = axis_taps(from.width, to.width);
  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(static_cast<std::size_t>(to.height) * to.width * channels * 4);
  for (int y = 0; y < to.height; ++y) {
    const Tap& a = ty[static_cast<std::size_t>(y)];
    for (int x = 0; x < to.width; ++x) {
      const Tap& b = tx[static_cast<std::size_t>(x)];
      const int ys[2] = {a.lo, a.hi};
      const double wy[2] = {1.0 - a.w_hi, a.w_hi};
      const int xs[2] = {b.lo, b.hi};
      const double wx[2] = {1.0 - b.w_hi, b.w_hi};
      for (int c = 0; c < channels; ++c) {
        const Eigen::Index row = (Eigen::Index(y) * to.width + x) * channels + c;
        for (int i = 0; i < 2; ++i) {
          for (int j = 0; j < 2; ++j) {
            const double w = wy[i] * wx[j];
            if (w == 0.0) continue;
            entries.emplace_back(row, (Eigen::Index(ys[i]) * from.width + xs[j]) * channels + c, w);
          }
        }
      }
    }
  }
  Eigen::SparseMatrix<double, Eigen::RowMajor> op(Eigen::Index(to.height) * to.width * channels,
                                                  Eigen::Index(from.height) * from.width * channels);
  op.setFromTriplets(entries.begin(), entries.end());  // duplicates at clamped borders are summed
  return op;
}

Image resize_bilinear(const Image& image, Resolution to) {
  if (image.resolution() == to) return image;
  const auto op = bilinear_resize_operator(image.resolution(), to, image.channels);
  return Image(to.height, to.width, image.channels, op * image.pixels);
}

std::pair<double, double> range_map(ValueRange from, ValueRange to) {
  if (!(from.high > from.low) || !(to.high > to.low)) throw InvalidInputError("value range must have high > low");
  const double scale = (to.high - to.low) / (from.high - from.low);
  return {scale, to.low - from.low * scale};
}

}  // namespace hybridgen

#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <utility>

namespace hybridgen {

struct ValueRange {
  double low = -1.0;
  double high = 1.0;
  bool operator==(const ValueRange&) const = default;
};

// Pixel range produced by every generator in the toolkit.
inline constexpr ValueRange kImageRange{-1.0, 1.0};

struct Resolution {
  int height = 0;
  int width = 0;
  bool operator==(const Resolution&) const = default;
};

/// Dense H×W×C image. Pixels are stored interleaved, row-major
/// (index = (y * width + x) * channels + c).
template <typename Scalar>
struct ImageT {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  int height = 0;
  int width = 0;
  int channels = 0;
  Vector pixels;

  ImageT() = default;
  ImageT(int h, int w, int c) : height(h), width(w), channels(c), pixels(Vector::Zero(Eigen::Index(h) * w * c)) {}
  ImageT(int h, int w, int c, Vector values) : height(h), width(w), channels(c), pixels(std::move(values)) {}

  Eigen::Index size() const { return pixels.size(); }
  Scalar& at(int y, int x, int c) { return pixels[(Eigen::Index(y) * width + x) * channels + c]; }
  Scalar at(int y, int x, int c) const { return pixels[(Eigen::Index(y) * width + x) * channels + c]; }
  Resolution resolution() const { return {height, width}; }
};

using Image = ImageT<double>;

/// Throws ShapeError when the declared dimensions do not match the pixel buffer
/// or are non-positive; InvalidInputError on non-finite pixels.
void validate_image(const Image& image, int expected_channels);

/// Bilinear resampling operator (half-pixel centers, clamped borders) mapping a
/// flattened from-image to a flattened to-image with the same channel count.
Eigen::SparseMatrix<double, Eigen::RowMajor> bilinear_resize_operator(Resolution from, Resolution to, int channels);

Image resize_bilinear(const Image& image, Resolution to);

/// Affine map taking `from` onto `to`; returns (scale, offset).
std::pair<double, double> range_map(ValueRange from, ValueRange to);

}  // namespace hybridgen

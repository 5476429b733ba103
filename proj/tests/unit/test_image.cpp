#include "hybridgen/errors.hpp"
#include "hybridgen/image.hpp"
#include "hybridgen/image_io.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <limits>

namespace hybridgen {
namespace {

using testing::TempDir;

TEST(Image, ValidateRejectsBadShapesAndValues) {
  Image img(2, 2, 3);
  EXPECT_NO_THROW(validate_image(img, 3));
  EXPECT_THROW(validate_image(img, 1), ShapeError);
  img.pixels.resize(5);
  EXPECT_THROW(validate_image(img, 3), ShapeError);
  Image nan(2, 2, 3);
  nan.pixels[4] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(validate_image(nan, 3), InvalidInputError);
}

TEST(Image, ResizeToSameResolutionIsIdentity) {
  std::mt19937_64 rng(1);
  const Image img = testing::random_image(rng, 5, 7, 3);
  EXPECT_EQ(resize_bilinear(img, {5, 7}).pixels, img.pixels);
}

TEST(Image, ResizePreservesConstants) {
  Image img(9, 13, 2);
  img.pixels.setConstant(0.3);
  const Image out = resize_bilinear(img, {4, 6});
  EXPECT_EQ(out.height, 4);
  EXPECT_EQ(out.width, 6);
  for (Eigen::Index i = 0; i < out.size(); ++i) EXPECT_NEAR(out.pixels[i], 0.3, 1e-12);
}

TEST(Image, DownsampleByTwoAveragesBlocks) {
  // Half-pixel centres: each output pixel sits between four inputs.
  Image img(2, 2, 1);
  img.pixels << 0.0, 1.0, 2.0, 3.0;
  const Image out = resize_bilinear(img, {1, 1});
  EXPECT_NEAR(out.pixels[0], 1.5, 1e-12);
}

TEST(Image, RangeMap) {
  const auto [scale, offset] = range_map({-1, 1}, {0, 1});
  EXPECT_DOUBLE_EQ(scale, 0.5);
  EXPECT_DOUBLE_EQ(offset, 0.5);
  const auto [s2, o2] = range_map(kImageRange, kImageRange);
  EXPECT_EQ(s2, 1.0);
  EXPECT_EQ(o2, 0.0);
}

TEST(ImageIo, PpmRoundTripIsExactOn8BitLevels) {
  TempDir dir;
  Image img(3, 4, 3);
  for (Eigen::Index i = 0; i < img.size(); ++i) img.pixels[i] = (static_cast<double>((i * 37) % 256) / 255.0) * 2.0 - 1.0;
  write_image(dir / "a.ppm", img);
  const Image back = read_image(dir / "a.ppm");
  ASSERT_EQ(back.height, 3);
  ASSERT_EQ(back.width, 4);
  ASSERT_EQ(back.channels, 3);
  EXPECT_LT((back.pixels - img.pixels).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ImageIo, PgmIsExpandedToThreeChannels) {
  TempDir dir;
  std::string pgm = "P5\n# comment\n2 1\n255\n";
  pgm += static_cast<char>(0);
  pgm += static_cast<char>(255);
  testing::spit(dir / "g.pgm", pgm);
  const Image img = read_image(dir / "g.pgm");
  ASSERT_EQ(img.channels, 3);
  EXPECT_DOUBLE_EQ(img.at(0, 0, 2), -1.0);
  EXPECT_DOUBLE_EQ(img.at(0, 1, 0), 1.0);
}

TEST(ImageIo, RejectsMissingAndMalformedFiles) {
  TempDir dir;
  EXPECT_THROW(read_image(dir / "missing.ppm"), IoError);
  testing::spit(dir / "bad.ppm", std::string("P3\n1 1\n255\n0 0 0\n"));
  EXPECT_THROW(read_image(dir / "bad.ppm"), IoError);
  testing::spit(dir / "short.ppm", std::string("P6\n2 2\n255\nabc"));
  EXPECT_THROW(read_image(dir / "short.ppm"), IoError);
}

TEST(ImageIo, ConcatHorizontal) {
  Image a(2, 1, 3);
  a.pixels.setConstant(-1.0);
  Image b(2, 2, 3);
  b.pixels.setConstant(1.0);
  const std::vector<Image> parts{a, b};
  const Image out = concat_horizontal(parts);
  EXPECT_EQ(out.width, 3);
  EXPECT_EQ(out.at(1, 0, 1), -1.0);
  EXPECT_EQ(out.at(1, 2, 1), 1.0);
  const std::vector<Image> mismatched{a, Image(3, 1, 3)};
  EXPECT_THROW(concat_horizontal(mismatched), ShapeError);
}

}  // namespace
}  // namespace hybridgen

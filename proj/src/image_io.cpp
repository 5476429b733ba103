#include "hybridgen/image_io.hpp"

#include "hybridgen/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

namespace hybridgen {

namespace {

// Reads the next whitespace-delimited header token, skipping '#' comments.
std::string next_token(const std::vector<unsigned char>& data, std::size_t& pos) {
  while (pos < data.size()) {
    if (data[pos] == '#') {
      while (pos < data.size() && data[pos] != '\n') ++pos;
    } else if (std::isspace(data[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  std::string token;
  while (pos < data.size() && !std::isspace(data[pos]) && data[pos] != '#') token.push_back(static_cast<char>(data[pos++]));
  return token;
}

int parse_header_int(const std::string& token, const std::filesystem::path& path) {
  if (token.empty() || !std::all_of(token.begin(), token.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
    throw IoError("malformed image header in " + path.string());
  }
  return std::stoi(token);
}

}  // namespace

Image read_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path.string());
  const std::vector<unsigned char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  std::size_t pos = 0;
  const std::string magic = next_token(data, pos);
  if (magic != "P6" && magic != "P5") throw IoError("unsupported image format in " + path.string() + " (expected P6 or P5)");
  const int width = parse_header_int(next_token(data, pos), path);
  const int height = parse_header_int(next_token(data, pos), path);
  const int maxval = parse_header_int(next_token(data, pos), path);
  if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 255) throw IoError("unsupported image header in " + path.string());
  ++pos;  // single whitespace byte before the raster

  const int file_channels = magic == "P6" ? 3 : 1;
  const std::size_t raster = static_cast<std::size_t>(width) * height * file_channels;
  if (data.size() < pos + raster) throw IoError("truncated image data in " + path.string());

  Image image(height, width, 3);
  const double scale = (kImageRange.high - kImageRange.low) / maxval;
  for (std::size_t p = 0; p < static_cast<std::size_t>(width) * height; ++p) {
    for (int c = 0; c < 3; ++c) {
      const unsigned char v = data[pos + p * file_channels + (file_channels == 3 ? c : 0)];
      image.pixels[static_cast<Eigen::Index>(p * 3 + c)] = kImageRange.low + scale * v;
    }
  }
  return image;
}

void write_image(const std::filesystem::path& path, const Image& image) {
  validate_image(image, 3);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write image " + path.string());
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  std::vector<char> raster(static_cast<std::size_t>(image.pixels.size()));
  for (Eigen::Index i = 0; i < image.pixels.size(); ++i) {
    const double unit = (std::clamp(image.pixels[i], kImageRange.low, kImageRange.high) - kImageRange.low) /
                        (kImageRange.high - kImageRange.low);
    raster[static_cast<std::size_t>(i)] = static_cast<char>(static_cast<unsigned char>(std::lround(unit * 255.0)));
  }
  out.write(raster.data(), static_cast<std::streamsize>(raster.size()));
  if (!out) throw IoError("failed writing image " + path.string());
}

Image concat_horizontal(std::span<const Image> images) {
  if (images.empty()) throw InvalidInputError("nothing to concatenate");
  const int height = images.front().height;
  const int channels = images.front().channels;
  int width = 0;
  for (const Image& im : images) {
    if (im.height != height || im.channels != channels) throw ShapeError("concatenated images must share height and channels");
    width += im.width;
  }
  Image out(height, width, channels);
  int x0 = 0;
  for (const Image& im : images) {
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < im.width; ++x) {
        for (int c = 0; c < channels; ++c) out.at(y, x0 + x, c) = im.at(y, x, c);
      }
    }
    x0 += im.width;
  }
  return out;
}

}  // namespace hybridgen

#pragma once

#include "hybridgen/image.hpp"

#include <filesystem>
#include <span>

namespace hybridgen {

// Binary PPM (P6, maxval ≤ 255) and PGM (P5) reference images. Pixels are
// mapped linearly from [0, maxval] into kImageRange; PGM is expanded to three
// channels.
Image read_image(const std::filesystem::path& path);

// Writes a P6 file; pixels are clamped to kImageRange and rounded to 8 bits.
void write_image(const std::filesystem::path& path, const Image& image);

// Places images left to right. All inputs must share height and channels.
Image concat_horizontal(std::span<const Image> images);

}  // namespace hybridgen

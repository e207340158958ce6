#pragma once

#include <cstdint>
#include <vector>

#include "lma/bytes.hpp"

namespace lma {

inline constexpr std::uint32_t kRasterWidth = 256;
inline constexpr std::uint32_t kDefaultSide = 128;

/// Square grayscale image, row-major, intensities in [0, 1].
struct MemoryImage {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<float> pixels;

  float at(std::uint32_t y, std::uint32_t x) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

/// Lays `memory` out in rows of 256 bytes (zero padded, at least one row),
/// then nearest-neighbour resamples to side x side.
MemoryImage to_image(ByteView memory, std::uint32_t side = kDefaultSide);

/// Binary PGM (P5, maxval 255).
Bytes to_pgm(const MemoryImage& img);

}  // namespace lma

#include "lma/image.hpp"

#include <cmath>
#include <string>

#include "lma/error.hpp"

namespace lma {

MemoryImage to_image(ByteView memory, std::uint32_t side) {
  if (side == 0) throw Error(Errc::InvalidArgument, "image side must be positive");
  const std::uint64_t rows = std::max<std::uint64_t>(1, (memory.size() + kRasterWidth - 1) / kRasterWidth);
  MemoryImage img;
  img.width = img.height = side;
  img.pixels.resize(static_cast<std::size_t>(side) * side);
  std::vector<std::uint32_t> col(side);
  for (std::uint32_t x = 0; x < side; ++x) col[x] = static_cast<std::uint32_t>(std::uint64_t{x} * kRasterWidth / side);
  for (std::uint32_t y = 0; y < side; ++y) {
    const std::uint64_t row_base = (std::uint64_t{y} * rows / side) * kRasterWidth;
    float* out = img.pixels.data() + static_cast<std::size_t>(y) * side;
    for (std::uint32_t x = 0; x < side; ++x) {
      const std::uint64_t i = row_base + col[x];
      out[x] = i < memory.size() ? static_cast<float>(memory[i]) / 255.0f : 0.0f;
    }
  }
  return img;
}

Bytes to_pgm(const MemoryImage& img) {
  std::string header = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  Bytes out(header.begin(), header.end());
  out.reserve(out.size() + img.pixels.size());
  for (float p : img.pixels) out.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(p, 0.0f, 1.0f) * 255.0f)));
  return out;
}

}  // namespace lma

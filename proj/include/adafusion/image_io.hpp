#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace adafusion {

/// Interleaved 8-bit RGB image, row-major.
struct ImageU8 {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;  // size = height * width * 3

  std::uint8_t& at(int row, int col, int channel) {
    return pixels[static_cast<std::size_t>((row * width + col) * 3 + channel)];
  }
  std::uint8_t at(int row, int col, int channel) const {
    return pixels[static_cast<std::size_t>((row * width + col) * 3 + channel)];
  }

  static ImageU8 filled(int height, int width, std::uint8_t value) {
    return ImageU8{height, width,
                   std::vector<std::uint8_t>(static_cast<std::size_t>(height) * width * 3, value)};
  }
};

/// Reads a PNG file as 8-bit RGB (gray and paletted inputs are expanded,
/// alpha is stripped).
ImageU8 readPng(const std::filesystem::path& path);

void writePng(const std::filesystem::path& path, const ImageU8& image);

}  // namespace adafusion

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

namespace htdn {

// 8-bit RGB raster, pixels interleaved row by row (HWC).
struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const {
    return pixels[(y * width + x) * 3 + c];
  }
  bool operator==(const RgbImage&) const = default;
};

// Binary Portable Pixmap (P6, maxval 255). `name` only labels error messages.
std::vector<std::uint8_t> encode_ppm(const RgbImage& image);
RgbImage decode_ppm(std::span<const std::uint8_t> bytes, std::string_view name);
RgbImage load_ppm(const std::filesystem::path& path);
void save_ppm(const std::filesystem::path& path, const RgbImage& image);

// Bilinear resampling to size x size with half-pixel centres, returned as
// planar 3 x size x size values scaled to [0, 1].
std::vector<float> resize_bilinear(const RgbImage& image, std::size_t size);

}  // namespace htdn

#include "htdn/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include "htdn/binary_io.hpp"
#include "htdn/errors.hpp"

namespace htdn {

std::vector<std::uint8_t> encode_ppm(const RgbImage& image) {
  if (image.width == 0 || image.height == 0 || image.pixels.size() != image.width * image.height * 3) {
    throw ContractError("encode_ppm: inconsistent image buffer");
  }
  const std::string header =
      "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
  return out;
}

namespace {

class HeaderParser {
 public:
  HeaderParser(std::span<const std::uint8_t> bytes, std::string_view name) : bytes_(bytes), name_(name) {}

  std::size_t number() {
    skip_space_and_comments();
    std::size_t value = 0, digits = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_++] - '0');
      if (++digits > 9) fail("header number too long");
    }
    if (digits == 0) fail("expected a number in the header");
    return value;
  }

  void magic() {
    if (bytes_.size() < 2 || bytes_[0] != 'P' || bytes_[1] != '6') fail("not a binary P6 pixmap");
    pos_ = 2;
  }

  // Exactly one whitespace byte separates maxval from the raster.
  std::size_t raster_start() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) fail("missing separator before raster");
    return pos_ + 1;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw DataError("image " + std::string(name_) + ": " + what);
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::string_view name_;
  std::size_t pos_ = 0;
};

}  // namespace

RgbImage decode_ppm(std::span<const std::uint8_t> bytes, std::string_view name) {
  HeaderParser parser(bytes, name);
  parser.magic();
  RgbImage image;
  image.width = parser.number();
  image.height = parser.number();
  const std::size_t maxval = parser.number();
  if (image.width == 0 || image.height == 0) parser.fail("zero width or height");
  if (maxval != 255) parser.fail("only maxval 255 is supported, got " + std::to_string(maxval));
  const std::size_t start = parser.raster_start();
  const std::size_t expected = image.width * image.height * 3;
  if (bytes.size() - start < expected) parser.fail("truncated raster");
  if (bytes.size() - start > expected) parser.fail("trailing bytes after raster");
  image.pixels.assign(bytes.begin() + start, bytes.end());
  return image;
}

RgbImage load_ppm(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return decode_ppm(bytes, path.string());
}

void save_ppm(const std::filesystem::path& path, const RgbImage& image) {
  write_file_atomic(path, encode_ppm(image));
}

std::vector<float> resize_bilinear(const RgbImage& image, std::size_t size) {
  if (size == 0) throw ContractError("resize_bilinear: target size must be positive");
  if (image.width == 0 || image.height == 0) throw ContractError("resize_bilinear: empty image");
  std::vector<float> out(3 * size * size);
  const double sy = static_cast<double>(image.height) / static_cast<double>(size);
  const double sx = static_cast<double>(image.width) / static_cast<double>(size);
  for (std::size_t oy = 0; oy < size; ++oy) {
    const double fy = std::clamp((oy + 0.5) * sy - 0.5, 0.0, static_cast<double>(image.height - 1));
    const std::size_t y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, image.height - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t ox = 0; ox < size; ++ox) {
      const double fx = std::clamp((ox + 0.5) * sx - 0.5, 0.0, static_cast<double>(image.width - 1));
      const std::size_t x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, image.width - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < 3; ++c) {
        const double top = image.at(y0, x0, c) * (1.0 - wx) + image.at(y0, x1, c) * wx;
        const double bottom = image.at(y1, x0, c) * (1.0 - wx) + image.at(y1, x1, c) * wx;
        out[(c * size + oy) * size + ox] = static_cast<float>((top * (1.0 - wy) + bottom * wy) / 255.0);
      }
    }
  }
  return out;
}

}  // namespace htdn

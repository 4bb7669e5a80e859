#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace veritas {

using Rgb = std::array<std::uint8_t, 3>;

/// Interleaved 8-bit RGB frame buffer, row-major.
class Image {
 public:
  Image() = default;
  Image(int width, int height, Rgb fill = {0, 0, 0});

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  bool empty() const noexcept { return pixels_.empty(); }

  Rgb at(int x, int y) const;
  void set(int x, int y, Rgb c);

  const std::vector<std::uint8_t>& bytes() const noexcept { return pixels_; }
  std::vector<std::uint8_t>& bytes() noexcept { return pixels_; }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

/// Lossless PNG round trip. Both throw veritas::Error on I/O failure.
void write_png(const std::filesystem::path& path, const Image& image);
Image read_png(const std::filesystem::path& path);

}  // namespace veritas

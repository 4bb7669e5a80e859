#include "veritas/image.hpp"

#include <png.h>

#include <cstring>

#include "veritas/core.hpp"

namespace veritas {

Image::Image(int width, int height, Rgb fill) : width_(width), height_(height) {
  if (width <= 0 || height <= 0) throw ConfigError("image dimensions must be positive");
  pixels_.resize(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3);
  for (std::size_t i = 0; i < pixels_.size(); i += 3) {
    pixels_[i] = fill[0];
    pixels_[i + 1] = fill[1];
    pixels_[i + 2] = fill[2];
  }
}

Rgb Image::at(int x, int y) const {
  const auto i = (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
                  static_cast<std::size_t>(x)) * 3;
  return {pixels_[i], pixels_[i + 1], pixels_[i + 2]};
}

void Image::set(int x, int y, Rgb c) {
  const auto i = (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
                  static_cast<std::size_t>(x)) * 3;
  pixels_[i] = c[0];
  pixels_[i + 1] = c[1];
  pixels_[i + 2] = c[2];
}

void write_png(const std::filesystem::path& path, const Image& image) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width());
  png.height = static_cast<png_uint_32>(image.height());
  png.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.c_str(), 0, image.bytes().data(), 0, nullptr)) {
    std::string msg = png.message;
    png_image_free(&png);
    throw Error("cannot write " + path.string() + ": " + msg);
  }
}

Image read_png(const std::filesystem::path& path) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str()))
    throw Error("cannot read " + path.string() + ": " + png.message);
  png.format = PNG_FORMAT_RGB;
  Image image(static_cast<int>(png.width), static_cast<int>(png.height));
  if (!png_image_finish_read(&png, nullptr, image.bytes().data(), 0, nullptr)) {
    std::string msg = png.message;
    png_image_free(&png);
    throw Error("cannot decode " + path.string() + ": " + msg);
  }
  return image;
}

}  // namespace veritas

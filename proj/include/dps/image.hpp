#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <vector>

namespace dps {

using Rgb = std::array<float, 3>;

/// Interleaved RGB image, row-major, components in [0,1].
class Image {
 public:
  Image() = default;
  Image(std::size_t height, std::size_t width, Rgb fill = {0.0f, 0.0f, 0.0f});

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  bool empty() const noexcept { return pixels_.empty(); }

  float& at(std::size_t y, std::size_t x, std::size_t c) { return pixels_[(y * width_ + x) * 3 + c]; }
  float at(std::size_t y, std::size_t x, std::size_t c) const {
    return pixels_[(y * width_ + x) * 3 + c];
  }

  Rgb pixel(std::size_t y, std::size_t x) const {
    const float* p = &pixels_[(y * width_ + x) * 3];
    return {p[0], p[1], p[2]};
  }
  void set_pixel(std::size_t y, std::size_t x, const Rgb& rgb) {
    float* p = &pixels_[(y * width_ + x) * 3];
    p[0] = rgb[0];
    p[1] = rgb[1];
    p[2] = rgb[2];
  }

  const std::vector<float>& pixels() const noexcept { return pixels_; }
  std::vector<float>& pixels() noexcept { return pixels_; }

  bool same_size(const Image& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_;
  }

  // Clamps every component into [0,1]; NaN becomes 0.
  void clamp();

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<float> pixels_;
};

// 8-bit RGB PNG I/O. Alpha is dropped and grayscale is expanded on read.
Image read_png(const std::filesystem::path& path);
void write_png(const Image& image, const std::filesystem::path& path);
void write_gray_png(const std::vector<float>& values, std::size_t height, std::size_t width,
                    const std::filesystem::path& path);

}  // namespace dps

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace slotlab::envs {

// 8-bit image, channels interleaved (row, col, channel).
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(std::size_t h, std::size_t w, std::size_t c) : height(h), width(w), channels(c), pixels(h * w * c, 0) {}

  std::uint8_t& at(std::size_t row, std::size_t col, std::size_t ch) {
    return pixels[(row * width + col) * channels + ch];
  }
  std::uint8_t at(std::size_t row, std::size_t col, std::size_t ch) const {
    return pixels[(row * width + col) * channels + ch];
  }

  bool operator==(const Image&) const = default;
};

}  // namespace slotlab::envs

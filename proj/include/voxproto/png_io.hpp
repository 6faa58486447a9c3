#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace voxproto {

struct Image8 {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // H*W*3, row-major RGB
};

struct Image16 {
  int width = 0;
  int height = 0;
  std::vector<std::uint16_t> pixels;  // H*W, row-major grayscale
};

void write_png_rgb8(const std::string& path, const Image8& image);
Image8 read_png_rgb8(const std::string& path);

// 16-bit single-channel PNG, used for millimeter depth maps.
void write_png_gray16(const std::string& path, const Image16& image);
Image16 read_png_gray16(const std::string& path);

}  // namespace voxproto

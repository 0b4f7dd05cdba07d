#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "arrange/grid.hpp"

namespace arrange {

/// 8- or 16-bit grayscale raster as read from a binary PGM.
struct GrayImage {
  int height = 0;
  int width = 0;
  int maxval = 255;
  std::vector<std::uint16_t> values;  // row-major

  std::uint16_t at(int row, int col) const { return values[static_cast<std::size_t>(row) * width + col]; }
};

/// Binary PPM (P6) of a 3-channel grid; values are rounded and clamped to [0, 255].
std::string encode_ppm(const Grid2D& rgb);
/// Binary PGM (P5); maxval 255 writes one byte per pixel, larger values two (big-endian).
std::string encode_pgm(const GrayImage& image);
GrayImage decode_pgm(const std::string& bytes);
Grid2D decode_ppm(const std::string& bytes);

/// Single-channel score map in [-1, 1] as a 16-bit PGM, value = round((s + 1) / 2 * 65535).
GrayImage score_map_to_gray16(const Grid2D& scores);
/// Min-max scaled 8-bit view of an arbitrary single-channel map (constant maps become 0).
GrayImage to_gray8(const Grid2D& scores);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);

}  // namespace arrange

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "arrange/grid.hpp"
#include "arrange/image_io.hpp"
#include "arrange/scene.hpp"

namespace arrange {

/// Inclusive bounding box.
struct BoundingBox {
  int row0 = 0;
  int col0 = 0;
  int row1 = -1;
  int col1 = -1;
  int height() const { return row1 - row0 + 1; }
  int width() const { return col1 - col0 + 1; }
  bool operator==(const BoundingBox&) const = default;
};

struct InstanceMask {
  int id = 0;
  int height = 0;  // raster size of the mask (the observation size)
  int width = 0;
  std::vector<std::uint8_t> mask;  // row-major, 0 or 1
  BoundingBox bbox;
  int area = 0;

  bool contains(int row, int col) const {
    return row >= 0 && col >= 0 && row < height && col < width &&
           mask[static_cast<std::size_t>(row) * width + col] != 0;
  }
  bool contains(Pixel p) const { return contains(p.u, p.v); }
  bool operator==(const InstanceMask&) const = default;
};

struct SegmentationResult {
  int height = 0;
  int width = 0;
  std::vector<InstanceMask> instances;
  bool operator==(const SegmentationResult&) const = default;
};

inline constexpr int kDefaultMinArea = 4;
inline constexpr int kDefaultCropPad = 1;

/// Connected components (4-connectivity) of non-background pixels, where two
/// neighbours join only if their colors are exactly equal. Components smaller
/// than min_area are dropped. Instances are ordered by the top-left corner of
/// their bounding box (row-major; ties by first pixel) and numbered from 1.
SegmentationResult segment(const Grid2D& obs, Rgb background, int min_area = kDefaultMinArea);

/// Square crop of side max(bbox h, bbox w) + 2 pad centered on the bbox center,
/// zero outside the image and outside the instance mask.
Grid2D crop(const Grid2D& obs, const InstanceMask& inst, int pad = kDefaultCropPad);

/// Label map (0 = background, k = instance k); ids above 255 cannot be stored.
GrayImage export_masks(const SegmentationResult& seg);
/// Rebuilds instances from a P5 label map (must be height x width). Label values
/// only group pixels; ids are re-densified in the same order segment() uses.
SegmentationResult import_masks(const std::string& pgm_bytes, int height, int width);
/// Instance assembly from a dense label raster, shared by segment and import.
SegmentationResult from_labels(const std::vector<int>& labels, int height, int width);

}  // namespace arrange

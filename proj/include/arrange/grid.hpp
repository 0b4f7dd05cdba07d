#pragma once

#include <span>
#include <vector>

#include "arrange/error.hpp"

namespace arrange {

/// Pixel coordinate: u is the row, v the column.
struct Pixel {
  int u = 0;
  int v = 0;
  bool operator==(const Pixel&) const = default;
};

/// H x W x C raster of doubles stored row-major as (row, col, channel).
class Grid2D {
 public:
  Grid2D() = default;
  Grid2D(int height, int width, int channels, double fill = 0.0);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  bool in_bounds(int row, int col) const {
    return row >= 0 && row < height_ && col >= 0 && col < width_;
  }

  double& at(int row, int col, int ch = 0) {
    return data_[(static_cast<std::size_t>(row) * width_ + col) * channels_ + ch];
  }
  double at(int row, int col, int ch = 0) const {
    return data_[(static_cast<std::size_t>(row) * width_ + col) * channels_ + ch];
  }

  const double* ptr(int row, int col) const {
    return data_.data() + (static_cast<std::size_t>(row) * width_ + col) * channels_;
  }
  double* ptr(int row, int col) {
    return data_.data() + (static_cast<std::size_t>(row) * width_ + col) * channels_;
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  /// Single-channel copy of one channel.
  Grid2D channel(int ch) const;

  bool operator==(const Grid2D&) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

/// Channel-wise concatenation; both grids must share height and width.
Grid2D concat_channels(const Grid2D& a, const Grid2D& b);

/// Probability mass over the pixels of an H x W raster.
struct Distribution2D {
  int height = 0;
  int width = 0;
  std::vector<double> probs;

  double at(int row, int col) const { return probs[static_cast<std::size_t>(row) * width + col]; }
};

/// One of the n = 36 discrete placement rotations, tau_j = 10 j degrees.
class RotationAngle {
 public:
  static constexpr int kCount = 36;
  static constexpr int kStepDegrees = 10;

  explicit RotationAngle(int index);

  int index() const { return index_; }
  int degrees() const { return kStepDegrees * index_; }

  /// Nearest 10-degree bin of an arbitrary angle, halves rounded up, 0 mapped to 36.
  static RotationAngle nearest(double degrees);

  bool operator==(const RotationAngle&) const = default;

 private:
  int index_;
};

/// Source offset sampled by the target offset (dr, dc) when rotating
/// counter-clockwise by `degrees` about an exact pixel center. Whole quarter
/// turns are applied as exact index permutations; only the residual angle goes
/// through trigonometry, so rotate(x, a + 90) == quarter_turn(rotate(x, a)).
struct Offset {
  int dr = 0;
  int dc = 0;
  bool operator==(const Offset&) const = default;
};
Offset rotation_source_offset(int dr, int dc, int degrees);

/// Counter-clockwise rotation of a square crop about its center;
/// nearest-neighbour inverse mapping, zero fill.
Grid2D rotate_crop(const Grid2D& crop, RotationAngle angle);
Grid2D rotate_crop_degrees(const Grid2D& crop, int degrees);

/// Exact counter-clockwise quarter turns of a whole raster (any shape).
Grid2D rotate_quarter_turns(const Grid2D& grid, int turns);
/// Where pixel p of an h x w raster lands after `turns` counter-clockwise quarter turns.
Pixel rotate_pixel_quarter_turns(Pixel p, int height, int width, int turns);

/// Same-size zero-padded cross-correlation summed over channels. Kernel spatial
/// dims must be odd; per-pixel summation order is kernel row, column, channel.
Grid2D cross_correlate(const Grid2D& feature, const Grid2D& kernel);

/// Adjoint of cross_correlate: accumulates d(score)/d(feature) into grad_feature
/// and d(score)/d(kernel) into grad_kernel.
void cross_correlate_backward(const Grid2D& feature, const Grid2D& kernel, const Grid2D& grad_score,
                              Grid2D& grad_feature, Grid2D& grad_kernel);

Distribution2D softmax2d(const Grid2D& score, double temperature);

/// Maximum of a single-channel grid, ties to the smallest row-major index.
Pixel argmax_pixel(const Grid2D& score);

inline constexpr double kProbabilityFloor = 1e-12;
double cross_entropy(const Distribution2D& pred, Pixel target);

/// Convolution layer; kernel laid out (ky, kx, cin, cout), same padding.
struct ConvLayer {
  int kernel_h = 3;
  int kernel_w = 3;
  int in_channels = 1;
  int out_channels = 1;
  int stride = 1;
  std::vector<double> kernel;
  std::vector<double> bias;

  ConvLayer() = default;
  ConvLayer(int kh, int kw, int cin, int cout, int stride = 1);

  std::size_t index(int ky, int kx, int ci, int co) const {
    return ((static_cast<std::size_t>(ky) * kernel_w + kx) * in_channels + ci) * out_channels + co;
  }
  double& weight(int ky, int kx, int ci, int co) { return kernel[index(ky, kx, ci, co)]; }
  double weight(int ky, int kx, int ci, int co) const { return kernel[index(ky, kx, ci, co)]; }

  /// Throws ShapeError/ParameterError when the layer is malformed.
  void validate() const;

  bool operator==(const ConvLayer&) const = default;
};

struct ConvGrads {
  std::vector<double> kernel;
  std::vector<double> bias;
  Grid2D input;
};

/// Same-padding convolution plus bias; output is ceil(H/stride) x ceil(W/stride).
Grid2D conv_forward(const ConvLayer& layer, const Grid2D& input);
ConvGrads conv_backward(const ConvLayer& layer, const Grid2D& input, const Grid2D& grad_out);

}  // namespace arrange

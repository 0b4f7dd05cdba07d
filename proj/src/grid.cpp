#include "arrange/grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace arrange {

Grid2D::Grid2D(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels) {
  if (height < 0 || width < 0 || channels < 0) {
    throw ShapeError("Grid2D: negative dimension");
  }
  data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

Grid2D Grid2D::channel(int ch) const {
  if (ch < 0 || ch >= channels_) throw ShapeError("Grid2D::channel: index out of range");
  Grid2D out(height_, width_, 1);
  for (int r = 0; r < height_; ++r)
    for (int c = 0; c < width_; ++c) out.at(r, c) = at(r, c, ch);
  return out;
}

Grid2D concat_channels(const Grid2D& a, const Grid2D& b) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw ShapeError("concat_channels: spatial size mismatch");
  }
  Grid2D out(a.height(), a.width(), a.channels() + b.channels());
  for (int r = 0; r < a.height(); ++r) {
    for (int c = 0; c < a.width(); ++c) {
      for (int k = 0; k < a.channels(); ++k) out.at(r, c, k) = a.at(r, c, k);
      for (int k = 0; k < b.channels(); ++k) out.at(r, c, a.channels() + k) = b.at(r, c, k);
    }
  }
  return out;
}

RotationAngle::RotationAngle(int index) : index_(index) {
  if (index < 1 || index > kCount) {
    throw ParameterError("RotationAngle: index " + std::to_string(index) + " outside [1, 36]");
  }
}

RotationAngle RotationAngle::nearest(double degrees) {
  double wrapped = std::fmod(degrees, 360.0);
  if (wrapped < 0) wrapped += 360.0;
  int bin = static_cast<int>(std::floor(wrapped / kStepDegrees + 0.5)) % kCount;
  return RotationAngle(bin == 0 ? kCount : bin);
}

namespace {

// Inverse mapping in doubled coordinates so that even-sized crops (half-pixel
// centers) share the same code path. Returns the doubled real source offset.
struct RealOffset {
  double dr2;
  double dc2;
};

RealOffset inverse_rotate_doubled(int dr2, int dc2, int degrees) {
  int deg = degrees % 360;
  if (deg < 0) deg += 360;
  const int quarter = deg / 90;
  const int residual = deg % 90;
  // Inverse counter-clockwise quarter turn: (dr, dc) -> (dc, -dr).
  for (int q = 0; q < quarter; ++q) {
    const int r = dr2;
    dr2 = dc2;
    dc2 = -r;
  }
  if (residual == 0) return {static_cast<double>(dr2), static_cast<double>(dc2)};
  const double rad = residual * std::numbers::pi / 180.0;
  const double cs = std::cos(rad);
  const double sn = std::sin(rad);
  const double dc_src = dc2 * cs - dr2 * sn;
  const double dr_src = dc2 * sn + dr2 * cs;
  return {dr_src, dc_src};
}

int round_index(double center, double offset) {
  if (center == std::floor(center)) {
    return static_cast<int>(center) + static_cast<int>(std::round(offset));
  }
  return static_cast<int>(std::floor(center + offset + 0.5));
}

}  // namespace

Offset rotation_source_offset(int dr, int dc, int degrees) {
  const RealOffset src = inverse_rotate_doubled(2 * dr, 2 * dc, degrees);
  return {static_cast<int>(std::round(src.dr2 / 2.0)), static_cast<int>(std::round(src.dc2 / 2.0))};
}

Grid2D rotate_crop_degrees(const Grid2D& crop, int degrees) {
  if (crop.height() != crop.width()) {
    throw ShapeError("rotate_crop: crop must be square, got " + std::to_string(crop.height()) + "x" +
                     std::to_string(crop.width()));
  }
  const int n = crop.height();
  const int ch = crop.channels();
  const double center = (n - 1) / 2.0;
  Grid2D out(n, n, ch);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const RealOffset src = inverse_rotate_doubled(2 * r - (n - 1), 2 * c - (n - 1), degrees);
      const int sr = round_index(center, src.dr2 / 2.0);
      const int sc = round_index(center, src.dc2 / 2.0);
      if (!crop.in_bounds(sr, sc)) continue;
      for (int k = 0; k < ch; ++k) out.at(r, c, k) = crop.at(sr, sc, k);
    }
  }
  return out;
}

Grid2D rotate_crop(const Grid2D& crop, RotationAngle angle) {
  return rotate_crop_degrees(crop, angle.degrees());
}

Pixel rotate_pixel_quarter_turns(Pixel p, int height, int width, int turns) {
  turns = ((turns % 4) + 4) % 4;
  for (int t = 0; t < turns; ++t) {
    p = {width - 1 - p.v, p.u};
    std::swap(height, width);
  }
  return p;
}

Grid2D rotate_quarter_turns(const Grid2D& grid, int turns) {
  turns = ((turns % 4) + 4) % 4;
  const bool swap = turns % 2 == 1;
  Grid2D out(swap ? grid.width() : grid.height(), swap ? grid.height() : grid.width(), grid.channels());
  for (int r = 0; r < grid.height(); ++r) {
    for (int c = 0; c < grid.width(); ++c) {
      const Pixel q = rotate_pixel_quarter_turns({r, c}, grid.height(), grid.width(), turns);
      for (int k = 0; k < grid.channels(); ++k) out.at(q.u, q.v, k) = grid.at(r, c, k);
    }
  }
  return out;
}

namespace {

void check_correlation_shapes(const Grid2D& feature, const Grid2D& kernel) {
  if (kernel.channels() != feature.channels()) {
    throw ShapeError("cross_correlate: kernel has " + std::to_string(kernel.channels()) +
                     " channels, feature has " + std::to_string(feature.channels()));
  }
  if (kernel.height() % 2 == 0 || kernel.width() % 2 == 0) {
    throw ShapeError("cross_correlate: kernel dims must be odd");
  }
  if (kernel.height() > feature.height() || kernel.width() > feature.width()) {
    throw ShapeError("cross_correlate: kernel larger than feature");
  }
}

// Channel-planar copy so the inner loops run over contiguous rows.
std::vector<double> to_planar(const Grid2D& g) {
  const std::size_t plane = static_cast<std::size_t>(g.height()) * g.width();
  std::vector<double> out(plane * g.channels());
  const auto src = g.data();
  for (std::size_t i = 0; i < plane; ++i)
    for (int k = 0; k < g.channels(); ++k) out[k * plane + i] = src[i * g.channels() + k];
  return out;
}

}  // namespace

Grid2D cross_correlate(const Grid2D& feature, const Grid2D& kernel) {
  check_correlation_shapes(feature, kernel);
  const int h = feature.height();
  const int w = feature.width();
  const int nch = feature.channels();
  const int ry = kernel.height() / 2;
  const int rx = kernel.width() / 2;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const std::vector<double> planar = to_planar(feature);
  Grid2D out(h, w, 1);
  double* __restrict dst = out.data().data();
  for (int ky = 0; ky < kernel.height(); ++ky) {
    const int dy = ky - ry;
    const int y0 = std::max(0, -dy);
    const int y1 = std::min(h, h - dy);
    for (int kx = 0; kx < kernel.width(); ++kx) {
      const int dx = kx - rx;
      const int x0 = std::max(0, -dx);
      const int x1 = std::min(w, w - dx);
      for (int k = 0; k < nch; ++k) {
        const double wt = kernel.at(ky, kx, k);
        if (wt == 0.0) continue;
        const double* __restrict src = planar.data() + k * plane;
        for (int y = y0; y < y1; ++y) {
          double* __restrict row = dst + static_cast<std::size_t>(y) * w;
          const double* __restrict srow = src + static_cast<std::size_t>(y + dy) * w + dx;
          for (int x = x0; x < x1; ++x) row[x] += wt * srow[x];
        }
      }
    }
  }
  return out;
}

void cross_correlate_backward(const Grid2D& feature, const Grid2D& kernel, const Grid2D& grad_score,
                              Grid2D& grad_feature, Grid2D& grad_kernel) {
  check_correlation_shapes(feature, kernel);
  if (grad_score.height() != feature.height() || grad_score.width() != feature.width() ||
      grad_score.channels() != 1) {
    throw ShapeError("cross_correlate_backward: grad_score shape mismatch");
  }
  if (grad_feature.size() != feature.size() || grad_kernel.size() != kernel.size()) {
    throw ShapeError("cross_correlate_backward: gradient buffers have wrong shape");
  }
  const int h = feature.height();
  const int w = feature.width();
  const int nch = feature.channels();
  const int ry = kernel.height() / 2;
  const int rx = kernel.width() / 2;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const std::vector<double> planar = to_planar(feature);
  std::vector<double> dplanar(plane * nch, 0.0);
  const double* __restrict g = grad_score.data().data();
  for (int ky = 0; ky < kernel.height(); ++ky) {
    const int dy = ky - ry;
    const int y0 = std::max(0, -dy);
    const int y1 = std::min(h, h - dy);
    for (int kx = 0; kx < kernel.width(); ++kx) {
      const int dx = kx - rx;
      const int x0 = std::max(0, -dx);
      const int x1 = std::min(w, w - dx);
      for (int k = 0; k < nch; ++k) {
        const double wt = kernel.at(ky, kx, k);
        const double* __restrict src = planar.data() + k * plane;
        double* __restrict dsrc = dplanar.data() + k * plane;
        double acc = 0.0;
        for (int y = y0; y < y1; ++y) {
          const double* __restrict grow = g + static_cast<std::size_t>(y) * w;
          const double* __restrict srow = src + static_cast<std::size_t>(y + dy) * w + dx;
          double* __restrict drow = dsrc + static_cast<std::size_t>(y + dy) * w + dx;
          for (int x = x0; x < x1; ++x) {
            acc += grow[x] * srow[x];
            drow[x] += wt * grow[x];
          }
        }
        grad_kernel.at(ky, kx, k) += acc;
      }
    }
  }
  auto gf = grad_feature.data();
  for (std::size_t i = 0; i < plane; ++i)
    for (int k = 0; k < nch; ++k) gf[i * nch + k] += dplanar[k * plane + i];
}

Distribution2D softmax2d(const Grid2D& score, double temperature) {
  if (!(temperature > 0.0)) throw ParameterError("softmax2d: temperature must be > 0");
  if (score.channels() != 1) throw ShapeError("softmax2d: score must be single-channel");
  Distribution2D dist{score.height(), score.width(), {}};
  const auto s = score.data();
  if (s.empty()) return dist;
  const double mx = *std::max_element(s.begin(), s.end());
  dist.probs.resize(s.size());
  double total = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    dist.probs[i] = std::exp((s[i] - mx) / temperature);
    total += dist.probs[i];
  }
  for (double& p : dist.probs) p /= total;
  return dist;
}

Pixel argmax_pixel(const Grid2D& score) {
  if (score.empty()) throw ShapeError("argmax_pixel: empty grid");
  if (score.channels() != 1) throw ShapeError("argmax_pixel: score must be single-channel");
  const auto s = score.data();
  std::size_t best = 0;
  for (std::size_t i = 1; i < s.size(); ++i)
    if (s[i] > s[best]) best = i;
  return {static_cast<int>(best / score.width()), static_cast<int>(best % score.width())};
}

double cross_entropy(const Distribution2D& pred, Pixel target) {
  if (target.u < 0 || target.u >= pred.height || target.v < 0 || target.v >= pred.width) {
    throw IndexError("cross_entropy: target (" + std::to_string(target.u) + ", " + std::to_string(target.v) +
                     ") outside " + std::to_string(pred.height) + "x" + std::to_string(pred.width));
  }
  return -std::log(std::max(pred.at(target.u, target.v), kProbabilityFloor));
}

ConvLayer::ConvLayer(int kh, int kw, int cin, int cout, int stride_)
    : kernel_h(kh), kernel_w(kw), in_channels(cin), out_channels(cout), stride(stride_) {
  if (kh <= 0 || kw <= 0 || cin <= 0 || cout <= 0) throw ShapeError("ConvLayer: non-positive dimension");
  kernel.assign(static_cast<std::size_t>(kh) * kw * cin * cout, 0.0);
  bias.assign(static_cast<std::size_t>(cout), 0.0);
  validate();
}

void ConvLayer::validate() const {
  if (kernel_h % 2 == 0 || kernel_w % 2 == 0) throw ShapeError("ConvLayer: kernel dims must be odd");
  if (stride < 1) throw ParameterError("ConvLayer: stride must be >= 1");
  if (kernel.size() != static_cast<std::size_t>(kernel_h) * kernel_w * in_channels * out_channels ||
      bias.size() != static_cast<std::size_t>(out_channels)) {
    throw ShapeError("ConvLayer: parameter storage does not match declared shape");
  }
  for (double x : kernel)
    if (!std::isfinite(x)) throw ParameterError("ConvLayer: non-finite weight");
  for (double x : bias)
    if (!std::isfinite(x)) throw ParameterError("ConvLayer: non-finite bias");
}

namespace {

void check_conv_input(const ConvLayer& layer, const Grid2D& input) {
  if (input.channels() != layer.in_channels) {
    throw ShapeError("conv: input has " + std::to_string(input.channels()) + " channels, layer expects " +
                     std::to_string(layer.in_channels));
  }
}

int out_extent(int n, int stride) { return (n + stride - 1) / stride; }

}  // namespace

Grid2D conv_forward(const ConvLayer& layer, const Grid2D& input) {
  check_conv_input(layer, input);
  const int h = input.height();
  const int w = input.width();
  const int ho = out_extent(h, layer.stride);
  const int wo = out_extent(w, layer.stride);
  const int cin = layer.in_channels;
  const int cout = layer.out_channels;
  const int ry = layer.kernel_h / 2;
  const int rx = layer.kernel_w / 2;
  Grid2D out(ho, wo, cout);
  for (int oy = 0; oy < ho; ++oy) {
    for (int ox = 0; ox < wo; ++ox) {
      double* o = out.ptr(oy, ox);
      for (int co = 0; co < cout; ++co) o[co] = layer.bias[co];
      for (int ky = 0; ky < layer.kernel_h; ++ky) {
        const int iy = oy * layer.stride + ky - ry;
        if (iy < 0 || iy >= h) continue;
        for (int kx = 0; kx < layer.kernel_w; ++kx) {
          const int ix = ox * layer.stride + kx - rx;
          if (ix < 0 || ix >= w) continue;
          const double* in = input.ptr(iy, ix);
          const double* wt = &layer.kernel[layer.index(ky, kx, 0, 0)];
          for (int ci = 0; ci < cin; ++ci) {
            const double x = in[ci];
            if (x == 0.0) continue;
            const double* wrow = wt + static_cast<std::size_t>(ci) * cout;
            for (int co = 0; co < cout; ++co) o[co] += x * wrow[co];
          }
        }
      }
    }
  }
  return out;
}

ConvGrads conv_backward(const ConvLayer& layer, const Grid2D& input, const Grid2D& grad_out) {
  check_conv_input(layer, input);
  const int h = input.height();
  const int w = input.width();
  const int ho = out_extent(h, layer.stride);
  const int wo = out_extent(w, layer.stride);
  if (grad_out.height() != ho || grad_out.width() != wo || grad_out.channels() != layer.out_channels) {
    throw ShapeError("conv_backward: grad_out shape does not match the layer output");
  }
  const int cin = layer.in_channels;
  const int cout = layer.out_channels;
  const int ry = layer.kernel_h / 2;
  const int rx = layer.kernel_w / 2;
  ConvGrads grads{std::vector<double>(layer.kernel.size(), 0.0), std::vector<double>(cout, 0.0),
                  Grid2D(h, w, cin)};
  for (int oy = 0; oy < ho; ++oy) {
    for (int ox = 0; ox < wo; ++ox) {
      const double* g = grad_out.ptr(oy, ox);
      for (int co = 0; co < cout; ++co) grads.bias[co] += g[co];
      for (int ky = 0; ky < layer.kernel_h; ++ky) {
        const int iy = oy * layer.stride + ky - ry;
        if (iy < 0 || iy >= h) continue;
        for (int kx = 0; kx < layer.kernel_w; ++kx) {
          const int ix = ox * layer.stride + kx - rx;
          if (ix < 0 || ix >= w) continue;
          const double* in = input.ptr(iy, ix);
          double* din = grads.input.ptr(iy, ix);
          const std::size_t base = layer.index(ky, kx, 0, 0);
          for (int ci = 0; ci < cin; ++ci) {
            const double* wrow = &layer.kernel[base + static_cast<std::size_t>(ci) * cout];
            double* gwrow = &grads.kernel[base + static_cast<std::size_t>(ci) * cout];
            const double x = in[ci];
            double acc = 0.0;
            for (int co = 0; co < cout; ++co) {
              gwrow[co] += x * g[co];
              acc += wrow[co] * g[co];
            }
            din[ci] += acc;
          }
        }
      }
    }
  }
  return grads;
}

}  // namespace arrange

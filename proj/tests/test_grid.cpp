#include <algorithm>
#include <cmath>

#include "arrange/grid.hpp"
#include "arrange/rng.hpp"
#include "doctest.h"

using namespace arrange;

namespace {

Grid2D random_grid(Rng& rng, int h, int w, int c) {
  Grid2D g(h, w, c);
  for (double& x : g.data()) x = rng.uniform(-1.0, 1.0);
  return g;
}

// Shift-and-dot reference, summing kernel row, column, channel per pixel.
Grid2D naive_correlate(const Grid2D& f, const Grid2D& k) {
  Grid2D out(f.height(), f.width(), 1);
  const int ry = k.height() / 2;
  const int rx = k.width() / 2;
  for (int u = 0; u < f.height(); ++u) {
    for (int v = 0; v < f.width(); ++v) {
      double s = 0.0;
      for (int ky = 0; ky < k.height(); ++ky)
        for (int kx = 0; kx < k.width(); ++kx)
          for (int ch = 0; ch < f.channels(); ++ch) {
            const int y = u + ky - ry;
            const int x = v + kx - rx;
            if (f.in_bounds(y, x)) s += f.at(y, x, ch) * k.at(ky, kx, ch);
          }
      out.at(u, v) = s;
    }
  }
  return out;
}

Grid2D naive_conv(const ConvLayer& l, const Grid2D& in) {
  Grid2D out(in.height(), in.width(), l.out_channels);
  for (int u = 0; u < in.height(); ++u)
    for (int v = 0; v < in.width(); ++v)
      for (int co = 0; co < l.out_channels; ++co) {
        double s = l.bias[co];
        for (int ky = 0; ky < l.kernel_h; ++ky)
          for (int kx = 0; kx < l.kernel_w; ++kx)
            for (int ci = 0; ci < l.in_channels; ++ci) {
              const int y = u + ky - l.kernel_h / 2;
              const int x = v + kx - l.kernel_w / 2;
              if (in.in_bounds(y, x)) s += in.at(y, x, ci) * l.weight(ky, kx, ci, co);
            }
        out.at(u, v, co) = s;
      }
  return out;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); }

}  // namespace

TEST_CASE("rotation angle bins") {
  CHECK(RotationAngle(36).degrees() == 360);
  CHECK_THROWS_AS(RotationAngle(0), ParameterError);
  CHECK(RotationAngle::nearest(90).index() == 9);
  CHECK(RotationAngle::nearest(95).index() == 10);
  CHECK(RotationAngle::nearest(0).index() == 36);
  CHECK(RotationAngle::nearest(354).index() == 35);
  CHECK(RotationAngle::nearest(356).index() == 36);
  CHECK(RotationAngle::nearest(-90).index() == 27);
}

TEST_CASE("rotate_crop") {
  Rng rng(11);
  SUBCASE("full turn is identity") {
    const Grid2D g = random_grid(rng, 7, 7, 2);
    CHECK(rotate_crop(g, RotationAngle(36)) == g);
  }
  SUBCASE("quarter turn moves (0,1) to (1,0)") {
    Grid2D g(3, 3, 1);
    g.at(0, 1) = 1.0;
    const Grid2D r = rotate_crop(g, RotationAngle(9));
    Grid2D want(3, 3, 1);
    want.at(1, 0) = 1.0;
    CHECK(r == want);
  }
  SUBCASE("quarter turns match the index permutation, odd and even sizes") {
    for (int n : {3, 4, 8, 9, 15}) {
      const Grid2D g = random_grid(rng, n, n, 3);
      for (int q = 1; q <= 3; ++q) {
        CHECK(rotate_crop(g, RotationAngle(9 * q)) == rotate_quarter_turns(g, q));
      }
      Grid2D x = g;
      for (int i = 0; i < 4; ++i) x = rotate_crop(x, RotationAngle(9));
      CHECK(x == g);
    }
  }
  SUBCASE("rotating by a + 90 equals a quarter turn of rotating by a") {
    const Grid2D g = random_grid(rng, 9, 9, 1);
    for (int j = 1; j <= 36; ++j) {
      const int k = (j + 8) % 36 + 1;
      CHECK(rotate_crop(g, RotationAngle(k)) == rotate_quarter_turns(rotate_crop(g, RotationAngle(j)), 1));
    }
  }
  SUBCASE("j then 36-j restores pixels whose source stayed inside") {
    const Grid2D g = random_grid(rng, 11, 11, 1);
    for (int j = 1; j < 36; ++j) {
      const Grid2D back = rotate_crop(rotate_crop(g, RotationAngle(j)), RotationAngle(36 - j));
      // A pixel is restored when its round trip lands on itself.
      for (int r = 0; r < 11; ++r)
        for (int c = 0; c < 11; ++c) {
          const Offset a = rotation_source_offset(r - 5, c - 5, 360 - 10 * j);
          const Offset b = rotation_source_offset(a.dr, a.dc, 10 * j);
          if (b.dr == r - 5 && b.dc == c - 5 && std::abs(a.dr) <= 5 && std::abs(a.dc) <= 5) {
            CHECK(back.at(r, c) == g.at(r, c));
          }
        }
    }
  }
  CHECK_THROWS_AS(rotate_crop(Grid2D(3, 4, 1), RotationAngle(1)), ShapeError);
}

TEST_CASE("cross_correlate") {
  SUBCASE("delta kernel is identity") {
    Rng rng(3);
    const Grid2D f = random_grid(rng, 6, 5, 1);
    Grid2D k(3, 3, 1);
    k.at(1, 1) = 1.0;
    CHECK(cross_correlate(f, k) == f);
  }
  SUBCASE("constant ones") {
    const Grid2D s = cross_correlate(Grid2D(5, 5, 1, 1.0), Grid2D(3, 3, 1, 1.0));
    CHECK(s.at(2, 2) == 9.0);
    CHECK(s.at(0, 0) == 4.0);
    CHECK(s.at(0, 2) == 6.0);
  }
  SUBCASE("off-center delta shifts with zero fill") {
    Rng rng(4);
    const Grid2D f = random_grid(rng, 5, 5, 1);
    Grid2D k(3, 3, 1);
    k.at(0, 2) = 1.0;  // reads feature at (u-1, v+1)
    const Grid2D s = cross_correlate(f, k);
    for (int u = 0; u < 5; ++u)
      for (int v = 0; v < 5; ++v) CHECK(s.at(u, v) == (f.in_bounds(u - 1, v + 1) ? f.at(u - 1, v + 1) : 0.0));
  }
  SUBCASE("bit-identical to the naive oracle") {
    Rng rng(5);
    for (int t = 0; t < 20; ++t) {
      const int h = 5 + static_cast<int>(rng.uniform_int(0, 20));
      const int w = 5 + static_cast<int>(rng.uniform_int(0, 20));
      const int c = 1 + static_cast<int>(rng.uniform_int(0, 3));
      const int kh = 1 + 2 * static_cast<int>(rng.uniform_int(0, 2));
      const int kw = 1 + 2 * static_cast<int>(rng.uniform_int(0, 2));
      const Grid2D f = random_grid(rng, h, w, c);
      const Grid2D k = random_grid(rng, kh, kw, c);
      CHECK(cross_correlate(f, k) == naive_correlate(f, k));
    }
  }
  SUBCASE("backward matches finite differences") {
    Rng rng(6);
    const Grid2D f = random_grid(rng, 6, 7, 2);
    const Grid2D k = random_grid(rng, 3, 5, 2);
    const Grid2D g = random_grid(rng, 6, 7, 1);
    Grid2D gf(6, 7, 2);
    Grid2D gk(3, 5, 2);
    cross_correlate_backward(f, k, g, gf, gk);
    auto objective = [&](const Grid2D& ff, const Grid2D& kk) {
      const Grid2D s = cross_correlate(ff, kk);
      double acc = 0.0;
      for (std::size_t i = 0; i < s.size(); ++i) acc += s.data()[i] * g.data()[i];
      return acc;
    };
    const double eps = 1e-4;
    for (std::size_t i = 0; i < f.size(); ++i) {
      Grid2D p = f, m = f;
      p.data()[i] += eps;
      m.data()[i] -= eps;
      CHECK(rel_err((objective(p, k) - objective(m, k)) / (2 * eps), gf.data()[i]) < 1e-6);
    }
    for (std::size_t i = 0; i < k.size(); ++i) {
      Grid2D p = k, m = k;
      p.data()[i] += eps;
      m.data()[i] -= eps;
      CHECK(rel_err((objective(f, p) - objective(f, m)) / (2 * eps), gk.data()[i]) < 1e-6);
    }
  }
  CHECK_THROWS_AS(cross_correlate(Grid2D(5, 5, 2), Grid2D(3, 3, 1)), ShapeError);
}

TEST_CASE("softmax2d") {
  const Distribution2D u = softmax2d(Grid2D(4, 8, 1, 3.5), 1.0);
  for (double p : u.probs) CHECK(p == doctest::Approx(1.0 / 32).epsilon(1e-12));
  Grid2D s(1, 2, 1);
  s.at(0, 1) = std::log(3.0);
  const Distribution2D d = softmax2d(s, 1.0);
  CHECK(d.probs[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(d.probs[1] == doctest::Approx(0.75).epsilon(1e-12));
  CHECK_THROWS_AS(softmax2d(s, 0.0), ParameterError);

  Rng rng(8);
  for (int t = 0; t < 50; ++t) {
    Grid2D g = random_grid(rng, 7, 9, 1);
    for (double& x : g.data()) x *= 50.0;
    const double temp = rng.uniform(0.01, 10.0);
    const Distribution2D a = softmax2d(g, temp);
    double sum = 0.0;
    for (double p : a.probs) sum += p;
    CHECK(std::abs(sum - 1.0) < 1e-6);
    Grid2D g2 = g;
    for (double& x : g2.data()) x *= 3.0;
    const Distribution2D b = softmax2d(g2, 3.0 * temp);
    for (std::size_t i = 0; i < a.probs.size(); ++i) CHECK(a.probs[i] == doctest::Approx(b.probs[i]).epsilon(1e-9));
    const auto ia = std::max_element(a.probs.begin(), a.probs.end()) - a.probs.begin();
    const Pixel am = argmax_pixel(g);
    CHECK(ia == am.u * 9 + am.v);
  }
}

TEST_CASE("argmax_pixel") {
  Grid2D g(8, 10, 1);
  g.at(3, 7) = 2.0;
  CHECK(argmax_pixel(g) == Pixel{3, 7});
  CHECK(argmax_pixel(Grid2D(4, 4, 1, 1.0)) == Pixel{0, 0});
  Grid2D t(5, 5, 1);
  t.at(1, 2) = 1.0;
  t.at(3, 0) = 1.0;
  CHECK(argmax_pixel(t) == Pixel{1, 2});
  CHECK_THROWS_AS(argmax_pixel(Grid2D()), ShapeError);
}

TEST_CASE("cross_entropy") {
  Distribution2D one_hot{2, 2, {0, 0, 1, 0}};
  CHECK(cross_entropy(one_hot, {1, 0}) == 0.0);
  Distribution2D uni{2, 2, {0.25, 0.25, 0.25, 0.25}};
  CHECK(cross_entropy(uni, {0, 1}) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  Distribution2D d{1, 2, {0.25, 0.75}};
  CHECK(cross_entropy(d, {0, 1}) == doctest::Approx(0.2876820724517809).epsilon(1e-12));
  CHECK(cross_entropy(one_hot, {0, 0}) == doctest::Approx(-std::log(1e-12)));
  CHECK_THROWS_AS(cross_entropy(d, {1, 0}), IndexError);
}

TEST_CASE("conv_forward / conv_backward") {
  Rng rng(9);
  SUBCASE("identity kernel") {
    ConvLayer l(3, 3, 2, 2);
    l.weight(1, 1, 0, 0) = 1.0;
    l.weight(1, 1, 1, 1) = 1.0;
    const Grid2D in = random_grid(rng, 5, 6, 2);
    CHECK(conv_forward(l, in) == in);
  }
  SUBCASE("zero kernel gives the bias") {
    ConvLayer l(3, 3, 1, 1);
    l.bias[0] = 0.7;
    const Grid2D out = conv_forward(l, random_grid(rng, 4, 4, 1));
    for (double x : out.data()) CHECK(x == 0.7);
  }
  SUBCASE("random layer matches the naive oracle") {
    for (int t = 0; t < 10; ++t) {
      ConvLayer l(3, 3, 3, 4);
      for (double& w : l.kernel) w = rng.uniform(-1, 1);
      for (double& b : l.bias) b = rng.uniform(-1, 1);
      const Grid2D in = random_grid(rng, 4, 4, 3);
      const Grid2D a = conv_forward(l, in);
      const Grid2D b = naive_conv(l, in);
      for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a.data()[i] - b.data()[i]) < 1e-9);
    }
  }
  SUBCASE("zero upstream gradient") {
    ConvLayer l(3, 3, 2, 3);
    for (double& w : l.kernel) w = rng.uniform(-1, 1);
    const ConvGrads g = conv_backward(l, random_grid(rng, 5, 5, 2), Grid2D(5, 5, 3));
    for (double x : g.kernel) CHECK(x == 0.0);
    for (double x : g.bias) CHECK(x == 0.0);
    for (double x : g.input.data()) CHECK(x == 0.0);
  }
  SUBCASE("gradients match finite differences") {
    ConvLayer l(3, 3, 2, 3);
    for (double& w : l.kernel) w = rng.uniform(-1, 1);
    for (double& b : l.bias) b = rng.uniform(-1, 1);
    const Grid2D in = random_grid(rng, 5, 5, 2);
    const Grid2D gout = random_grid(rng, 5, 5, 3);
    const ConvGrads g = conv_backward(l, in, gout);
    for (int co = 0; co < 3; ++co) {
      double s = 0.0;
      for (int u = 0; u < 5; ++u)
        for (int v = 0; v < 5; ++v) s += gout.at(u, v, co);
      CHECK(g.bias[co] == doctest::Approx(s).epsilon(1e-12));
    }
    auto objective = [&](const ConvLayer& ll, const Grid2D& x) {
      const Grid2D o = conv_forward(ll, x);
      double acc = 0.0;
      for (std::size_t i = 0; i < o.size(); ++i) acc += o.data()[i] * gout.data()[i];
      return acc;
    };
    const double eps = 1e-4;
    for (std::size_t i = 0; i < l.kernel.size(); ++i) {
      ConvLayer p = l, m = l;
      p.kernel[i] += eps;
      m.kernel[i] -= eps;
      CHECK(rel_err((objective(p, in) - objective(m, in)) / (2 * eps), g.kernel[i]) < 1e-4);
    }
    for (std::size_t i = 0; i < in.size(); ++i) {
      Grid2D p = in, m = in;
      p.data()[i] += eps;
      m.data()[i] -= eps;
      CHECK(rel_err((objective(l, p) - objective(l, m)) / (2 * eps), g.input.data()[i]) < 1e-4);
    }
  }
  SUBCASE("shape errors") {
    ConvLayer l(3, 3, 2, 1);
    CHECK_THROWS_AS(conv_forward(l, Grid2D(4, 4, 3)), ShapeError);
    CHECK_THROWS_AS(conv_backward(l, Grid2D(4, 4, 2), Grid2D(3, 4, 1)), ShapeError);
    CHECK_THROWS_AS(ConvLayer(2, 3, 1, 1), ShapeError);
  }
}

TEST_CASE("quarter-turn helpers") {
  Rng rng(12);
  const Grid2D g = random_grid(rng, 4, 6, 1);
  const Grid2D r = rotate_quarter_turns(g, 1);
  CHECK(r.height() == 6);
  CHECK(r.width() == 4);
  // Counter-clockwise: the top-right corner moves to the top-left.
  CHECK(r.at(0, 0) == g.at(0, 5));
  for (int t = 0; t < 4; ++t) {
    const Pixel p = rotate_pixel_quarter_turns({1, 4}, 4, 6, t);
    CHECK(rotate_quarter_turns(g, t).at(p.u, p.v) == g.at(1, 4));
  }
  CHECK(rotate_quarter_turns(rotate_quarter_turns(g, 3), 1) == g);
}

#include <algorithm>
#include <cmath>

#include "arrange/fusion.hpp"
#include "arrange/rng.hpp"
#include "doctest.h"
#include "fusion_oracle.hpp"

using namespace arrange;
using doctest::Approx;

namespace {

EmbeddingVector ev(std::vector<double> v) { return {std::move(v), false}; }

std::vector<double> random_vec(Rng& rng, int dim) {
  std::vector<double> v(dim);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

// Instance k covers a horizontal band of rows [2k, 2k + 2) of a 2n x 4 map.
SegmentationResult bands(int n) {
  SegmentationResult seg{2 * n, 4, {}};
  for (int k = 0; k < n; ++k) {
    InstanceMask m{k + 1, 2 * n, 4, std::vector<std::uint8_t>(static_cast<std::size_t>(8 * n), 0), {2 * k, 0, 2 * k + 1, 3}, 8};
    std::fill(m.mask.begin() + 8 * k, m.mask.begin() + 8 * k + 8, 1);
    seg.instances.push_back(m);
  }
  return seg;
}

}  // namespace

TEST_CASE("cosine similarity") {
  CHECK(cosine(ev({1, 0}), ev({1, 0})) == 1.0);
  CHECK(cosine(ev({1, 0}), ev({0, 1})) == 0.0);
  CHECK(cosine(ev({1 / std::sqrt(2.0), 1 / std::sqrt(2.0)}), ev({1, 0})) == Approx(0.70711).epsilon(1e-5));
  CHECK_THROWS_AS(cosine(ev({0, 0}), ev({1, 0})), DegenerateEmbeddingError);
  CHECK_THROWS_AS(cosine(ev({1, 0, 0}), ev({1, 0})), ShapeError);
}

TEST_CASE("similarity profile") {
  const SimilarityProfile one = similarity_profile({ev({1, 2})}, ev({2, 1}));
  CHECK(one.eta == std::vector<double>{0.0});
  CHECK(one.zeta[0] == Approx(0.8));

  const SimilarityProfile same = similarity_profile({ev({1, 1}), ev({1, 1})}, ev({1, 0}));
  CHECK(same.eta[0] == Approx(0.5));
  CHECK(same.eta[1] == Approx(0.5));
  const SimilarityProfile unbiased = similarity_profile({ev({1, 1}), ev({1, 1})}, ev({1, 0}), EtaDivisor::n_crop_minus_one);
  CHECK(unbiased.eta[0] == Approx(1.0));
  CHECK(similarity_profile({ev({3})}, ev({1}), EtaDivisor::n_crop_minus_one).eta[0] == 0.0);

  const SimilarityProfile ortho = similarity_profile({ev({1, 0, 0}), ev({0, 2, 0}), ev({0, 0, 3})}, ev({1, 1, 1}));
  for (double e : ortho.eta) CHECK(e == 0.0);
  for (int i = 0; i < 3; ++i) CHECK(ortho.eta_at(i, i) == Approx(1.0));

  CHECK_THROWS_AS(similarity_profile({}, ev({1})), ParameterError);
}

TEST_CASE("fusion weights") {
  SimilarityProfile p;
  p.count = 2;
  p.zeta = {2, 0};
  p.eta = {0, 0};
  const FusionWeights w = fusion_weights(p, 1.0);
  CHECK(w.omega[0] == Approx(0.8808).epsilon(1e-4));
  CHECK(w.omega[1] == Approx(0.1192).epsilon(1e-3));
  CHECK(w.tau == 1.0);

  p.zeta = {0.3, 0.3};
  p.eta = {0.1, 0.1};
  for (double x : fusion_weights(p, 0.07).omega) CHECK(x == Approx(0.5));

  SimilarityProfile single{1, {0.2}, {1.0}, {0.0}};
  CHECK(fusion_weights(single, 0.07).omega == std::vector<double>{1.0});

  CHECK_THROWS_AS(fusion_weights(p, 0.0), ParameterError);
  CHECK_THROWS_AS(fusion_weights(p, -1.0), ParameterError);
}

TEST_CASE("weights are a shift-invariant simplex that flattens and sharpens with tau") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = static_cast<int>(rng.uniform_int(1, 12));
    SimilarityProfile p;
    p.count = n;
    for (int i = 0; i < n; ++i) {
      p.zeta.push_back(rng.uniform(-1, 1));
      p.eta.push_back(rng.uniform(-1, 1));
    }
    const FusionWeights w = fusion_weights(p, 0.07);
    double sum = 0;
    for (double x : w.omega) {
      CHECK(x >= 0.0);
      CHECK(x <= 1.0);
      sum += x;
    }
    CHECK(sum == Approx(1.0).epsilon(1e-12));

    SimilarityProfile shifted = p;
    for (double& z : shifted.zeta) z += 0.37;
    const FusionWeights ws = fusion_weights(shifted, 0.07);
    for (int i = 0; i < n; ++i) CHECK(ws.omega[i] == Approx(w.omega[i]).epsilon(1e-9));

    const auto flat = fusion_weights(p, 1e6).omega;
    CHECK(*std::max_element(flat.begin(), flat.end()) - *std::min_element(flat.begin(), flat.end()) < 1e-4);
    const auto sharp = fusion_weights(p, 1e-6).omega;
    CHECK(*std::max_element(sharp.begin(), sharp.end()) > 1 - 1e-4);
  }
}

TEST_CASE("fuse blends and renormalizes") {
  const EmbeddingVector g = ev({3, 4}), e = ev({0, 2});
  const EmbeddingVector all_global = fuse(g, e, 1.0);
  CHECK(all_global.values[0] == Approx(0.6));
  CHECK(all_global.values[1] == Approx(0.8));
  CHECK(all_global.normalized);
  CHECK(fuse(g, e, 0.0).values == std::vector<double>{0.0, 1.0});
  const EmbeddingVector half = fuse(ev({1, 0}), ev({0, 1}), 0.5);
  CHECK(half.values[0] == Approx(0.70711).epsilon(1e-5));
  CHECK(half.values[1] == Approx(0.70711).epsilon(1e-5));
  CHECK_THROWS_AS(fuse(ev({1, 0}), ev({1, 0, 0}), 0.5), ShapeError);
  CHECK_THROWS_AS(fuse(g, e, 1.5), ParameterError);
}

TEST_CASE("fusion matches the double-loop oracle") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = static_cast<int>(rng.uniform_int(1, 12));
    std::vector<EmbeddingVector> ins;
    std::vector<std::vector<double>> raw;
    for (int i = 0; i < n; ++i) {
      raw.push_back(random_vec(rng, 32));
      ins.push_back(ev(raw.back()));
    }
    const std::vector<double> g = random_vec(rng, 32), t = random_vec(rng, 32);
    const bool minus_one = trial % 2 == 1;
    const FusionConfig cfg{0.07, minus_one ? EtaDivisor::n_crop_minus_one : EtaDivisor::n_crop};
    const oracle::Fusion want = oracle::fuse_all(raw, g, t, cfg.tau, minus_one);

    const SimilarityProfile p = similarity_profile(ins, ev(g), cfg.divisor);
    const FusionWeights w = fusion_weights(p, cfg.tau);
    const auto fused = fuse_instances(ins, ev(g), cfg);
    for (int i = 0; i < n; ++i) {
      CHECK(std::abs(p.zeta[i] - want.zeta[i]) < 1e-9);
      CHECK(std::abs(p.eta[i] - want.eta[i]) < 1e-9);
      CHECK(std::abs(w.omega[i] - want.omega[i]) < 1e-9);
      for (int j = 0; j < n; ++j) {
        CHECK(std::abs(p.eta_at(i, j) - want.eta_matrix[i][j]) < 1e-9);
        CHECK(p.eta_at(i, j) == p.eta_at(j, i));
      }
      for (int k = 0; k < 32; ++k) CHECK(std::abs(fused[i].values[k] - want.fused[i][k]) < 1e-9);
      CHECK(std::abs(cosine(fused[i], ev(t)) - want.scores[i]) < 1e-9);
    }
  }
}

TEST_CASE("confidence maps") {
  const SegmentationResult one = bands(1);
  const ConfidenceMap m = confidence_map({ev({0, 1})}, ev({0, 5}), one, 2, 4);
  for (double x : m.scores.data()) CHECK(x == 1.0);

  SegmentationResult sparse = bands(2);
  sparse.instances[0].mask[0] = 0;
  const ConfidenceMap two = confidence_map({ev({1, 0}), ev({1, 1})}, ev({0, 1}), sparse, 4, 4);
  CHECK(two.scores.at(0, 0, 0) == kBackgroundScore);
  CHECK(two.per_instance[0] == Approx(0.0));
  CHECK(two.per_instance[1] == Approx(0.70711).epsilon(1e-5));
  const auto data = two.scores.data();
  const auto best = std::max_element(data.begin(), data.end()) - data.begin();
  CHECK(sparse.instances[1].mask[static_cast<std::size_t>(best)] == 1);

  CHECK_THROWS_AS(confidence_map({ev({1, 0})}, ev({0, 1}), sparse, 4, 4), ShapeError);
  CHECK_THROWS_AS(confidence_map({ev({1, 0}), ev({1, 1})}, ev({0, 1}), sparse, 4, 5), ShapeError);
}

TEST_CASE("confidence maps ignore instance order") {
  Rng rng(3);
  const int n = 5;
  const SegmentationResult seg = bands(n);
  std::vector<EmbeddingVector> fused;
  for (int i = 0; i < n; ++i) fused.push_back(ev(random_vec(rng, 8)));
  const EmbeddingVector text = ev(random_vec(rng, 8));
  const ConfidenceMap ref = confidence_map(fused, text, seg, 2 * n, 4);
  std::vector<int> order{3, 0, 4, 1, 2};
  SegmentationResult seg_p{seg.height, seg.width, {}};
  std::vector<EmbeddingVector> fused_p;
  for (int i : order) {
    seg_p.instances.push_back(seg.instances[i]);
    fused_p.push_back(fused[i]);
  }
  CHECK(confidence_map(fused_p, text, seg_p, 2 * n, 4).scores == ref.scores);
}

TEST_CASE("fusion backward matches central differences") {
  Rng rng(21);
  for (EtaDivisor div : {EtaDivisor::n_crop, EtaDivisor::n_crop_minus_one}) {
    const int n = 4, d = 6;
    std::vector<std::vector<double>> ins;
    for (int i = 0; i < n; ++i) ins.push_back(random_vec(rng, d));
    std::vector<double> g = random_vec(rng, d), t = random_vec(rng, d), w = random_vec(rng, n);
    const FusionConfig cfg{0.5, div};
    auto objective = [&]() {
      const auto f = oracle::fuse_all(ins, g, t, cfg.tau, div == EtaDivisor::n_crop_minus_one);
      double s = 0;
      for (int i = 0; i < n; ++i) s += w[i] * f.scores[i];
      return s;
    };
    const FusionGrads grads = fusion_backward(ins, g, t, cfg, w);
    auto check = [&](double& x, double analytic) {
      const double h = 1e-6, keep = x;
      x = keep + h;
      const double up = objective();
      x = keep - h;
      const double down = objective();
      x = keep;
      CHECK(analytic == Approx((up - down) / (2 * h)).epsilon(1e-6).scale(1.0));
    };
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < d; ++k) check(ins[i][k], grads.instances[i][k]);
    for (int k = 0; k < d; ++k) {
      check(g[k], grads.global[k]);
      check(t[k], grads.text[k]);
    }
  }
}

TEST_CASE("score gradients sum the map over each mask") {
  const SegmentationResult seg = bands(2);
  Grid2D gm(4, 4, 1, 0.0);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) gm.at(r, c, 0) = r * 4 + c;
  const auto s = score_grads_from_map(gm, seg);
  CHECK(s == std::vector<double>{28.0, 92.0});
}

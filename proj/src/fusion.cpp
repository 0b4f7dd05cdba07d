#include "arrange/fusion.hpp"

#include <algorithm>
#include <cmath>

namespace arrange {

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

double norm(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

// Accumulates g * d cos(a, b) / da into out.
void cosine_grad(const std::vector<double>& a, const std::vector<double>& b, double g, std::vector<double>& out) {
  const double na = norm(a), nb = norm(b);
  const double c = dot(a, b) / (na * nb);
  for (std::size_t k = 0; k < a.size(); ++k) out[k] += g * (b[k] / (na * nb) - c * a[k] / (na * na));
}

std::vector<double> softmax(const std::vector<double>& q) {
  const double mx = *std::max_element(q.begin(), q.end());
  std::vector<double> w(q.size());
  double total = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    w[i] = std::exp(q[i] - mx);
    total += w[i];
  }
  for (double& x : w) x /= total;
  return w;
}

double eta_divisor(int n, EtaDivisor divisor) {
  return divisor == EtaDivisor::n_crop ? n : n - 1;
}

}  // namespace

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ShapeError("cosine: dimension mismatch");
  const double na = norm(a), nb = norm(b);
  if (!(na > 0.0) || !(nb > 0.0)) throw DegenerateEmbeddingError("cosine: zero vector");
  return dot(a, b) / (na * nb);
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) { return cosine(a.values, b.values); }

SimilarityProfile similarity_profile(const std::vector<EmbeddingVector>& instances, const EmbeddingVector& global,
                                     EtaDivisor divisor) {
  const int n = static_cast<int>(instances.size());
  if (n == 0) throw ParameterError("similarity_profile: no instances");
  SimilarityProfile p;
  p.count = n;
  p.zeta.resize(n);
  p.eta_matrix.assign(static_cast<std::size_t>(n) * n, 0.0);
  p.eta.assign(n, 0.0);
  for (int i = 0; i < n; ++i) {
    p.zeta[i] = cosine(instances[i], global);
    p.eta_matrix[static_cast<std::size_t>(i) * n + i] = cosine(instances[i], instances[i]);
    for (int j = i + 1; j < n; ++j) {
      const double c = cosine(instances[i], instances[j]);
      p.eta_matrix[static_cast<std::size_t>(i) * n + j] = c;
      p.eta_matrix[static_cast<std::size_t>(j) * n + i] = c;
    }
  }
  const double d = eta_divisor(n, divisor);
  for (int i = 0; i < n; ++i) {
    if (d <= 0) continue;  // single instance: empty sum
    double s = 0.0;
    for (int j = 0; j < n; ++j)
      if (j != i) s += p.eta_at(i, j);
    p.eta[i] = s / d;
  }
  return p;
}

FusionWeights fusion_weights(const SimilarityProfile& profile, double tau) {
  if (!(tau > 0.0)) throw ParameterError("fusion_weights: tau must be > 0");
  std::vector<double> q(profile.count);
  for (int i = 0; i < profile.count; ++i) q[i] = (profile.zeta[i] + profile.eta[i]) / tau;
  return {softmax(q), tau};
}

EmbeddingVector fuse(const EmbeddingVector& global, const EmbeddingVector& instance, double omega) {
  if (global.dim() != instance.dim()) throw ShapeError("fuse: dimension mismatch");
  if (!(omega >= 0.0 && omega <= 1.0)) throw ParameterError("fuse: omega must lie in [0, 1]");
  std::vector<double> v(global.values.size());
  for (std::size_t k = 0; k < v.size(); ++k) v[k] = omega * global.values[k] + (1.0 - omega) * instance.values[k];
  return normalized(std::move(v));
}

std::vector<EmbeddingVector> fuse_instances(const std::vector<EmbeddingVector>& instances,
                                            const EmbeddingVector& global, const FusionConfig& config) {
  const SimilarityProfile p = similarity_profile(instances, global, config.divisor);
  const FusionWeights w = fusion_weights(p, config.tau);
  std::vector<EmbeddingVector> out;
  out.reserve(instances.size());
  for (std::size_t i = 0; i < instances.size(); ++i) out.push_back(fuse(global, instances[i], w.omega[i]));
  return out;
}

ConfidenceMap confidence_map(const std::vector<EmbeddingVector>& fused, const EmbeddingVector& text,
                             const SegmentationResult& seg, int height, int width) {
  if (fused.size() != seg.instances.size()) throw ShapeError("confidence_map: one fused embedding per instance required");
  if (seg.height != height || seg.width != width) throw ShapeError("confidence_map: masks do not match the map shape");
  ConfidenceMap m{Grid2D(height, width, 1, kBackgroundScore), {}};
  for (std::size_t i = 0; i < fused.size(); ++i) {
    const double s = cosine(fused[i], text);
    m.per_instance.push_back(s);
    const auto& mask = seg.instances[i].mask;
    auto data = m.scores.data();
    for (std::size_t p = 0; p < mask.size(); ++p)
      if (mask[p]) data[p] = s;
  }
  return m;
}

FusionGrads fusion_backward(const std::vector<std::vector<double>>& e, const std::vector<double>& g,
                            const std::vector<double>& t, const FusionConfig& config,
                            const std::vector<double>& grad_scores) {
  const int n = static_cast<int>(e.size());
  const std::size_t d = g.size();
  FusionGrads out{std::vector<std::vector<double>>(n, std::vector<double>(d, 0.0)), std::vector<double>(d, 0.0),
                  std::vector<double>(d, 0.0)};
  if (n == 0) return out;

  std::vector<double> zeta(n), eta(n, 0.0);
  std::vector<double> c(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) {
    zeta[i] = cosine(e[i], g);
    for (int j = 0; j < n; ++j)
      if (j != i) c[static_cast<std::size_t>(i) * n + j] = cosine(e[i], e[j]);
  }
  const double div = eta_divisor(n, config.divisor);
  if (div > 0) {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j)
        if (j != i) eta[i] += c[static_cast<std::size_t>(i) * n + j];
      eta[i] /= div;
    }
  }
  std::vector<double> q(n);
  for (int i = 0; i < n; ++i) q[i] = (zeta[i] + eta[i]) / config.tau;
  const std::vector<double> omega = softmax(q);

  std::vector<double> g_omega(n, 0.0);
  for (int i = 0; i < n; ++i) {
    std::vector<double> f(d);
    for (std::size_t k = 0; k < d; ++k) f[k] = omega[i] * g[k] + (1.0 - omega[i]) * e[i][k];
    // Normalizing f does not change its cosine with the text.
    std::vector<double> gf(d, 0.0);
    cosine_grad(f, t, grad_scores[i], gf);
    cosine_grad(t, f, grad_scores[i], out.text);
    for (std::size_t k = 0; k < d; ++k) {
      g_omega[i] += gf[k] * (g[k] - e[i][k]);
      out.global[k] += omega[i] * gf[k];
      out.instances[i][k] += (1.0 - omega[i]) * gf[k];
    }
  }
  double mean = 0.0;
  for (int i = 0; i < n; ++i) mean += omega[i] * g_omega[i];
  std::vector<double> gq(n);
  for (int i = 0; i < n; ++i) gq[i] = omega[i] * (g_omega[i] - mean) / config.tau;

  for (int i = 0; i < n; ++i) {
    cosine_grad(e[i], g, gq[i], out.instances[i]);
    cosine_grad(g, e[i], gq[i], out.global);
  }
  if (div > 0) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (j != i) cosine_grad(e[i], e[j], (gq[i] + gq[j]) / div, out.instances[i]);
  }
  return out;
}

std::vector<double> score_grads_from_map(const Grid2D& grad_map, const SegmentationResult& seg) {
  std::vector<double> out(seg.instances.size(), 0.0);
  const auto gm = grad_map.data();
  for (std::size_t i = 0; i < seg.instances.size(); ++i) {
    const auto& mask = seg.instances[i].mask;
    for (std::size_t p = 0; p < mask.size(); ++p)
      if (mask[p]) out[i] += gm[p];
  }
  return out;
}

}  // namespace arrange

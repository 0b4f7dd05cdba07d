#pragma once

#include <vector>

#include "arrange/embedding.hpp"
#include "arrange/grid.hpp"
#include "arrange/segmentation.hpp"

namespace arrange {

inline constexpr double kDefaultFusionTemperature = 0.07;
inline constexpr double kBackgroundScore = -1.0;

/// a.b / (|a||b|); throws DegenerateEmbeddingError on a zero vector.
double cosine(const EmbeddingVector& a, const EmbeddingVector& b);
double cosine(const std::vector<double>& a, const std::vector<double>& b);

/// Divisor of the mean pairwise similarity: the instance count as written, or
/// the count of other instances.
enum class EtaDivisor { n_crop, n_crop_minus_one };

struct SimilarityProfile {
  int count = 0;
  std::vector<double> zeta;        // cosine of each instance with the global embedding
  std::vector<double> eta_matrix;  // count x count pairwise cosines, row-major
  std::vector<double> eta;         // summed off-diagonal row divided by the divisor

  double eta_at(int i, int j) const { return eta_matrix[static_cast<std::size_t>(i) * count + j]; }
};

SimilarityProfile similarity_profile(const std::vector<EmbeddingVector>& instances, const EmbeddingVector& global,
                                     EtaDivisor divisor = EtaDivisor::n_crop);

struct FusionWeights {
  std::vector<double> omega;
  double tau = kDefaultFusionTemperature;
};

/// Softmax of (zeta + eta) / tau over all instances.
FusionWeights fusion_weights(const SimilarityProfile& profile, double tau);

/// normalize(omega * global + (1 - omega) * instance).
EmbeddingVector fuse(const EmbeddingVector& global, const EmbeddingVector& instance, double omega);

struct FusionConfig {
  double tau = kDefaultFusionTemperature;
  EtaDivisor divisor = EtaDivisor::n_crop;
};

/// Profile, weights and fused embedding of every instance.
std::vector<EmbeddingVector> fuse_instances(const std::vector<EmbeddingVector>& instances,
                                            const EmbeddingVector& global, const FusionConfig& config);

struct ConfidenceMap {
  Grid2D scores;                     // single channel
  std::vector<double> per_instance;  // s_i in instance order
};

/// s_i = cosine(fused_i, text) painted over mask i; background holds -1.
ConfidenceMap confidence_map(const std::vector<EmbeddingVector>& fused, const EmbeddingVector& text,
                             const SegmentationResult& seg, int height, int width);

/// Gradients of a scalar loss through per-instance scores back to the inputs
/// of the whole fusion (instances, global and text embeddings).
struct FusionGrads {
  std::vector<std::vector<double>> instances;
  std::vector<double> global;
  std::vector<double> text;
};
FusionGrads fusion_backward(const std::vector<std::vector<double>>& instances, const std::vector<double>& global,
                            const std::vector<double>& text, const FusionConfig& config,
                            const std::vector<double>& grad_scores);

/// Per-instance score gradient: sum of the map gradient over each mask.
std::vector<double> score_grads_from_map(const Grid2D& grad_map, const SegmentationResult& seg);

}  // namespace arrange

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "arrange/embedding.hpp"
#include "arrange/fusion.hpp"
#include "arrange/grid.hpp"
#include "arrange/segmentation.hpp"

namespace arrange {

struct InstructionPair {
  TextQuery tl_query;
  TextQuery rd_query;
};

/// Splits an instruction of the closed grammar
///   <verb> <det> [pile of] <color> <noun> <prep> <det> <color> <noun>
/// (verbs put|pack|push|place|move, prepositions in|into|on|onto) into
/// "a photo of <det> ..." queries for the two stages. Throws ParseError naming
/// the nearest template otherwise.
InstructionPair filter_text(const std::string& instruction);

/// Two convolutions: 3x3 to 16 hidden channels with ReLU, then 1x1.
struct ConvStack {
  ConvLayer hidden;
  ConvLayer output;

  ConvStack() = default;
  ConvStack(int in_channels, int out_channels, int hidden_channels = 16);
  int in_channels() const { return hidden.in_channels; }
  int out_channels() const { return output.out_channels; }
  bool operator==(const ConvStack&) const = default;
};

struct StackCache {
  Grid2D input;
  Grid2D hidden;  // after ReLU
  Grid2D output;
};
StackCache stack_forward(const ConvStack& stack, const Grid2D& input);
/// Accumulates parameter gradients into grads; returns d(loss)/d(input).
Grid2D stack_backward(const ConvStack& stack, const StackCache& cache, const Grid2D& grad_out, ConvStack& grads);

inline constexpr int kDefaultFeatureChannels = 1;
inline constexpr int kDefaultCropSize = 15;
inline constexpr double kRandomBiasRange = 0.1;

struct PolicyNets {
  ConvStack tl_head;  // 3 observation channels + confidence -> 1 score
  ConvStack phi;      // 3 observation channels + confidence -> F features
  ConvStack psi;      // 3 crop channels -> F features

  int feature_channels() const { return phi.out_channels(); }
  void validate() const;

  /// Zero-mean uniform weights scaled by fan-in and small uniform biases. Nonzero
  /// biases keep black crop pixels off the ReLU kink.
  static PolicyNets random(std::uint64_t seed, int feature_channels = kDefaultFeatureChannels);
  /// Hand-set weights: tl_head and phi copy the confidence channel, psi
  /// outputs 1 on every non-black crop pixel and 0 elsewhere.
  static PolicyNets oracle(int feature_channels = kDefaultFeatureChannels);

  bool operator==(const PolicyNets&) const = default;
};

/// Observation scaled to [0, 1] with the confidence map appended as channel 3.
Grid2D head_input(const Grid2D& obs, const Grid2D& confidence);
/// Crop scaled to [0, 1].
Grid2D crop_input(const Grid2D& crop);

struct PickDecision {
  Pixel pose;
  Grid2D score_map;
  Distribution2D distribution;
};

struct PlaceDecision {
  Pixel pose;
  RotationAngle angle{RotationAngle::kCount};
  std::vector<Grid2D> score_volume;  // one map per angle index 1..36
  double score = 0.0;
  int maxima = 0;  // number of (angle, pixel) cells attaining the maximum
};

PickDecision predict_pick(const Grid2D& obs, const ConfidenceMap& m_tl, const PolicyNets& nets);

/// c x c window centered on pose, zero outside the image.
Grid2D extract_pick_crop(const Grid2D& obs, Pixel pose, int c = kDefaultCropSize);

/// psi features of the crop rotated by every angle, divided by the crop area
/// so that place scores are averages over the kernel support.
std::vector<Grid2D> rotated_kernels(const Grid2D& pick_crop, const ConvStack& psi);

/// Scores every (angle, pixel); the decision is the first maximum in angle
/// order, then row-major pixel order.
PlaceDecision predict_place(const Grid2D& obs, const ConfidenceMap& m_rd, const Grid2D& pick_crop,
                            const PolicyNets& nets);

struct PolicyConfig {
  int crop_size = kDefaultCropSize;
  int crop_pad = kDefaultCropPad;
  int min_area = kDefaultMinArea;
  FusionConfig fusion;
  Rgb background{0, 0, 0};
};

/// Externally produced perception inputs. Embedding ids: 0 is the global
/// embedding, k the k-th instance, -1 and -2 the TL and RD text queries.
struct PerceptionOverrides {
  std::optional<SegmentationResult> masks;
  std::optional<std::map<int, EmbeddingVector>> embeddings;
};

inline constexpr int kGlobalEmbeddingId = 0;
inline constexpr int kTlTextEmbeddingId = -1;
inline constexpr int kRdTextEmbeddingId = -2;

struct Perception {
  InstructionPair queries;
  SegmentationResult seg;
  std::vector<EmbeddingVector> instances;
  EmbeddingVector global;
  EmbeddingVector tl_text;
  EmbeddingVector rd_text;
};

/// Segmentation and all embeddings for one observation, honouring overrides.
Perception perceive(const Grid2D& obs, const std::string& instruction, const EncoderParams& encoders,
                    const PolicyConfig& config, const PerceptionOverrides& overrides = {});

/// Ids and vectors in exchange-file order: global, instances, TL text, RD text.
std::pair<std::vector<EmbeddingVector>, std::vector<int>> perception_embeddings(const Perception& p);

struct ActResult {
  Perception perception;
  ConfidenceMap m_tl;
  ConfidenceMap m_rd;
  PickDecision pick;
  PlaceDecision place;
};

/// segment -> encode -> fuse against both queries -> pick -> crop -> place.
ActResult act(const Grid2D& obs, const std::string& instruction, const EncoderParams& encoders,
              const PolicyNets& nets, const PolicyConfig& config = {}, const PerceptionOverrides& overrides = {});

/// Structured-text record of a decision: queries, poses, angle and per-instance scores.
std::string decision_record(const ActResult& result);

}  // namespace arrange

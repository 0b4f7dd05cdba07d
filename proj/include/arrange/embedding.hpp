#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "arrange/grid.hpp"
#include "arrange/scene.hpp"

namespace arrange {

inline constexpr int kVisualFeatureDim = 19;  // 12 histogram bins + 7 shape descriptors
inline constexpr int kTextFeatureDim = 19;    // 12 colors + 5 kinds + 2 qualifiers
inline constexpr int kDefaultEmbeddingDim = 32;
inline constexpr double kLayerNormEps = 1e-5;

struct EmbeddingVector {
  std::vector<double> values;
  bool normalized = false;

  int dim() const { return static_cast<int>(values.size()); }
  bool operator==(const EmbeddingVector&) const = default;
};

/// Scales to unit L2 norm; throws DegenerateEmbeddingError on a zero vector.
EmbeddingVector normalized(std::vector<double> values);
/// Rounds every component to the nearest float32 value.
EmbeddingVector quantize_f32(EmbeddingVector e);

enum class Qualifier { plural, pile };

struct TextQuery {
  std::string raw;
  std::optional<std::string> color;
  std::optional<ObjectKind> noun;
  std::vector<Qualifier> qualifiers;
};

/// Attribute extraction; throws ParseError when neither a color nor a noun is present.
TextQuery parse_query(std::string_view raw);
std::array<double, kTextFeatureDim> text_features(const TextQuery& q);

/// Palette bin of a pixel by RGB direction (intensity invariant), ties to the lower index.
int palette_bin(double r, double g, double b);

/// 19 descriptors of the non-zero pixels of a 3-channel crop: palette histogram
/// (L1), area fraction, aspect ratio, fill ratio, three central second moments
/// and the sine of the doubled principal angle (0 for isotropic shapes). An
/// empty crop gives zeros.
std::array<double, kVisualFeatureDim> featurize_visual(const Grid2D& crop);

enum class Slot {
  visual_proj_weight,
  visual_proj_bias,
  visual_norm_gain,
  visual_norm_bias,
  text_proj_weight,
  text_proj_bias,
  ffn_proj_bias,
};
inline constexpr int kSlotCount = 7;
inline constexpr std::array<Slot, kSlotCount> kAllSlots = {
    Slot::visual_proj_weight, Slot::visual_proj_bias, Slot::visual_norm_gain, Slot::visual_norm_bias,
    Slot::text_proj_weight,   Slot::text_proj_bias,   Slot::ffn_proj_bias};
std::string_view slot_name(Slot slot);
std::optional<Slot> parse_slot(std::string_view name);

struct EncoderParams {
  int dim = kDefaultEmbeddingDim;
  std::vector<double> visual_proj_weight;  // kVisualFeatureDim x dim, row-major
  std::vector<double> visual_proj_bias;    // dim
  std::vector<double> visual_norm_gain;    // kVisualFeatureDim
  std::vector<double> visual_norm_bias;    // kVisualFeatureDim
  std::vector<double> text_proj_weight;    // kTextFeatureDim x dim
  std::vector<double> text_proj_bias;      // dim
  std::vector<double> ffn_proj_bias;       // dim

  /// Zero projections, unit gain.
  static EncoderParams zeros(int dim = kDefaultEmbeddingDim);

  std::vector<double>& slot(Slot s);
  const std::vector<double>& slot(Slot s) const;
  /// Throws ShapeError/ParameterError when shapes or values are invalid.
  void validate() const;
  bool operator==(const EncoderParams&) const = default;
};

/// Constants of the oracle-aligned initialization. Embedding axes 0-11 carry
/// color, 12-16 kind and 17 a shared component common to every input.
struct OracleInit {
  double color_weight = 1.0;
  double kind_weight = 0.3;
  double common_weight = 0.5;
  double noise = 0.01;
  double ridge = 1e-6;
};

/// Text rows map attribute slots onto their axes; the visual projection is the
/// ridge least-squares map from layer-normalized features of rendered
/// prototypes (every palette color and kind, rotated and partly covered) onto
/// the same targets. Seeded uniform noise of +-noise is added to both projections.
EncoderParams oracle_aligned_params(std::uint64_t seed, const OracleInit& init = {}, int dim = kDefaultEmbeddingDim);

/// Adds seeded uniform noise in [-amplitude, amplitude] to both projection matrices.
void perturb_projections(EncoderParams& params, double amplitude, std::uint64_t seed);

/// Intermediate values of the visual path, kept for backpropagation.
struct VisualForward {
  std::array<double, kVisualFeatureDim> features{};
  std::array<double, kVisualFeatureDim> xhat{};
  double inv_std = 0.0;
  std::array<double, kVisualFeatureDim> normed{};
  std::vector<double> pre;  // projection output before normalization
  double norm = 0.0;
  std::vector<double> out;  // unit-norm embedding (full precision)
};
VisualForward visual_forward(const std::array<double, kVisualFeatureDim>& features, const EncoderParams& params);

struct TextForward {
  std::array<double, kTextFeatureDim> features{};
  std::vector<double> pre;
  double norm = 0.0;
  std::vector<double> out;
};
TextForward text_forward(const std::array<double, kTextFeatureDim>& features, const EncoderParams& params);

/// Accumulates d(loss)/d(params) given d(loss)/d(embedding) into grads.
void visual_backward(const VisualForward& fwd, const EncoderParams& params, const std::vector<double>& grad_out,
                     EncoderParams& grads);
void text_backward(const TextForward& fwd, const EncoderParams& params, const std::vector<double>& grad_out,
                   EncoderParams& grads);

/// Unit-norm embeddings rounded to float32 precision, so they survive the
/// exchange file bit for bit.
EmbeddingVector encode_visual(const Grid2D& crop, const EncoderParams& params);
EmbeddingVector encode_text(const TextQuery& query, const EncoderParams& params);

enum class PartitionPolicy { none, text_ffn_bias_only, visual_layernorm_only, both, all };

struct ParameterPartition {
  PartitionPolicy policy = PartitionPolicy::none;
  std::vector<Slot> slots;
  bool contains(Slot s) const;
};

std::string_view partition_name(PartitionPolicy policy);
PartitionPolicy parse_partition(std::string_view name);
ParameterPartition resolve_partition(PartitionPolicy policy);
ParameterPartition resolve_partition(std::string_view name);

/// Exchange file: header "arrange-emb/1 dim=<d> count=<n>", then one line per
/// vector: "<id>" followed by d little-endian float32 values as 8 hex digits.
std::string export_embeddings(const std::vector<EmbeddingVector>& vectors, const std::vector<int>& ids);
std::map<int, EmbeddingVector> import_embeddings(const std::string& text);

/// Float32 hex helpers shared by the exchange and checkpoint formats.
std::string f32_hex(double x);
double parse_f32_hex(std::string_view hex);

}  // namespace arrange

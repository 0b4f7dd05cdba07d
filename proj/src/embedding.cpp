#include "arrange/embedding.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <numbers>
#include <sstream>

#include "arrange/rng.hpp"
#include "arrange/segmentation.hpp"

namespace arrange {

EmbeddingVector normalized(std::vector<double> values) {
  double sq = 0.0;
  for (double x : values) sq += x * x;
  const double n = std::sqrt(sq);
  if (!(n > 0.0) || !std::isfinite(n)) throw DegenerateEmbeddingError("cannot normalize a zero or non-finite vector");
  for (double& x : values) x /= n;
  return {std::move(values), true};
}

EmbeddingVector quantize_f32(EmbeddingVector e) {
  for (double& x : e.values) x = static_cast<double>(static_cast<float>(x));
  return e;
}

namespace {

std::vector<std::string> tokenize(std::string_view raw) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : raw) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace

TextQuery parse_query(std::string_view raw) {
  TextQuery q;
  q.raw = std::string(raw);
  bool pile = false;
  bool plural = false;
  for (const std::string& tok : tokenize(raw)) {
    if (!q.color && palette_index(tok) >= 0) {
      q.color = tok;
    } else if (!q.noun) {
      if (const auto kind = parse_kind(tok)) {
        q.noun = *kind;
        plural = tok != kind_name(*kind);
      }
    }
    if (tok == "pile" || tok == "piles") pile = true;
  }
  if (!q.color && !q.noun) throw ParseError("text query '" + q.raw + "' names no known color or object");
  if (plural) q.qualifiers.push_back(Qualifier::plural);
  if (pile) q.qualifiers.push_back(Qualifier::pile);
  return q;
}

std::array<double, kTextFeatureDim> text_features(const TextQuery& q) {
  std::array<double, kTextFeatureDim> f{};
  if (q.color) f[static_cast<std::size_t>(palette_index(*q.color))] = 1.0;
  if (q.noun) f[kPaletteSize + static_cast<std::size_t>(*q.noun)] = 1.0;
  for (Qualifier ql : q.qualifiers) f[kPaletteSize + kKindCount + static_cast<std::size_t>(ql)] = 1.0;
  return f;
}

int palette_bin(double r, double g, double b) {
  const double n = std::sqrt(r * r + g * g + b * b);
  int best = 0;
  double best_cos = -2.0;
  const auto& pal = palette();
  for (std::size_t i = 0; i < pal.size(); ++i) {
    const Rgb c = pal[i].rgb;
    const double cn = std::sqrt(double(c.r) * c.r + double(c.g) * c.g + double(c.b) * c.b);
    const double cs = (r * c.r + g * c.g + b * c.b) / (n * cn);
    if (cs > best_cos) {
      best_cos = cs;
      best = static_cast<int>(i);
    }
  }
  return best;
}

std::array<double, kVisualFeatureDim> featurize_visual(const Grid2D& crop) {
  if (crop.channels() != 3) throw ShapeError("featurize_visual: crop must have 3 channels");
  std::array<double, kVisualFeatureDim> f{};
  int count = 0;
  int r0 = crop.height(), c0 = crop.width(), r1 = -1, c1 = -1;
  double sr = 0.0, sc = 0.0;
  for (int r = 0; r < crop.height(); ++r) {
    for (int c = 0; c < crop.width(); ++c) {
      const double R = crop.at(r, c, 0), G = crop.at(r, c, 1), B = crop.at(r, c, 2);
      if (R == 0.0 && G == 0.0 && B == 0.0) continue;
      f[static_cast<std::size_t>(palette_bin(R, G, B))] += 1.0;
      ++count;
      sr += r;
      sc += c;
      r0 = std::min(r0, r);
      c0 = std::min(c0, c);
      r1 = std::max(r1, r);
      c1 = std::max(c1, c);
    }
  }
  if (count == 0) return f;
  const double n = count;
  for (int k = 0; k < kPaletteSize; ++k) f[k] /= n;
  const double mr = sr / n, mc = sc / n;
  double mu20 = 0.0, mu02 = 0.0, mu11 = 0.0;
  for (int r = r0; r <= r1; ++r) {
    for (int c = c0; c <= c1; ++c) {
      if (crop.at(r, c, 0) == 0.0 && crop.at(r, c, 1) == 0.0 && crop.at(r, c, 2) == 0.0) continue;
      mu20 += (r - mr) * (r - mr);
      mu02 += (c - mc) * (c - mc);
      mu11 += (r - mr) * (c - mc);
    }
  }
  mu20 /= n;
  mu02 /= n;
  mu11 /= n;
  const double bh = r1 - r0 + 1, bw = c1 - c0 + 1;
  std::size_t k = kPaletteSize;
  f[k++] = n / (static_cast<double>(crop.height()) * crop.width());
  f[k++] = std::min(bh, bw) / std::max(bh, bw);
  f[k++] = n / (bh * bw);
  // Moments are scaled so a 64-pixel-wide object stays in a unit range.
  f[k++] = mu20 / 32.0;
  f[k++] = mu02 / 32.0;
  f[k++] = mu11 / 32.0;
  // Orientation as the sine of the doubled principal angle; its cosine is
  // fixed by the moments already present.
  const double anis = std::hypot(mu20 - mu02, 2.0 * mu11);
  if (anis > 1e-12) f[k] = 2.0 * mu11 / anis;
  return f;
}

std::string_view slot_name(Slot slot) {
  switch (slot) {
    case Slot::visual_proj_weight: return "visual_proj.weight";
    case Slot::visual_proj_bias: return "visual_proj.bias";
    case Slot::visual_norm_gain: return "visual_norm.gain";
    case Slot::visual_norm_bias: return "visual_norm.bias";
    case Slot::text_proj_weight: return "text_proj.weight";
    case Slot::text_proj_bias: return "text_proj.bias";
    case Slot::ffn_proj_bias: return "ffn_proj_bias";
  }
  return "";
}

std::optional<Slot> parse_slot(std::string_view name) {
  for (Slot s : kAllSlots)
    if (slot_name(s) == name) return s;
  return std::nullopt;
}

EncoderParams EncoderParams::zeros(int dim) {
  if (dim < 1) throw ParameterError("embedding dim must be >= 1");
  EncoderParams p;
  p.dim = dim;
  p.visual_proj_weight.assign(static_cast<std::size_t>(kVisualFeatureDim) * dim, 0.0);
  p.visual_proj_bias.assign(dim, 0.0);
  p.visual_norm_gain.assign(kVisualFeatureDim, 1.0);
  p.visual_norm_bias.assign(kVisualFeatureDim, 0.0);
  p.text_proj_weight.assign(static_cast<std::size_t>(kTextFeatureDim) * dim, 0.0);
  p.text_proj_bias.assign(dim, 0.0);
  p.ffn_proj_bias.assign(dim, 0.0);
  return p;
}

std::vector<double>& EncoderParams::slot(Slot s) {
  return const_cast<std::vector<double>&>(static_cast<const EncoderParams&>(*this).slot(s));
}

const std::vector<double>& EncoderParams::slot(Slot s) const {
  switch (s) {
    case Slot::visual_proj_weight: return visual_proj_weight;
    case Slot::visual_proj_bias: return visual_proj_bias;
    case Slot::visual_norm_gain: return visual_norm_gain;
    case Slot::visual_norm_bias: return visual_norm_bias;
    case Slot::text_proj_weight: return text_proj_weight;
    case Slot::text_proj_bias: return text_proj_bias;
    case Slot::ffn_proj_bias: return ffn_proj_bias;
  }
  return ffn_proj_bias;
}

void EncoderParams::validate() const {
  const std::size_t d = static_cast<std::size_t>(dim);
  const std::pair<Slot, std::size_t> shapes[] = {
      {Slot::visual_proj_weight, kVisualFeatureDim * d}, {Slot::visual_proj_bias, d},
      {Slot::visual_norm_gain, kVisualFeatureDim},       {Slot::visual_norm_bias, kVisualFeatureDim},
      {Slot::text_proj_weight, kTextFeatureDim * d},     {Slot::text_proj_bias, d},
      {Slot::ffn_proj_bias, d}};
  for (const auto& [s, n] : shapes) {
    if (slot(s).size() != n) {
      throw ShapeError("encoder slot " + std::string(slot_name(s)) + " has " + std::to_string(slot(s).size()) +
                       " values, expected " + std::to_string(n));
    }
    for (double x : slot(s))
      if (!std::isfinite(x)) throw ParameterError("encoder slot " + std::string(slot_name(s)) + " is not finite");
  }
}

VisualForward visual_forward(const std::array<double, kVisualFeatureDim>& features, const EncoderParams& params) {
  VisualForward f;
  f.features = features;
  double mean = 0.0;
  for (double x : features) mean += x;
  mean /= kVisualFeatureDim;
  double var = 0.0;
  for (double x : features) var += (x - mean) * (x - mean);
  var /= kVisualFeatureDim;
  f.inv_std = 1.0 / std::sqrt(var + kLayerNormEps);
  for (int i = 0; i < kVisualFeatureDim; ++i) {
    f.xhat[i] = (features[i] - mean) * f.inv_std;
    f.normed[i] = params.visual_norm_gain[i] * f.xhat[i] + params.visual_norm_bias[i];
  }
  const int d = params.dim;
  f.pre = params.visual_proj_bias;
  for (int i = 0; i < kVisualFeatureDim; ++i) {
    const double y = f.normed[i];
    const double* w = &params.visual_proj_weight[static_cast<std::size_t>(i) * d];
    for (int k = 0; k < d; ++k) f.pre[k] += y * w[k];
  }
  double sq = 0.0;
  for (double z : f.pre) sq += z * z;
  f.norm = std::sqrt(sq);
  if (!(f.norm > 0.0) || !std::isfinite(f.norm)) {
    throw DegenerateEmbeddingError("visual projection produced a zero or non-finite vector");
  }
  f.out.resize(d);
  for (int k = 0; k < d; ++k) f.out[k] = f.pre[k] / f.norm;
  return f;
}

TextForward text_forward(const std::array<double, kTextFeatureDim>& features, const EncoderParams& params) {
  TextForward f;
  f.features = features;
  const int d = params.dim;
  f.pre.assign(d, 0.0);
  for (int i = 0; i < kTextFeatureDim; ++i) {
    if (features[i] == 0.0) continue;
    const double* w = &params.text_proj_weight[static_cast<std::size_t>(i) * d];
    for (int k = 0; k < d; ++k) f.pre[k] += features[i] * w[k];
  }
  for (int k = 0; k < d; ++k) f.pre[k] += params.text_proj_bias[k] + params.ffn_proj_bias[k];
  double sq = 0.0;
  for (double z : f.pre) sq += z * z;
  f.norm = std::sqrt(sq);
  if (!(f.norm > 0.0) || !std::isfinite(f.norm)) {
    throw DegenerateEmbeddingError("text projection produced a zero or non-finite vector");
  }
  f.out.resize(d);
  for (int k = 0; k < d; ++k) f.out[k] = f.pre[k] / f.norm;
  return f;
}

namespace {

// Gradient through e = z / |z|.
std::vector<double> unnormalize_grad(const std::vector<double>& out, double norm, const std::vector<double>& g) {
  double dot = 0.0;
  for (std::size_t k = 0; k < out.size(); ++k) dot += out[k] * g[k];
  std::vector<double> gz(out.size());
  for (std::size_t k = 0; k < out.size(); ++k) gz[k] = (g[k] - out[k] * dot) / norm;
  return gz;
}

}  // namespace

void visual_backward(const VisualForward& fwd, const EncoderParams& params, const std::vector<double>& grad_out,
                     EncoderParams& grads) {
  const int d = params.dim;
  const std::vector<double> gz = unnormalize_grad(fwd.out, fwd.norm, grad_out);
  for (int k = 0; k < d; ++k) grads.visual_proj_bias[k] += gz[k];
  for (int i = 0; i < kVisualFeatureDim; ++i) {
    const double* w = &params.visual_proj_weight[static_cast<std::size_t>(i) * d];
    double* gw = &grads.visual_proj_weight[static_cast<std::size_t>(i) * d];
    double gy = 0.0;
    for (int k = 0; k < d; ++k) {
      gw[k] += fwd.normed[i] * gz[k];
      gy += w[k] * gz[k];
    }
    grads.visual_norm_gain[i] += gy * fwd.xhat[i];
    grads.visual_norm_bias[i] += gy;
  }
}

void text_backward(const TextForward& fwd, const EncoderParams& params, const std::vector<double>& grad_out,
                   EncoderParams& grads) {
  const int d = params.dim;
  const std::vector<double> gz = unnormalize_grad(fwd.out, fwd.norm, grad_out);
  for (int k = 0; k < d; ++k) {
    grads.text_proj_bias[k] += gz[k];
    grads.ffn_proj_bias[k] += gz[k];
  }
  for (int i = 0; i < kTextFeatureDim; ++i) {
    if (fwd.features[i] == 0.0) continue;
    double* gw = &grads.text_proj_weight[static_cast<std::size_t>(i) * d];
    for (int k = 0; k < d; ++k) gw[k] += fwd.features[i] * gz[k];
  }
}

EmbeddingVector encode_visual(const Grid2D& crop, const EncoderParams& params) {
  const VisualForward f = visual_forward(featurize_visual(crop), params);
  return quantize_f32({f.out, true});
}

EmbeddingVector encode_text(const TextQuery& query, const EncoderParams& params) {
  const TextForward f = text_forward(text_features(query), params);
  return quantize_f32({f.out, true});
}

namespace {

constexpr int kCommonAxis = kPaletteSize + kKindCount;

std::vector<double> oracle_target(int color, ObjectKind kind, const OracleInit& init, int dim) {
  std::vector<double> t(dim, 0.0);
  t[color] = init.color_weight;
  t[kPaletteSize + static_cast<int>(kind)] = init.kind_weight;
  t[kCommonAxis] = init.common_weight;
  return t;
}

// Layer-normalized features (unit gain, zero bias) of every palette color and
// kind under the appearances the tasks produce: rotated pickables and
// containers partly covered by pickables of another color.
void collect_prototypes(std::vector<std::array<double, kVisualFeatureDim>>& xs, std::vector<int>& colors,
                        std::vector<ObjectKind>& kinds) {
  auto add = [&](const Scene& scene, int id, int color, ObjectKind kind) {
    const Grid2D img = render(scene);
    const SegmentationResult seg = segment(img, scene.background);
    const SceneObject* o = scene.find(id);
    const Pixel probe = o->pixels().front();
    for (const auto& inst : seg.instances) {
      if (!inst.contains(probe)) continue;
      std::array<double, kVisualFeatureDim> x = featurize_visual(crop(img, inst, kDefaultCropPad));
      double mean = 0.0;
      for (double v : x) mean += v;
      mean /= kVisualFeatureDim;
      double var = 0.0;
      for (double v : x) var += (v - mean) * (v - mean);
      var /= kVisualFeatureDim;
      for (double& v : x) v = (v - mean) / std::sqrt(var + kLayerNormEps);
      xs.push_back(x);
      colors.push_back(color);
      kinds.push_back(kind);
      return;
    }
  };
  const auto& pal = palette();
  const int kinds_all[] = {0, 1, 2, 3, 4};
  for (int c = 0; c < kPaletteSize; ++c) {
    const std::string& other = pal[(c + 5) % kPaletteSize].name;
    for (int ki : kinds_all) {
      const auto kind = static_cast<ObjectKind>(ki);
      const Footprint base = default_footprint(kind);
      const int turns = is_pickable(kind) ? 9 : 1;
      for (int t = 0; t < turns; ++t) {
        Scene s;
        s.objects.push_back({1, kind, pal[c].name, {32, 32, 10 * t}, base.rotated_about({0, 0}, 10 * t)});
        add(s, 1, c, kind);
      }
      if (is_pickable(kind)) continue;
      const Offset spots[] = {{0, 0}, {2, -3}, {-3, 2}};
      for (const Offset& o : spots) {
        Scene s;
        s.objects.push_back({1, ObjectKind::block, other, {32 + o.dr, 32 + o.dc, 0}, default_footprint(ObjectKind::block)});
        s.objects.push_back({2, kind, pal[c].name, {32, 32, 0}, base});
        add(s, 2, c, kind);
      }
      if (kind == ObjectKind::zone) {
        Scene s;
        s.objects.push_back({1, ObjectKind::block, other, {28, 28, 0}, default_footprint(ObjectKind::block)});
        s.objects.push_back({2, ObjectKind::block, other, {36, 35, 0}, default_footprint(ObjectKind::block)});
        s.objects.push_back({3, kind, pal[c].name, {32, 32, 0}, base});
        add(s, 3, c, kind);
      }
    }
  }
}

}  // namespace

EncoderParams oracle_aligned_params(std::uint64_t seed, const OracleInit& init, int dim) {
  if (dim < kCommonAxis + 1) {
    throw ParameterError("oracle-aligned initialization needs dim >= " + std::to_string(kCommonAxis + 1));
  }
  EncoderParams p = EncoderParams::zeros(dim);
  for (int c = 0; c < kPaletteSize; ++c) p.text_proj_weight[static_cast<std::size_t>(c) * dim + c] = init.color_weight;
  for (int k = 0; k < kKindCount; ++k) {
    const int row = kPaletteSize + k;
    p.text_proj_weight[static_cast<std::size_t>(row) * dim + row] = init.kind_weight;
  }
  p.text_proj_bias[kCommonAxis] = init.common_weight;

  std::vector<std::array<double, kVisualFeatureDim>> xs;
  std::vector<int> colors;
  std::vector<ObjectKind> kinds;
  collect_prototypes(xs, colors, kinds);
  const int n = static_cast<int>(xs.size());
  constexpr int kCols = kVisualFeatureDim + 1;  // features plus a constant for the bias
  Eigen::MatrixXd X(n, kCols);
  Eigen::MatrixXd T(n, dim);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < kVisualFeatureDim; ++j) X(i, j) = xs[i][j];
    X(i, kVisualFeatureDim) = 1.0;
    const auto t = oracle_target(colors[i], kinds[i], init, dim);
    for (int k = 0; k < dim; ++k) T(i, k) = t[k];
  }
  const Eigen::MatrixXd A = X.transpose() * X + init.ridge * Eigen::MatrixXd::Identity(kCols, kCols);
  const Eigen::MatrixXd W = A.ldlt().solve(X.transpose() * T);
  for (int j = 0; j < kVisualFeatureDim; ++j)
    for (int k = 0; k < dim; ++k) p.visual_proj_weight[static_cast<std::size_t>(j) * dim + k] = W(j, k);
  for (int k = 0; k < dim; ++k) p.visual_proj_bias[k] = W(kVisualFeatureDim, k);

  perturb_projections(p, init.noise, seed);
  return p;
}

void perturb_projections(EncoderParams& params, double amplitude, std::uint64_t seed) {
  if (amplitude == 0.0) return;
  Rng rng(derive_seed(seed, 0xE4C0DE));
  for (double& w : params.visual_proj_weight) w += rng.uniform(-amplitude, amplitude);
  for (double& w : params.text_proj_weight) w += rng.uniform(-amplitude, amplitude);
}

bool ParameterPartition::contains(Slot s) const { return std::find(slots.begin(), slots.end(), s) != slots.end(); }

std::string_view partition_name(PartitionPolicy policy) {
  switch (policy) {
    case PartitionPolicy::none: return "none";
    case PartitionPolicy::text_ffn_bias_only: return "text_ffn_bias_only";
    case PartitionPolicy::visual_layernorm_only: return "visual_layernorm_only";
    case PartitionPolicy::both: return "both";
    case PartitionPolicy::all: return "all";
  }
  return "none";
}

PartitionPolicy parse_partition(std::string_view name) {
  for (PartitionPolicy p : {PartitionPolicy::none, PartitionPolicy::text_ffn_bias_only,
                            PartitionPolicy::visual_layernorm_only, PartitionPolicy::both, PartitionPolicy::all}) {
    if (partition_name(p) == name) return p;
  }
  throw ParameterError("unknown partition policy '" + std::string(name) +
                       "' (expected none|text_ffn_bias_only|visual_layernorm_only|both|all)");
}

ParameterPartition resolve_partition(PartitionPolicy policy) {
  ParameterPartition p{policy, {}};
  switch (policy) {
    case PartitionPolicy::none: break;
    case PartitionPolicy::text_ffn_bias_only: p.slots = {Slot::ffn_proj_bias}; break;
    case PartitionPolicy::visual_layernorm_only: p.slots = {Slot::visual_norm_gain, Slot::visual_norm_bias}; break;
    case PartitionPolicy::both: p.slots = {Slot::ffn_proj_bias, Slot::visual_norm_gain, Slot::visual_norm_bias}; break;
    case PartitionPolicy::all: p.slots.assign(kAllSlots.begin(), kAllSlots.end()); break;
  }
  return p;
}

ParameterPartition resolve_partition(std::string_view name) { return resolve_partition(parse_partition(name)); }

std::string f32_hex(double x) {
  const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(x));
  static const char* digits = "0123456789abcdef";
  std::string out(8, '0');
  for (int b = 0; b < 4; ++b) {
    const unsigned byte = (bits >> (8 * b)) & 0xFFu;
    out[2 * b] = digits[byte >> 4];
    out[2 * b + 1] = digits[byte & 0xF];
  }
  return out;
}

double parse_f32_hex(std::string_view hex) {
  if (hex.size() != 8) throw FormatError("float32 hex field must have 8 digits, got '" + std::string(hex) + "'");
  std::uint32_t bits = 0;
  for (int b = 0; b < 4; ++b) {
    unsigned byte = 0;
    for (int i = 0; i < 2; ++i) {
      const char ch = static_cast<char>(std::tolower(static_cast<unsigned char>(hex[2 * b + i])));
      unsigned v;
      if (ch >= '0' && ch <= '9') {
        v = static_cast<unsigned>(ch - '0');
      } else if (ch >= 'a' && ch <= 'f') {
        v = static_cast<unsigned>(ch - 'a' + 10);
      } else {
        throw FormatError("bad hex digit in '" + std::string(hex) + "'");
      }
      byte = byte * 16 + v;
    }
    bits |= static_cast<std::uint32_t>(byte) << (8 * b);
  }
  return static_cast<double>(std::bit_cast<float>(bits));
}

std::string export_embeddings(const std::vector<EmbeddingVector>& vectors, const std::vector<int>& ids) {
  if (vectors.size() != ids.size()) throw ParameterError("export_embeddings: vectors and ids differ in length");
  const int dim = vectors.empty() ? 0 : vectors.front().dim();
  std::string out = "arrange-emb/1 dim=" + std::to_string(dim) + " count=" + std::to_string(vectors.size()) + "\n";
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    if (vectors[i].dim() != dim) throw ShapeError("export_embeddings: vectors differ in dimension");
    out += std::to_string(ids[i]);
    for (double x : vectors[i].values) {
      out.push_back(' ');
      out += f32_hex(x);
    }
    out.push_back('\n');
  }
  return out;
}

std::map<int, EmbeddingVector> import_embeddings(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("embedding file is empty");
  int dim = -1;
  long count = -1;
  {
    std::istringstream hs(line);
    std::string magic, d, c, extra;
    hs >> magic >> d >> c;
    if (magic != "arrange-emb/1" || d.rfind("dim=", 0) != 0 || c.rfind("count=", 0) != 0 || (hs >> extra)) {
      throw FormatError("bad embedding header '" + line + "'");
    }
    try {
      dim = std::stoi(d.substr(4));
      count = std::stol(c.substr(6));
    } catch (const std::exception&) {
      throw FormatError("bad embedding header '" + line + "'");
    }
    if (dim < 1 || count < 0) throw FormatError("bad embedding header '" + line + "'");
  }
  std::map<int, EmbeddingVector> out;
  long seen = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string id_tok;
    ls >> id_tok;
    int id = 0;
    try {
      std::size_t used = 0;
      id = std::stoi(id_tok, &used);
      if (used != id_tok.size()) throw FormatError("");
    } catch (const std::exception&) {
      throw FormatError("bad embedding id '" + id_tok + "'");
    }
    EmbeddingVector e;
    std::string tok;
    while (ls >> tok) e.values.push_back(parse_f32_hex(tok));
    if (e.dim() != dim) {
      throw FormatError("embedding " + std::to_string(id) + " has " + std::to_string(e.dim()) +
                        " values, header declares dim=" + std::to_string(dim));
    }
    double sq = 0.0;
    for (double x : e.values) sq += x * x;
    e.normalized = std::abs(std::sqrt(sq) - 1.0) < 1e-6;
    if (!out.emplace(id, std::move(e)).second) throw FormatError("duplicate embedding id " + std::to_string(id));
    ++seen;
  }
  if (seen != count) {
    throw FormatError("embedding file declares count=" + std::to_string(count) + " but holds " + std::to_string(seen));
  }
  return out;
}

}  // namespace arrange

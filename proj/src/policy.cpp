#include "arrange/policy.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>
#include <sstream>

#include "arrange/parallel.hpp"
#include "arrange/rng.hpp"

namespace arrange {

namespace {

std::vector<std::string> words(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string w;
  while (in >> w) {
    std::transform(w.begin(), w.end(), w.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    out.push_back(w);
  }
  return out;
}

bool one_of(const std::string& w, std::initializer_list<const char*> options) {
  for (const char* o : options)
    if (w == o) return true;
  return false;
}

bool is_color(const std::string& w) { return palette_index(w) >= 0; }
bool is_noun(const std::string& w) { return parse_kind(w).has_value(); }

const std::vector<std::string>& templates() {
  static const std::vector<std::string> t = {
      "put the <color> <object> in a <color> <object>",
      "pack the <color> <object> in the <color> <object>",
      "push the pile of <color> <object> into the <color> <object>",
  };
  return t;
}

bool token_matches(const std::string& pattern, const std::string& w) {
  if (pattern == "<color>") return is_color(w);
  if (pattern == "<object>") return is_noun(w);
  return pattern == w;
}

std::size_t token_distance(const std::vector<std::string>& pattern, const std::vector<std::string>& tokens) {
  std::vector<std::size_t> prev(tokens.size() + 1), cur(tokens.size() + 1);
  for (std::size_t j = 0; j <= tokens.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= pattern.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= tokens.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (token_matches(pattern[i - 1], tokens[j - 1]) ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[tokens.size()];
}

[[noreturn]] void grammar_error(const std::string& instruction) {
  const auto tokens = words(instruction);
  std::size_t best = 0;
  std::size_t best_d = static_cast<std::size_t>(-1);
  for (std::size_t i = 0; i < templates().size(); ++i) {
    const std::size_t d = token_distance(words(templates()[i]), tokens);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  throw ParseError("instruction '" + instruction + "' does not match the grammar; nearest template: '" +
                   templates()[best] + "'");
}

}  // namespace

InstructionPair filter_text(const std::string& instruction) {
  const auto w = words(instruction);
  std::size_t i = 0;
  auto at = [&](std::size_t k) -> const std::string& {
    static const std::string empty;
    return k < w.size() ? w[k] : empty;
  };
  if (!one_of(at(i++), {"put", "pack", "push", "place", "move"})) grammar_error(instruction);
  const std::string det1 = at(i++);
  if (!one_of(det1, {"the", "a", "an"})) grammar_error(instruction);
  std::string tl_np;
  if (at(i) == "pile" && at(i + 1) == "of") {
    tl_np = "pile of ";
    i += 2;
  }
  const std::string color1 = at(i++);
  const std::string noun1 = at(i++);
  if (!is_color(color1) || !is_noun(noun1)) grammar_error(instruction);
  if (!one_of(at(i++), {"in", "into", "on", "onto"})) grammar_error(instruction);
  const std::string det2 = at(i++);
  if (!one_of(det2, {"the", "a", "an"})) grammar_error(instruction);
  const std::string color2 = at(i++);
  const std::string noun2 = at(i++);
  if (!is_color(color2) || !is_noun(noun2) || i != w.size()) grammar_error(instruction);
  return {parse_query("a photo of " + det1 + " " + tl_np + color1 + " " + noun1),
          parse_query("a photo of " + det2 + " " + color2 + " " + noun2)};
}

ConvStack::ConvStack(int in_channels, int out_channels, int hidden_channels)
    : hidden(3, 3, in_channels, hidden_channels), output(1, 1, hidden_channels, out_channels) {}

StackCache stack_forward(const ConvStack& stack, const Grid2D& input) {
  StackCache c;
  c.input = input;
  c.hidden = conv_forward(stack.hidden, input);
  for (double& x : c.hidden.data()) x = std::max(x, 0.0);
  c.output = conv_forward(stack.output, c.hidden);
  return c;
}

Grid2D stack_backward(const ConvStack& stack, const StackCache& cache, const Grid2D& grad_out, ConvStack& grads) {
  ConvGrads g2 = conv_backward(stack.output, cache.hidden, grad_out);
  for (std::size_t i = 0; i < g2.kernel.size(); ++i) grads.output.kernel[i] += g2.kernel[i];
  for (std::size_t i = 0; i < g2.bias.size(); ++i) grads.output.bias[i] += g2.bias[i];
  Grid2D gh = std::move(g2.input);
  const auto h = cache.hidden.data();
  auto ghd = gh.data();
  for (std::size_t i = 0; i < ghd.size(); ++i)
    if (h[i] <= 0.0) ghd[i] = 0.0;
  ConvGrads g1 = conv_backward(stack.hidden, cache.input, gh);
  for (std::size_t i = 0; i < g1.kernel.size(); ++i) grads.hidden.kernel[i] += g1.kernel[i];
  for (std::size_t i = 0; i < g1.bias.size(); ++i) grads.hidden.bias[i] += g1.bias[i];
  return std::move(g1.input);
}

void PolicyNets::validate() const {
  for (const ConvStack* s : {&tl_head, &phi, &psi}) {
    s->hidden.validate();
    s->output.validate();
    if (s->hidden.out_channels != s->output.in_channels) throw ShapeError("PolicyNets: hidden width mismatch");
  }
  if (tl_head.in_channels() != 4 || phi.in_channels() != 4 || psi.in_channels() != 3) {
    throw ShapeError("PolicyNets: heads take 4 input channels, psi takes 3");
  }
  if (tl_head.out_channels() != 1) throw ShapeError("PolicyNets: tl_head must output one channel");
  if (phi.out_channels() != psi.out_channels()) throw ShapeError("PolicyNets: phi and psi output widths differ");
}

PolicyNets PolicyNets::random(std::uint64_t seed, int feature_channels) {
  PolicyNets n{ConvStack(4, 1), ConvStack(4, feature_channels), ConvStack(3, feature_channels)};
  Rng rng(derive_seed(seed, 0x9E7));
  for (ConvStack* s : {&n.tl_head, &n.phi, &n.psi}) {
    for (ConvLayer* l : {&s->hidden, &s->output}) {
      const double fan_in = static_cast<double>(l->kernel_h) * l->kernel_w * l->in_channels;
      const double a = std::sqrt(6.0 / fan_in);
      for (double& w : l->kernel) w = rng.uniform(-a, a);
      for (double& b : l->bias) b = rng.uniform(-kRandomBiasRange, kRandomBiasRange);
    }
  }
  return n;
}

PolicyNets PolicyNets::oracle(int feature_channels) {
  PolicyNets n{ConvStack(4, 1), ConvStack(4, feature_channels), ConvStack(3, feature_channels)};
  // relu(conf + 1) - 1 == conf, since confidence never drops below -1.
  for (ConvStack* s : {&n.tl_head, &n.phi}) {
    s->hidden.weight(1, 1, 3, 0) = 1.0;
    s->hidden.bias[0] = 1.0;
    s->output.weight(0, 0, 0, 0) = 1.0;
    s->output.bias[0] = -1.0;
  }
  // Occupancy: min(10 * (r + g + b), 1) via the difference of two ReLUs.
  for (int ch = 0; ch < 3; ++ch) {
    n.psi.hidden.weight(1, 1, ch, 0) = 10.0;
    n.psi.hidden.weight(1, 1, ch, 1) = 10.0;
  }
  n.psi.hidden.bias[1] = -1.0;
  n.psi.output.weight(0, 0, 0, 0) = 1.0;
  n.psi.output.weight(0, 0, 1, 0) = -1.0;
  return n;
}

Grid2D head_input(const Grid2D& obs, const Grid2D& confidence) {
  if (obs.channels() != 3 || confidence.channels() != 1) throw ShapeError("head_input: need RGB obs and 1-channel map");
  if (obs.height() != confidence.height() || obs.width() != confidence.width()) {
    throw ShapeError("head_input: observation and confidence map differ in size");
  }
  Grid2D x(obs.height(), obs.width(), 4);
  for (int r = 0; r < obs.height(); ++r)
    for (int c = 0; c < obs.width(); ++c) {
      for (int k = 0; k < 3; ++k) x.at(r, c, k) = obs.at(r, c, k) / 255.0;
      x.at(r, c, 3) = confidence.at(r, c);
    }
  return x;
}

Grid2D crop_input(const Grid2D& crop) {
  Grid2D x = crop;
  for (double& v : x.data()) v /= 255.0;
  return x;
}

PickDecision predict_pick(const Grid2D& obs, const ConfidenceMap& m_tl, const PolicyNets& nets) {
  StackCache c = stack_forward(nets.tl_head, head_input(obs, m_tl.scores));
  PickDecision d;
  d.score_map = std::move(c.output);
  d.distribution = softmax2d(d.score_map, 1.0);
  d.pose = argmax_pixel(d.score_map);
  return d;
}

Grid2D extract_pick_crop(const Grid2D& obs, Pixel pose, int c) {
  if (c < 1 || c % 2 == 0) throw ParameterError("extract_pick_crop: crop size must be odd and positive");
  const int h = c / 2;
  Grid2D out(c, c, obs.channels());
  for (int r = 0; r < c; ++r)
    for (int q = 0; q < c; ++q) {
      const int sr = pose.u - h + r;
      const int sc = pose.v - h + q;
      if (!obs.in_bounds(sr, sc)) continue;
      for (int k = 0; k < obs.channels(); ++k) out.at(r, q, k) = obs.at(sr, sc, k);
    }
  return out;
}

std::vector<Grid2D> rotated_kernels(const Grid2D& pick_crop, const ConvStack& psi) {
  std::vector<Grid2D> kernels(RotationAngle::kCount);
  const double scale = 1.0 / static_cast<double>(pick_crop.height() * pick_crop.width());
  for (int j = 1; j <= RotationAngle::kCount; ++j) {
    kernels[j - 1] = stack_forward(psi, crop_input(rotate_crop(pick_crop, RotationAngle(j)))).output;
    for (double& x : kernels[j - 1].data()) x *= scale;
  }
  return kernels;
}

PlaceDecision predict_place(const Grid2D& obs, const ConfidenceMap& m_rd, const Grid2D& pick_crop,
                            const PolicyNets& nets) {
  if (pick_crop.channels() != 3) throw ShapeError("predict_place: pick crop must have 3 channels");
  if (nets.phi.out_channels() != nets.psi.out_channels()) throw ShapeError("predict_place: phi/psi width mismatch");
  const Grid2D feature = stack_forward(nets.phi, head_input(obs, m_rd.scores)).output;
  const std::vector<Grid2D> kernels = rotated_kernels(pick_crop, nets.psi);
  PlaceDecision d;
  d.score_volume.resize(RotationAngle::kCount);
  parallel_for(RotationAngle::kCount,
               [&](std::size_t j) { d.score_volume[j] = cross_correlate(feature, kernels[j]); });
  double best = -std::numeric_limits<double>::infinity();
  int best_j = 0;
  std::size_t best_i = 0;
  for (int j = 0; j < RotationAngle::kCount; ++j) {
    const auto s = d.score_volume[j].data();
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] > best) {
        best = s[i];
        best_j = j;
        best_i = i;
        d.maxima = 1;
      } else if (s[i] == best) {
        ++d.maxima;
      }
    }
  }
  d.pose = {static_cast<int>(best_i / obs.width()), static_cast<int>(best_i % obs.width())};
  d.angle = RotationAngle(best_j + 1);
  d.score = best;
  return d;
}

Perception perceive(const Grid2D& obs, const std::string& instruction, const EncoderParams& encoders,
                    const PolicyConfig& config, const PerceptionOverrides& overrides) {
  Perception p;
  p.queries = filter_text(instruction);
  if (overrides.masks) {
    if (overrides.masks->height != obs.height() || overrides.masks->width != obs.width()) {
      throw FormatError("external masks do not match the observation size");
    }
    p.seg = *overrides.masks;
  } else {
    p.seg = segment(obs, config.background, config.min_area);
  }
  if (p.seg.instances.empty()) throw EmptySceneError("no object instances found in the observation");
  if (overrides.embeddings) {
    const auto& m = *overrides.embeddings;
    auto get = [&](int id) {
      const auto it = m.find(id);
      if (it == m.end()) throw FormatError("external embeddings lack id " + std::to_string(id));
      return it->second;
    };
    p.global = get(kGlobalEmbeddingId);
    for (const auto& inst : p.seg.instances) p.instances.push_back(get(inst.id));
    p.tl_text = get(kTlTextEmbeddingId);
    p.rd_text = get(kRdTextEmbeddingId);
  } else {
    p.global = encode_visual(obs, encoders);
    for (const auto& inst : p.seg.instances) p.instances.push_back(encode_visual(crop(obs, inst, config.crop_pad), encoders));
    p.tl_text = encode_text(p.queries.tl_query, encoders);
    p.rd_text = encode_text(p.queries.rd_query, encoders);
  }
  return p;
}

std::pair<std::vector<EmbeddingVector>, std::vector<int>> perception_embeddings(const Perception& p) {
  std::vector<EmbeddingVector> v{p.global};
  std::vector<int> ids{kGlobalEmbeddingId};
  for (std::size_t i = 0; i < p.instances.size(); ++i) {
    v.push_back(p.instances[i]);
    ids.push_back(p.seg.instances[i].id);
  }
  v.push_back(p.tl_text);
  ids.push_back(kTlTextEmbeddingId);
  v.push_back(p.rd_text);
  ids.push_back(kRdTextEmbeddingId);
  return {v, ids};
}

ActResult act(const Grid2D& obs, const std::string& instruction, const EncoderParams& encoders,
              const PolicyNets& nets, const PolicyConfig& config, const PerceptionOverrides& overrides) {
  ActResult r;
  r.perception = perceive(obs, instruction, encoders, config, overrides);
  const Perception& p = r.perception;
  const std::vector<EmbeddingVector> fused = fuse_instances(p.instances, p.global, config.fusion);
  r.m_tl = confidence_map(fused, p.tl_text, p.seg, obs.height(), obs.width());
  r.m_rd = confidence_map(fused, p.rd_text, p.seg, obs.height(), obs.width());
  r.pick = predict_pick(obs, r.m_tl, nets);
  const Grid2D pick_crop = extract_pick_crop(obs, r.pick.pose, config.crop_size);
  r.place = predict_place(obs, r.m_rd, pick_crop, nets);
  return r;
}

std::string decision_record(const ActResult& r) {
  nlohmann::json instances = nlohmann::json::array();
  for (std::size_t i = 0; i < r.perception.seg.instances.size(); ++i) {
    const auto& inst = r.perception.seg.instances[i];
    instances.push_back({{"id", inst.id},
                         {"bbox", {inst.bbox.row0, inst.bbox.col0, inst.bbox.row1, inst.bbox.col1}},
                         {"area", inst.area},
                         {"s_tl", r.m_tl.per_instance[i]},
                         {"s_rd", r.m_rd.per_instance[i]}});
  }
  nlohmann::json j = {{"schema", "arrange-decision/1"},
                      {"tl_query", r.perception.queries.tl_query.raw},
                      {"rd_query", r.perception.queries.rd_query.raw},
                      {"pick", {r.pick.pose.u, r.pick.pose.v}},
                      {"place", {r.place.pose.u, r.place.pose.v}},
                      {"angle_index", r.place.angle.index()},
                      {"angle_degrees", r.place.angle.degrees()},
                      {"place_score", r.place.score},
                      {"instances", instances}};
  return j.dump(2) + "\n";
}

}  // namespace arrange

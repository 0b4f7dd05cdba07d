#include "arrange/training.hpp"

#include <cmath>
#include <map>
#include <sstream>

#include "arrange/parallel.hpp"
#include "arrange/rng.hpp"

namespace arrange {

namespace {

inline constexpr const char* kCheckpointMagic = "arrange-ckpt/1";

using Tensor = std::pair<std::string, std::vector<double>*>;

std::vector<Tensor> net_tensors(PolicyNets& n) {
  std::vector<Tensor> out;
  const std::pair<const char*, ConvStack*> stacks[] = {{"tl_head", &n.tl_head}, {"phi", &n.phi}, {"psi", &n.psi}};
  for (const auto& [name, s] : stacks) {
    const std::string p = name;
    out.push_back({p + ".hidden.kernel", &s->hidden.kernel});
    out.push_back({p + ".hidden.bias", &s->hidden.bias});
    out.push_back({p + ".output.kernel", &s->output.kernel});
    out.push_back({p + ".output.bias", &s->output.bias});
  }
  return out;
}

std::vector<Tensor> encoder_tensors(EncoderParams& e) {
  std::vector<Tensor> out;
  for (Slot s : kAllSlots) out.push_back({"encoder." + std::string(slot_name(s)), &e.slot(s)});
  return out;
}

std::vector<Tensor> all_tensors(PolicyNets& n, EncoderParams& e) {
  auto out = net_tensors(n);
  for (auto& t : encoder_tensors(e)) out.push_back(t);
  return out;
}

// Parameter-independent part of a demonstration: segmentation, descriptors
// and the rotated ground-truth pick crops.
struct Prepared {
  SegmentationResult seg;
  std::vector<std::array<double, kVisualFeatureDim>> instance_features;
  std::array<double, kVisualFeatureDim> global_features{};
  std::array<double, kTextFeatureDim> tl_text{};
  std::array<double, kTextFeatureDim> rd_text{};
  std::vector<Grid2D> rotated_crops;  // crop_input of the pick crop at angles 1..36
};

Prepared prepare(const Demonstration& demo, const PolicyConfig& config) {
  Prepared p;
  const InstructionPair q = filter_text(demo.episode.instruction);
  p.seg = segment(demo.obs, config.background, config.min_area);
  if (p.seg.instances.empty()) throw EmptySceneError("demonstration observation has no instances");
  for (const auto& inst : p.seg.instances) p.instance_features.push_back(featurize_visual(crop(demo.obs, inst, config.crop_pad)));
  p.global_features = featurize_visual(demo.obs);
  p.tl_text = text_features(q.tl_query);
  p.rd_text = text_features(q.rd_query);
  const Grid2D pick_crop = extract_pick_crop(demo.obs, demo.tl_target, config.crop_size);
  for (int j = 1; j <= RotationAngle::kCount; ++j) {
    p.rotated_crops.push_back(crop_input(rotate_crop(pick_crop, RotationAngle(j))));
  }
  return p;
}

// Gradient of -ln(max(p_target, floor)) with respect to the logits.
void cross_entropy_grad(const Distribution2D& d, std::size_t target, double weight, std::vector<double>& out) {
  out.assign(d.probs.size(), 0.0);
  if (weight == 0.0 || d.probs[target] < kProbabilityFloor) return;
  for (std::size_t i = 0; i < d.probs.size(); ++i) out[i] = weight * d.probs[i];
  out[target] -= weight;
}

LossValue evaluate(const Prepared& p, const Demonstration& demo, const PolicyNets& nets, const EncoderParams& enc,
                   const TrainConfig& config, Gradients* grads) {
  const int h = demo.obs.height();
  const int w = demo.obs.width();
  const std::size_t n = p.seg.instances.size();

  std::vector<VisualForward> vf;
  vf.reserve(n);
  std::vector<EmbeddingVector> instances;
  std::vector<std::vector<double>> raw_instances;
  for (const auto& f : p.instance_features) {
    vf.push_back(visual_forward(f, enc));
    instances.push_back({vf.back().out, true});
    raw_instances.push_back(vf.back().out);
  }
  const VisualForward vg = visual_forward(p.global_features, enc);
  const TextForward ttl = text_forward(p.tl_text, enc);
  const TextForward trd = text_forward(p.rd_text, enc);
  const EmbeddingVector global{vg.out, true};
  const std::vector<EmbeddingVector> fused = fuse_instances(instances, global, config.policy.fusion);
  const ConfidenceMap m_tl = confidence_map(fused, {ttl.out, true}, p.seg, h, w);
  const ConfidenceMap m_rd = confidence_map(fused, {trd.out, true}, p.seg, h, w);

  // Pick stage.
  const StackCache tl_cache = stack_forward(nets.tl_head, head_input(demo.obs, m_tl.scores));
  const Distribution2D tl_dist = softmax2d(tl_cache.output, 1.0);
  LossValue out;
  out.l_tl = cross_entropy(tl_dist, demo.tl_target);

  // Place stage: one joint distribution over (angle, pixel), angles stacked along rows.
  const StackCache phi_cache = stack_forward(nets.phi, head_input(demo.obs, m_rd.scores));
  const Grid2D& feature = phi_cache.output;
  std::vector<StackCache> psi_caches(RotationAngle::kCount);
  std::vector<Grid2D> kernels(RotationAngle::kCount);
  const double scale = 1.0 / static_cast<double>(p.rotated_crops[0].height() * p.rotated_crops[0].width());
  Grid2D joint(RotationAngle::kCount * h, w, 1);
  for (int j = 0; j < RotationAngle::kCount; ++j) {
    psi_caches[j] = stack_forward(nets.psi, p.rotated_crops[j]);
    kernels[j] = psi_caches[j].output;
    for (double& x : kernels[j].data()) x *= scale;
    const Grid2D s = cross_correlate(feature, kernels[j]);
    std::copy(s.data().begin(), s.data().end(), joint.data().begin() + static_cast<std::ptrdiff_t>(j) * h * w);
  }
  const Distribution2D rd_dist = softmax2d(joint, 1.0);
  const Pixel rd_cell{(demo.rd_angle.index() - 1) * h + demo.rd_target.u, demo.rd_target.v};
  out.l_rd = cross_entropy(rd_dist, rd_cell);
  out.total = config.lambda_tl * out.l_tl + config.lambda_rd * out.l_rd;
  if (!grads) return out;

  // Pick stage backward.
  std::vector<double> g;
  cross_entropy_grad(tl_dist, static_cast<std::size_t>(demo.tl_target.u) * w + demo.tl_target.v, config.lambda_tl, g);
  Grid2D g_tl(h, w, 1);
  std::copy(g.begin(), g.end(), g_tl.data().begin());
  const Grid2D gin_tl = stack_backward(nets.tl_head, tl_cache, g_tl, grads->nets.tl_head);

  // Place stage backward.
  cross_entropy_grad(rd_dist, static_cast<std::size_t>(rd_cell.u) * w + rd_cell.v, config.lambda_rd, g);
  Grid2D g_feature(h, w, feature.channels());
  for (int j = 0; j < RotationAngle::kCount; ++j) {
    Grid2D g_score(h, w, 1);
    std::copy(g.begin() + static_cast<std::ptrdiff_t>(j) * h * w, g.begin() + static_cast<std::ptrdiff_t>(j + 1) * h * w,
              g_score.data().begin());
    const Grid2D& kernel = kernels[j];
    Grid2D g_kernel(kernel.height(), kernel.width(), kernel.channels());
    cross_correlate_backward(feature, kernel, g_score, g_feature, g_kernel);
    for (double& x : g_kernel.data()) x *= scale;
    stack_backward(nets.psi, psi_caches[j], g_kernel, grads->nets.psi);
  }
  const Grid2D gin_rd = stack_backward(nets.phi, phi_cache, g_feature, grads->nets.phi);

  if (config.partition.slots.empty()) return out;

  // Encoder backward through the confidence channel of both heads.
  const std::vector<double> gs_tl = score_grads_from_map(gin_tl.channel(3), p.seg);
  const std::vector<double> gs_rd = score_grads_from_map(gin_rd.channel(3), p.seg);
  const FusionGrads f_tl = fusion_backward(raw_instances, vg.out, ttl.out, config.policy.fusion, gs_tl);
  const FusionGrads f_rd = fusion_backward(raw_instances, vg.out, trd.out, config.policy.fusion, gs_rd);
  EncoderParams ge = EncoderParams::zeros(enc.dim);
  for (Slot s : kAllSlots) std::fill(ge.slot(s).begin(), ge.slot(s).end(), 0.0);
  auto sum = [](const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
    return r;
  };
  for (std::size_t i = 0; i < n; ++i) visual_backward(vf[i], enc, sum(f_tl.instances[i], f_rd.instances[i]), ge);
  visual_backward(vg, enc, sum(f_tl.global, f_rd.global), ge);
  text_backward(ttl, enc, f_tl.text, ge);
  text_backward(trd, enc, f_rd.text, ge);
  for (Slot s : config.partition.slots) {
    auto& dst = grads->encoders.slot(s);
    const auto& src = ge.slot(s);
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
  return out;
}

void zero_all(PolicyNets& n, EncoderParams& e) {
  for (auto& [name, t] : all_tensors(n, e)) std::fill(t->begin(), t->end(), 0.0);
}

}  // namespace

std::vector<Demonstration> make_demonstrations(const TaskSpec& task, Split split, int count, std::uint64_t seed) {
  if (count < 1) throw ParameterError("make_demonstrations: count must be at least 1");
  std::vector<Demonstration> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    Demonstration d;
    d.episode = make_episode(task, split, derive_seed(seed, static_cast<std::uint64_t>(i)));
    d.obs = render(d.episode.scene);
    d.tl_target = d.episode.gt_pick;
    d.rd_target = {d.episode.gt_place.u, d.episode.gt_place.v};
    d.rd_angle = RotationAngle::nearest(d.episode.gt_place.theta);
    out.push_back(std::move(d));
  }
  return out;
}

void TrainConfig::validate() const {
  if (steps < 1) throw ParameterError("training needs at least one step");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ParameterError("learning rate must be positive");
  if (!(lambda_tl >= 0.0) || !(lambda_rd >= 0.0)) throw ParameterError("loss weights must be non-negative");
}

Gradients Gradients::zeros_like(const PolicyNets& nets, const EncoderParams& encoders) {
  Gradients g{nets, encoders};
  zero_all(g.nets, g.encoders);
  return g;
}

LossValue loss(const Demonstration& demo, const PolicyNets& nets, const EncoderParams& encoders,
               const TrainConfig& config) {
  return evaluate(prepare(demo, config.policy), demo, nets, encoders, config, nullptr);
}

LossValue loss_and_gradients(const Demonstration& demo, const PolicyNets& nets, const EncoderParams& encoders,
                             const TrainConfig& config, Gradients& grads) {
  return evaluate(prepare(demo, config.policy), demo, nets, encoders, config, &grads);
}

TrainResult train_few_shot(const std::vector<Demonstration>& demos, const PolicyNets& nets,
                           const EncoderParams& encoders, const TrainConfig& config) {
  config.validate();
  if (demos.empty()) throw ParameterError("training needs at least one demonstration");
  nets.validate();
  encoders.validate();
  std::vector<Prepared> prepared(demos.size());
  parallel_for(demos.size(), [&](std::size_t i) { prepared[i] = prepare(demos[i], config.policy); });

  TrainResult r{nets, encoders, {}};
  r.trace.reserve(config.steps);
  const double inv_n = 1.0 / static_cast<double>(demos.size());
  for (int step = 0; step < config.steps; ++step) {
    std::vector<Gradients> per_demo(demos.size(), Gradients::zeros_like(r.nets, r.encoders));
    std::vector<LossValue> losses(demos.size());
    parallel_for(demos.size(), [&](std::size_t i) {
      losses[i] = evaluate(prepared[i], demos[i], r.nets, r.encoders, config, &per_demo[i]);
    });
    LossValue mean;
    for (const LossValue& l : losses) {
      mean.total += l.total;
      mean.l_tl += l.l_tl;
      mean.l_rd += l.l_rd;
    }
    mean.total *= inv_n;
    mean.l_tl *= inv_n;
    mean.l_rd *= inv_n;
    if (!std::isfinite(mean.total)) throw DivergenceError("training loss is not finite at step " + std::to_string(step), step);
    r.trace.push_back(mean);

    // Ordered reduction, then one descent step on the mean gradient.
    Gradients total = Gradients::zeros_like(r.nets, r.encoders);
    auto dst = all_tensors(total.nets, total.encoders);
    for (Gradients& g : per_demo) {
      auto src = all_tensors(g.nets, g.encoders);
      for (std::size_t t = 0; t < dst.size(); ++t)
        for (std::size_t i = 0; i < dst[t].second->size(); ++i) (*dst[t].second)[i] += (*src[t].second)[i];
    }
    auto params = net_tensors(r.nets);
    auto gnets = net_tensors(total.nets);
    for (std::size_t t = 0; t < params.size(); ++t)
      for (std::size_t i = 0; i < params[t].second->size(); ++i) {
        const double gi = (*gnets[t].second)[i] * inv_n;
        if (!std::isfinite(gi)) throw DivergenceError("training gradient is not finite at step " + std::to_string(step), step);
        (*params[t].second)[i] -= config.learning_rate * gi;
      }
    for (Slot s : config.partition.slots) {
      auto& p = r.encoders.slot(s);
      const auto& gs = total.encoders.slot(s);
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double gi = gs[i] * inv_n;
        if (!std::isfinite(gi)) throw DivergenceError("training gradient is not finite at step " + std::to_string(step), step);
        p[i] -= config.learning_rate * gi;
      }
    }
  }
  return r;
}

std::vector<ParameterRef> trainable_parameters(const PolicyNets& nets, const EncoderParams& encoders,
                                               const ParameterPartition& partition) {
  PolicyNets n = nets;
  EncoderParams e = encoders;
  std::vector<ParameterRef> out;
  for (const auto& [name, t] : net_tensors(n))
    for (std::size_t i = 0; i < t->size(); ++i) out.push_back({name, i});
  for (Slot s : partition.slots)
    for (std::size_t i = 0; i < e.slot(s).size(); ++i) out.push_back({"encoder." + std::string(slot_name(s)), i});
  return out;
}

double& parameter_at(PolicyNets& nets, EncoderParams& encoders, const ParameterRef& ref) {
  for (auto& [name, t] : all_tensors(nets, encoders)) {
    if (name != ref.name) continue;
    if (ref.index >= t->size()) throw IndexError("parameter index out of range for " + ref.name);
    return (*t)[ref.index];
  }
  throw IndexError("unknown parameter tensor " + ref.name);
}

GradientCheckReport gradient_check(const PolicyNets& nets, const EncoderParams& encoders, const Demonstration& demo,
                                   const TrainConfig& config, int coordinates, std::uint64_t seed) {
  const Prepared p = prepare(demo, config.policy);
  Gradients g = Gradients::zeros_like(nets, encoders);
  evaluate(p, demo, nets, encoders, config, &g);

  GradientCheckReport report;
  for (Slot s : kAllSlots) {
    if (config.partition.contains(s)) continue;
    for (double x : g.encoders.slot(s)) report.frozen_max_abs = std::max(report.frozen_max_abs, std::abs(x));
  }
  std::vector<ParameterRef> refs = trainable_parameters(nets, encoders, config.partition);
  Rng rng(seed);
  rng.shuffle(refs);
  if (coordinates < static_cast<int>(refs.size())) refs.resize(static_cast<std::size_t>(coordinates));

  PolicyNets n = nets;
  EncoderParams e = encoders;
  for (const ParameterRef& ref : refs) {
    GradientCheckEntry entry{ref, parameter_at(g.nets, g.encoders, ref), 0.0, 0.0};
    double& x = parameter_at(n, e, ref);
    const double x0 = x;
    x = x0 + kGradientCheckStep;
    const double up = evaluate(p, demo, n, e, config, nullptr).total;
    x = x0 - kGradientCheckStep;
    const double down = evaluate(p, demo, n, e, config, nullptr).total;
    x = x0;
    entry.numeric = (up - down) / (2.0 * kGradientCheckStep);
    entry.relative_error = std::abs(entry.analytic - entry.numeric) /
                           std::max({std::abs(entry.analytic), std::abs(entry.numeric), kRelativeErrorFloor});
    report.max_relative_error = std::max(report.max_relative_error, entry.relative_error);
    report.entries.push_back(entry);
  }
  return report;
}

std::string save_checkpoint(const Checkpoint& checkpoint) {
  Checkpoint c = checkpoint;
  c.nets.validate();
  c.encoders.validate();
  std::ostringstream out;
  out << kCheckpointMagic << "\n";
  out << "seed " << c.seed << "\n";
  out << "partition " << partition_name(c.partition) << "\n";
  out << "feature_channels " << c.nets.feature_channels() << "\n";
  out << "embedding_dim " << c.encoders.dim << "\n";
  auto tensors = all_tensors(c.nets, c.encoders);
  out << "tensors " << tensors.size() << "\n";
  auto shape_of = [&](const std::string& name, std::size_t size) -> std::string {
    const std::pair<const char*, const ConvStack*> stacks[] = {
        {"tl_head", &c.nets.tl_head}, {"phi", &c.nets.phi}, {"psi", &c.nets.psi}};
    for (const auto& [prefix, s] : stacks) {
      const std::string p = prefix;
      auto dims = [](const ConvLayer& l) {
        return std::to_string(l.kernel_h) + "x" + std::to_string(l.kernel_w) + "x" + std::to_string(l.in_channels) +
               "x" + std::to_string(l.out_channels);
      };
      if (name == p + ".hidden.kernel") return dims(s->hidden);
      if (name == p + ".output.kernel") return dims(s->output);
    }
    return std::to_string(size);
  };
  for (const auto& [name, t] : tensors) {
    out << name << " " << shape_of(name, t->size());
    for (double x : *t) out << " " << f32_hex(x);
    out << "\n";
  }
  out << "end\n";
  return out.str();
}

Checkpoint load_checkpoint(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  auto next = [&](const char* what) {
    if (!std::getline(in, line)) throw FormatError(std::string("checkpoint truncated before ") + what);
    return line;
  };
  if (next("header") != kCheckpointMagic) throw FormatError("not an arrange-ckpt/1 checkpoint");
  auto field = [&](const char* key) {
    std::istringstream ls(next(key));
    std::string k, v, extra;
    if (!(ls >> k >> v) || k != key || (ls >> extra)) throw FormatError(std::string("checkpoint: expected '") + key + "'");
    return v;
  };
  auto to_int = [](const std::string& v, const char* key) {
    try {
      std::size_t used = 0;
      const long long x = std::stoll(v, &used);
      if (used != v.size() || x < 0) throw FormatError("");
      return x;
    } catch (const std::exception&) {
      throw FormatError(std::string("checkpoint: bad value for ") + key);
    }
  };
  Checkpoint c;
  const std::string seed = field("seed");
  try {
    std::size_t used = 0;
    c.seed = std::stoull(seed, &used);
    if (used != seed.size()) throw FormatError("");
  } catch (const std::exception&) {
    throw FormatError("checkpoint: bad seed");
  }
  try {
    c.partition = parse_partition(field("partition"));
  } catch (const ParameterError& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  const int features = static_cast<int>(to_int(field("feature_channels"), "feature_channels"));
  const int dim = static_cast<int>(to_int(field("embedding_dim"), "embedding_dim"));
  const auto count = static_cast<std::size_t>(to_int(field("tensors"), "tensors"));
  if (features < 1 || dim < 1) throw FormatError("checkpoint: non-positive shape");

  std::map<std::string, std::pair<std::vector<int>, std::vector<double>>> payload;
  for (std::size_t t = 0; t < count; ++t) {
    std::istringstream ls(next("tensor"));
    std::string name, shape, hex;
    if (!(ls >> name >> shape)) throw FormatError("checkpoint: malformed tensor line");
    std::vector<int> dims;
    std::istringstream ss(shape);
    std::string part;
    while (std::getline(ss, part, 'x')) dims.push_back(static_cast<int>(to_int(part, "shape")));
    std::vector<double> values;
    while (ls >> hex) values.push_back(parse_f32_hex(hex));
    if (!payload.emplace(name, std::make_pair(dims, values)).second) throw FormatError("checkpoint: duplicate " + name);
  }
  if (next("end") != "end" || std::getline(in, line)) throw FormatError("checkpoint: expected a final 'end' line");

  auto take = [&](const std::string& name) {
    auto it = payload.find(name);
    if (it == payload.end()) throw FormatError("checkpoint: missing tensor " + name);
    auto v = it->second;
    payload.erase(it);
    return v;
  };
  auto layer = [&](const std::string& prefix) {
    auto [dims, kernel] = take(prefix + ".kernel");
    auto [bdims, bias] = take(prefix + ".bias");
    if (dims.size() != 4) throw FormatError("checkpoint: " + prefix + " kernel needs 4 dims");
    ConvLayer l;
    try {
      l = ConvLayer(dims[0], dims[1], dims[2], dims[3]);
    } catch (const Error& e) {
      throw FormatError("checkpoint: " + prefix + ": " + e.what());
    }
    if (kernel.size() != l.kernel.size() || bias.size() != l.bias.size() || bdims.size() != 1 ||
        static_cast<std::size_t>(bdims[0]) != bias.size()) {
      throw FormatError("checkpoint: " + prefix + " size does not match its shape");
    }
    l.kernel = std::move(kernel);
    l.bias = std::move(bias);
    return l;
  };
  for (ConvStack* s : {&c.nets.tl_head, &c.nets.phi, &c.nets.psi}) {
    const std::string prefix = s == &c.nets.tl_head ? "tl_head" : s == &c.nets.phi ? "phi" : "psi";
    s->hidden = layer(prefix + ".hidden");
    s->output = layer(prefix + ".output");
  }
  c.encoders = EncoderParams::zeros(dim);
  for (Slot s : kAllSlots) {
    auto [dims, values] = take("encoder." + std::string(slot_name(s)));
    if (values.size() != c.encoders.slot(s).size() || dims.size() != 1 ||
        static_cast<std::size_t>(dims[0]) != values.size()) {
      throw FormatError("checkpoint: encoder slot " + std::string(slot_name(s)) + " has the wrong size");
    }
    c.encoders.slot(s) = std::move(values);
  }
  if (!payload.empty()) throw FormatError("checkpoint: unexpected tensor " + payload.begin()->first);
  try {
    c.nets.validate();
    c.encoders.validate();
  } catch (const Error& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  if (c.nets.feature_channels() != features) throw FormatError("checkpoint: feature_channels disagrees with phi");
  return c;
}

Checkpoint quantized(Checkpoint checkpoint) {
  for (auto& [name, t] : all_tensors(checkpoint.nets, checkpoint.encoders))
    for (double& x : *t) x = static_cast<double>(static_cast<float>(x));
  return checkpoint;
}

}  // namespace arrange

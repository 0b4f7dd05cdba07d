#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "arrange/embedding.hpp"
#include "arrange/policy.hpp"
#include "arrange/scene.hpp"

namespace arrange {

struct Demonstration {
  Episode episode;
  Grid2D obs;
  Pixel tl_target;
  Pixel rd_target;
  RotationAngle rd_angle{RotationAngle::kCount};
};

/// `count` first-step demonstrations from episodes seeded derive_seed(seed, i).
std::vector<Demonstration> make_demonstrations(const TaskSpec& task, Split split, int count, std::uint64_t seed);

struct TrainConfig {
  int steps = 300;
  double learning_rate = 0.05;
  double lambda_tl = 1.0;
  double lambda_rd = 1.0;
  ParameterPartition partition;
  std::uint64_t seed = 0;
  PolicyConfig policy;

  /// Throws ParameterError on steps < 1, negative weights or a non-positive rate.
  void validate() const;
};

struct LossValue {
  double total = 0.0;
  double l_tl = 0.0;
  double l_rd = 0.0;
};

/// Parameter-shaped gradient buffers.
struct Gradients {
  PolicyNets nets;
  EncoderParams encoders;

  static Gradients zeros_like(const PolicyNets& nets, const EncoderParams& encoders);
};

/// Weighted sum of the pick cross-entropy and the joint (angle, pixel) place
/// cross-entropy, with the place stage fed the ground-truth pick crop. The
/// encoders run at full precision here.
LossValue loss(const Demonstration& demo, const PolicyNets& nets, const EncoderParams& encoders,
               const TrainConfig& config);

/// Loss plus gradients with respect to every parameter. Encoder slots outside
/// config.partition are left at exactly zero.
LossValue loss_and_gradients(const Demonstration& demo, const PolicyNets& nets, const EncoderParams& encoders,
                             const TrainConfig& config, Gradients& grads);

struct TrainResult {
  PolicyNets nets;
  EncoderParams encoders;
  std::vector<LossValue> trace;  // mean loss over the demos before each update
};

/// Full-batch gradient descent with a fixed rate. Throws DivergenceError
/// carrying the step index when the loss stops being finite.
TrainResult train_few_shot(const std::vector<Demonstration>& demos, const PolicyNets& nets,
                           const EncoderParams& encoders, const TrainConfig& config);

/// Flat view over trainable coordinates: net weights always, encoder slots by partition.
struct ParameterRef {
  std::string name;  // "<group>.<tensor>"
  std::size_t index = 0;
};
std::vector<ParameterRef> trainable_parameters(const PolicyNets& nets, const EncoderParams& encoders,
                                               const ParameterPartition& partition);
double& parameter_at(PolicyNets& nets, EncoderParams& encoders, const ParameterRef& ref);

struct GradientCheckEntry {
  ParameterRef ref;
  double analytic = 0.0;
  double numeric = 0.0;
  double relative_error = 0.0;
};
struct GradientCheckReport {
  std::vector<GradientCheckEntry> entries;
  double max_relative_error = 0.0;
  /// Largest |analytic gradient| over every encoder slot outside the partition.
  double frozen_max_abs = 0.0;
};
inline constexpr double kGradientCheckStep = 1e-4;
/// Relative errors are |a - n| / max(|a|, |n|, floor). Central differences
/// with this step carry truncation error near 1e-9, so the floor stops
/// near-zero gradients from turning that error into a large ratio.
inline constexpr double kRelativeErrorFloor = 1e-5;

/// Central differences on `coordinates` trainable coordinates drawn with `seed`.
GradientCheckReport gradient_check(const PolicyNets& nets, const EncoderParams& encoders, const Demonstration& demo,
                                   const TrainConfig& config, int coordinates = 50, std::uint64_t seed = 0);

/// Trained parameters plus the metadata of the run that produced them.
struct Checkpoint {
  PolicyNets nets;
  EncoderParams encoders;
  PartitionPolicy partition = PartitionPolicy::none;
  std::uint64_t seed = 0;
};

/// Text header "arrange-ckpt/1" with shapes, partition and seed, followed by
/// one line per tensor of 8-digit little-endian float32 hex values.
std::string save_checkpoint(const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& text);

/// Rounds every parameter to float32, the precision a checkpoint stores.
Checkpoint quantized(Checkpoint checkpoint);

}  // namespace arrange

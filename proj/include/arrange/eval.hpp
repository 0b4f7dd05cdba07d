#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "arrange/policy.hpp"
#include "arrange/scene.hpp"
#include "arrange/training.hpp"

namespace arrange {

inline constexpr const char* kEngineVersion = "0.1.0";

struct EvalConfig {
  std::string task = "put-block-in-bowl";
  Split split = Split::seen;
  int episodes = 50;
  int max_steps = 5;
  std::uint64_t seed = 0;
  PolicyConfig policy;

  /// Throws ParameterError on a non-positive budget or an unknown task.
  void validate() const;
};

struct EpisodeRecord {
  int index = 0;
  std::uint64_t seed = 0;
  int steps_used = 0;
  bool success = false;
  bool operator==(const EpisodeRecord&) const = default;
};

struct EvalReport {
  EvalConfig config;
  std::string policy;  // "learned" or "random-action"
  std::vector<EpisodeRecord> per_episode;
  int successes = 0;
  double success_rate = 0.0;  // percent
  std::string engine_version = kEngineVersion;
};

/// Seed of episode i of an evaluation.
std::uint64_t episode_seed(std::uint64_t eval_seed, int index);

/// Up to max_steps act/apply cycles per episode, stopping at the first success.
/// Episodes run concurrently; records are kept in episode order.
EvalReport run_eval(const EvalConfig& config, const PolicyNets& nets, const EncoderParams& encoders);

/// Same protocol with uniformly random pick pixels, place pixels and angles.
EvalReport run_random_baseline(const EvalConfig& config);

std::string eval_report_json(const EvalReport& report);
std::string eval_report_text(const EvalReport& report);

/// Starting point for few-shot training: oracle-aligned encoders with uniform
/// noise of +-projection_noise on both projections, and oracle or random nets.
struct InitConfig {
  double projection_noise = 0.3;
  bool oracle_nets = true;
  int feature_channels = kDefaultFeatureChannels;
};
Checkpoint initial_system(const InitConfig& init, std::uint64_t seed);

struct BenchmarkConfig {
  std::vector<std::string> tasks;  // empty means the whole roster
  std::vector<int> demo_counts{1, 10, 20};
  Split demo_split = Split::seen;
  int episodes = 50;
  int max_steps = 5;
  std::uint64_t seed = 0;
  InitConfig init;
  TrainConfig train;

  void validate() const;
};

struct BenchmarkCell {
  std::string task;
  int demos = 0;
  double seen = 0.0;
  double unseen = 0.0;
  double gap() const { return seen - unseen; }
  LossValue final_loss;  // last trace entry
  Checkpoint checkpoint;
};

struct BenchmarkReport {
  BenchmarkConfig config;
  std::vector<BenchmarkCell> cells;  // task-major, then demo count
  std::string engine_version = kEngineVersion;
};

/// Trains fresh parameters per (task, demo count) and evaluates both splits.
BenchmarkReport run_benchmark(const BenchmarkConfig& config);

std::string benchmark_report_json(const BenchmarkReport& report);
std::string benchmark_report_text(const BenchmarkReport& report);

}  // namespace arrange

#include "arrange/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <functional>
#include <nlohmann/json.hpp>
#include <sstream>

#include "arrange/parallel.hpp"
#include "arrange/rng.hpp"

namespace arrange {

namespace {

using Chooser = std::function<Action(const Scene&, const Episode&, Rng&)>;

EvalReport run_protocol(const EvalConfig& config, const std::string& policy, const Chooser& choose) {
  config.validate();
  const TaskSpec& task = task_by_name(config.task);
  EvalReport report;
  report.config = config;
  report.policy = policy;
  report.per_episode.resize(static_cast<std::size_t>(config.episodes));
  parallel_for(report.per_episode.size(), [&](std::size_t i) {
    const int index = static_cast<int>(i);
    const std::uint64_t seed = episode_seed(config.seed, index);
    EpisodeRecord rec{index, seed, 0, false};
    try {
      const Episode episode = make_episode(task, config.split, seed);
      Rng rng(derive_seed(seed, 0xBA5E));
      Scene scene = episode.scene;
      while (rec.steps_used < config.max_steps && !rec.success) {
        const Action a = choose(scene, episode, rng);
        scene = apply_action(scene, a.pick, a.place);
        ++rec.steps_used;
        rec.success = check_success(scene, episode);
      }
    } catch (const std::exception& e) {
      throw Error("episode " + std::to_string(index) + " (seed " + std::to_string(seed) + "): " + e.what());
    }
    report.per_episode[i] = rec;
  });
  for (const EpisodeRecord& r : report.per_episode) report.successes += r.success ? 1 : 0;
  report.success_rate = 100.0 * report.successes / config.episodes;
  return report;
}

std::string percent(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", x);
  return buf;
}

nlohmann::json config_json(const EvalConfig& c) {
  return {{"task", c.task},
          {"split", split_name(c.split)},
          {"episodes", c.episodes},
          {"max_steps", c.max_steps},
          {"seed", c.seed},
          {"crop_size", c.policy.crop_size},
          {"fusion_tau", c.policy.fusion.tau}};
}

}  // namespace

void EvalConfig::validate() const {
  if (episodes < 1) throw ParameterError("episodes must be at least 1");
  if (max_steps < 1) throw ParameterError("max_steps must be at least 1");
  task_by_name(task);
}

std::uint64_t episode_seed(std::uint64_t eval_seed, int index) {
  return derive_seed(eval_seed, static_cast<std::uint64_t>(index));
}

EvalReport run_eval(const EvalConfig& config, const PolicyNets& nets, const EncoderParams& encoders) {
  nets.validate();
  encoders.validate();
  return run_protocol(config, "learned", [&](const Scene& scene, const Episode& episode, Rng&) {
    const ActResult r = act(render(scene), episode.instruction, encoders, nets, config.policy);
    return Action{r.pick.pose, {r.place.pose.u, r.place.pose.v, r.place.angle.degrees()}};
  });
}

EvalReport run_random_baseline(const EvalConfig& config) {
  return run_protocol(config, "random-action", [](const Scene& scene, const Episode&, Rng& rng) {
    auto coord = [&](int n) { return static_cast<int>(rng.uniform_int(0, n - 1)); };
    Action a;
    a.pick = {coord(scene.grid_h), coord(scene.grid_w)};
    a.place.u = coord(scene.grid_h);
    a.place.v = coord(scene.grid_w);
    a.place.theta = RotationAngle(1 + coord(RotationAngle::kCount)).degrees();
    return a;
  });
}

std::string eval_report_json(const EvalReport& report) {
  nlohmann::json episodes = nlohmann::json::array();
  for (const EpisodeRecord& r : report.per_episode) {
    episodes.push_back({{"index", r.index}, {"seed", r.seed}, {"steps_used", r.steps_used}, {"success", r.success}});
  }
  const nlohmann::json j = {{"schema", "arrange-eval/1"},
                            {"engine_version", report.engine_version},
                            {"policy", report.policy},
                            {"config", config_json(report.config)},
                            {"successes", report.successes},
                            {"success_rate", report.success_rate},
                            {"per_episode", episodes}};
  return j.dump(2) + "\n";
}

std::string eval_report_text(const EvalReport& report) {
  std::ostringstream out;
  const EvalConfig& c = report.config;
  out << "task " << c.task << ", split " << split_name(c.split) << ", policy " << report.policy << "\n";
  out << "episodes " << c.episodes << ", max_steps " << c.max_steps << ", seed " << c.seed << "\n";
  out << "success rate " << percent(report.success_rate) << "% (" << report.successes << "/" << c.episodes << ")\n";
  return out.str();
}

Checkpoint initial_system(const InitConfig& init, std::uint64_t seed) {
  if (!(init.projection_noise >= 0.0)) throw ParameterError("projection noise must be non-negative");
  Checkpoint c;
  c.seed = seed;
  c.encoders = oracle_aligned_params(derive_seed(seed, 0x0E));
  if (init.projection_noise > 0.0) perturb_projections(c.encoders, init.projection_noise, derive_seed(seed, 0x0F));
  c.nets = init.oracle_nets ? PolicyNets::oracle(init.feature_channels)
                            : PolicyNets::random(derive_seed(seed, 0x10), init.feature_channels);
  return c;
}

void BenchmarkConfig::validate() const {
  if (demo_counts.empty()) throw ParameterError("benchmark needs at least one demo count");
  for (int d : demo_counts)
    if (d < 1) throw ParameterError("demo counts must be at least 1");
  for (const std::string& t : tasks) task_by_name(t);
  if (episodes < 1 || max_steps < 1) throw ParameterError("episodes and max_steps must be at least 1");
  train.validate();
}

BenchmarkReport run_benchmark(const BenchmarkConfig& config) {
  config.validate();
  BenchmarkReport report;
  report.config = config;
  std::vector<std::string> tasks = config.tasks;
  if (tasks.empty())
    for (const TaskSpec& t : task_roster()) tasks.push_back(t.name);
  const Checkpoint start = initial_system(config.init, derive_seed(config.seed, 1));
  for (const std::string& task : tasks)
    for (int demos : config.demo_counts) {
      try {
        BenchmarkCell cell;
        cell.task = task;
        cell.demos = demos;
        const auto data = make_demonstrations(task_by_name(task), config.demo_split, demos, derive_seed(config.seed, 2));
        TrainConfig tc = config.train;
        tc.seed = config.seed;
        const TrainResult trained = train_few_shot(data, start.nets, start.encoders, tc);
        cell.final_loss = trained.trace.back();
        cell.checkpoint = quantized({trained.nets, trained.encoders, tc.partition.policy, config.seed});
        EvalConfig ec;
        ec.task = task;
        ec.episodes = config.episodes;
        ec.max_steps = config.max_steps;
        ec.seed = derive_seed(config.seed, 3);
        ec.policy = tc.policy;
        ec.split = Split::seen;
        cell.seen = run_eval(ec, cell.checkpoint.nets, cell.checkpoint.encoders).success_rate;
        ec.split = Split::unseen;
        cell.unseen = run_eval(ec, cell.checkpoint.nets, cell.checkpoint.encoders).success_rate;
        report.cells.push_back(std::move(cell));
      } catch (const std::exception& e) {
        throw Error("benchmark " + task + " with " + std::to_string(demos) + " demos: " + e.what());
      }
    }
  return report;
}

std::string benchmark_report_json(const BenchmarkReport& report) {
  const BenchmarkConfig& c = report.config;
  nlohmann::json cells = nlohmann::json::array();
  for (const BenchmarkCell& cell : report.cells) {
    cells.push_back({{"task", cell.task},
                     {"demos", cell.demos},
                     {"seen", cell.seen},
                     {"unseen", cell.unseen},
                     {"gap", cell.gap()},
                     {"final_loss", cell.final_loss.total}});
  }
  const nlohmann::json j = {{"schema", "arrange-bench/1"},
                            {"engine_version", report.engine_version},
                            {"seed", c.seed},
                            {"demo_counts", c.demo_counts},
                            {"demo_split", split_name(c.demo_split)},
                            {"episodes", c.episodes},
                            {"max_steps", c.max_steps},
                            {"steps", c.train.steps},
                            {"learning_rate", c.train.learning_rate},
                            {"partition", partition_name(c.train.partition.policy)},
                            {"projection_noise", c.init.projection_noise},
                            {"oracle_nets", c.init.oracle_nets},
                            {"cells", cells}};
  return j.dump(2) + "\n";
}

std::string benchmark_report_text(const BenchmarkReport& report) {
  std::vector<std::string> tasks;
  for (const BenchmarkCell& cell : report.cells)
    if (tasks.empty() || tasks.back() != cell.task) tasks.push_back(cell.task);
  const std::size_t per_task = report.config.demo_counts.size();
  const std::size_t col = 8;
  // A task block is wide enough for its name; the slack goes to its first column.
  std::vector<std::size_t> first_width;
  for (const std::string& t : tasks) first_width.push_back(std::max(col, t.size() + 2 - std::min(t.size() + 2, (per_task - 1) * col)));
  auto pad = [](std::string s, std::size_t w) {
    if (s.size() < w) s.insert(0, w - s.size(), ' ');
    return s;
  };
  auto cell_width = [&](std::size_t k) { return k % per_task == 0 ? first_width[k / per_task] : col; };
  std::ostringstream out;
  out << pad("", col);
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const std::size_t w = first_width[t] + (per_task - 1) * col;
    out << "  " << tasks[t] << std::string(w - 2 - tasks[t].size(), ' ');
  }
  out << "\n" << pad("demos", col);
  for (std::size_t k = 0; k < tasks.size() * per_task; ++k)
    out << pad(std::to_string(report.config.demo_counts[k % per_task]), cell_width(k));
  out << "\n";
  const std::pair<const char*, std::function<double(const BenchmarkCell&)>> rows[] = {
      {"seen", [](const BenchmarkCell& c) { return c.seen; }},
      {"unseen", [](const BenchmarkCell& c) { return c.unseen; }},
      {"gap", [](const BenchmarkCell& c) { return c.gap(); }}};
  for (const auto& [label, value] : rows) {
    out << pad(label, col);
    for (std::size_t k = 0; k < report.cells.size(); ++k) out << pad(percent(value(report.cells[k])), cell_width(k));
    out << "\n";
  }
  return out.str();
}

}  // namespace arrange

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "arrange/eval.hpp"
#include "arrange/image_io.hpp"
#include "arrange/rng.hpp"

namespace fs = std::filesystem;
using namespace arrange;

namespace {

std::vector<std::string> task_names() {
  std::vector<std::string> names;
  for (const TaskSpec& t : task_roster()) names.push_back(t.name);
  return names;
}

const std::vector<std::string> kSplits{"seen", "unseen"};
const std::vector<std::string> kPartitions{"none", "text_ffn_bias_only", "visual_layernorm_only", "both", "all"};

struct Common {
  std::string task = "put-block-in-bowl";
  std::string split = "seen";
  std::uint64_t seed = 0;
  std::string out;
  int threads = -1;
};

struct InitOptions {
  double noise = 0.3;
  std::string nets = "oracle";
  int feature_channels = kDefaultFeatureChannels;

  InitConfig config() const { return {noise, nets == "oracle", feature_channels}; }
};

struct TrainOptions {
  int steps = 300;
  double lr = 0.05;
  double lambda_tl = 1.0;
  double lambda_rd = 1.0;
  std::string partition = "none";
};

void add_task(CLI::App* cmd, Common& c) {
  cmd->add_option("--task", c.task, "task name")->check(CLI::IsMember(task_names()))->capture_default_str();
}
void add_split(CLI::App* cmd, Common& c, const std::string& help) {
  cmd->add_option("--split", c.split, help)->check(CLI::IsMember(kSplits))->capture_default_str();
}
void add_seed(CLI::App* cmd, Common& c) { cmd->add_option("--seed", c.seed, "master seed")->capture_default_str(); }
void add_out(CLI::App* cmd, Common& c, bool required) {
  auto* o = cmd->add_option("--out", c.out, "output directory");
  if (required) o->required();
}
void add_threads(CLI::App* cmd, Common& c) {
  cmd->add_option("--threads", c.threads, "worker count, 0 for all cores")->check(CLI::NonNegativeNumber);
}
void add_init(CLI::App* cmd, InitOptions& i) {
  cmd->add_option("--noise", i.noise, "projection noise of the initial encoders")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  cmd->add_option("--nets", i.nets, "initial heads")->check(CLI::IsMember({"oracle", "random"}))->capture_default_str();
  cmd->add_option("--feature-channels", i.feature_channels, "place feature channels")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
}
void add_train(CLI::App* cmd, TrainOptions& t) {
  cmd->add_option("--steps", t.steps, "gradient steps")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--lr", t.lr, "learning rate")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--lambda-tl", t.lambda_tl, "pick loss weight")->check(CLI::NonNegativeNumber)->capture_default_str();
  cmd->add_option("--lambda-rd", t.lambda_rd, "place loss weight")->check(CLI::NonNegativeNumber)->capture_default_str();
  cmd->add_option("--partition", t.partition, "trainable encoder slots")
      ->check(CLI::IsMember(kPartitions))
      ->capture_default_str();
}

TrainConfig train_config(const TrainOptions& t, std::uint64_t seed) {
  TrainConfig c;
  c.steps = t.steps;
  c.learning_rate = t.lr;
  c.lambda_tl = t.lambda_tl;
  c.lambda_rd = t.lambda_rd;
  c.partition = resolve_partition(t.partition);
  c.seed = seed;
  return c;
}

fs::path output_dir(const std::string& out) {
  fs::path p(out);
  fs::create_directories(p);
  return p;
}

void apply_threads(int threads) {
  if (threads >= 0) setenv("ARRANGE_THREADS", std::to_string(threads).c_str(), 1);
}

std::string pad3(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03d", i);
  return buf;
}

// Values from the file are placed ahead of the real arguments so that flags
// given on the command line win.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    std::string path;
    std::size_t consumed = 0;
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
      consumed = 2;
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      consumed = 1;
    } else {
      continue;
    }
    if (!fs::exists(path)) throw CLI::ParseError("config file not found: " + path, CLI::ExitCodes::FileError);
    std::vector<std::string> injected;
    for (const CLI::ConfigItem& item : CLI::ConfigINI().from_file(path)) {
      if (!item.parents.empty() || item.name == "--") continue;
      for (const std::string& value : item.inputs) {
        injected.push_back("--" + item.name);
        injected.push_back(value);
      }
    }
    args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i + consumed));
    // After the subcommand name, before the remaining flags.
    args.insert(args.begin() + 1, injected.begin(), injected.end());
    break;
  }
  return args;
}

int cmd_gen(const Common& c, int count) {
  const fs::path dir = output_dir(c.out);
  const TaskSpec& task = task_by_name(c.task);
  for (int i = 0; i < count; ++i) {
    const Episode ep = make_episode(task, parse_split(c.split), derive_seed(c.seed, static_cast<std::uint64_t>(i)));
    write_file((dir / ("episode_" + pad3(i) + ".json")).string(), episode_to_json(ep));
    write_file((dir / ("episode_" + pad3(i) + ".ppm")).string(), encode_ppm(render(ep.scene)));
  }
  std::cout << "wrote " << count << " episodes of " << c.task << " (" << c.split << ") to " << dir.string() << "\n";
  return 0;
}

int cmd_train(const Common& c, int demos, const InitOptions& init, const TrainOptions& t, const std::string& from) {
  const Checkpoint start = from.empty() ? initial_system(init.config(), derive_seed(c.seed, 1))
                                        : load_checkpoint(read_file(from));
  const auto data = make_demonstrations(task_by_name(c.task), parse_split(c.split), demos, derive_seed(c.seed, 2));
  const TrainConfig tc = train_config(t, c.seed);
  const TrainResult r = train_few_shot(data, start.nets, start.encoders, tc);
  const Checkpoint done = quantized({r.nets, r.encoders, tc.partition.policy, c.seed});

  const fs::path dir = output_dir(c.out);
  write_file((dir / "checkpoint.ckpt").string(), save_checkpoint(done));
  nlohmann::json trace = nlohmann::json::array();
  for (const LossValue& l : r.trace) trace.push_back({{"total", l.total}, {"l_tl", l.l_tl}, {"l_rd", l.l_rd}});
  const nlohmann::json log = {{"schema", "arrange-train/1"},
                              {"engine_version", kEngineVersion},
                              {"task", c.task},
                              {"demo_split", c.split},
                              {"demos", demos},
                              {"seed", c.seed},
                              {"steps", t.steps},
                              {"learning_rate", t.lr},
                              {"partition", t.partition},
                              {"trace", trace}};
  write_file((dir / "train.json").string(), log.dump(2) + "\n");
  std::printf("trained %s on %d %s demos for %d steps: loss %.4f -> %.4f\n", c.task.c_str(), demos, c.split.c_str(),
              t.steps, r.trace.front().total, r.trace.back().total);
  return 0;
}

Checkpoint system_for(const std::string& checkpoint, std::uint64_t seed) {
  if (!checkpoint.empty()) return load_checkpoint(read_file(checkpoint));
  return initial_system({0.0, true, kDefaultFeatureChannels}, seed);
}

int cmd_eval(const Common& c, int episodes, int max_steps, const std::string& checkpoint, bool baseline, double tau) {
  EvalConfig ec;
  ec.task = c.task;
  ec.split = parse_split(c.split);
  ec.episodes = episodes;
  ec.max_steps = max_steps;
  ec.seed = c.seed;
  ec.policy.fusion.tau = tau;
  EvalReport report;
  if (baseline) {
    report = run_random_baseline(ec);
  } else {
    const Checkpoint sys = system_for(checkpoint, c.seed);
    report = run_eval(ec, sys.nets, sys.encoders);
  }
  const std::string text = eval_report_text(report);
  std::cout << text;
  if (!c.out.empty()) {
    const fs::path dir = output_dir(c.out);
    write_file((dir / "eval.json").string(), eval_report_json(report));
    write_file((dir / "eval.txt").string(), text);
  }
  return 0;
}

struct InferInputs {
  std::string episode;
  std::string scene;
  std::string image;
  std::string instruction;
  std::string checkpoint;
  std::string masks;
  std::string embeddings;
};

int cmd_infer(const Common& c, const InferInputs& in) {
  Grid2D obs;
  std::string instruction = in.instruction;
  if (!in.episode.empty()) {
    const Episode ep = episode_from_json(read_file(in.episode));
    obs = render(ep.scene);
    if (instruction.empty()) instruction = ep.instruction;
  } else if (!in.scene.empty()) {
    obs = render(scene_from_json(read_file(in.scene)));
  } else if (!in.image.empty()) {
    obs = decode_ppm(read_file(in.image));
  } else {
    const Episode ep = make_episode(task_by_name(c.task), parse_split(c.split), c.seed);
    obs = render(ep.scene);
    if (instruction.empty()) instruction = ep.instruction;
  }
  if (instruction.empty()) throw ParameterError("an instruction is required for this input");

  PerceptionOverrides overrides;
  if (!in.masks.empty()) overrides.masks = import_masks(read_file(in.masks), obs.height(), obs.width());
  if (!in.embeddings.empty()) overrides.embeddings = import_embeddings(read_file(in.embeddings));

  const Checkpoint sys = system_for(in.checkpoint, c.seed);
  const ActResult r = act(obs, instruction, sys.encoders, sys.nets, PolicyConfig{}, overrides);

  const fs::path dir = output_dir(c.out);
  write_file((dir / "decision.json").string(), decision_record(r));
  write_file((dir / "observation.ppm").string(), encode_ppm(obs));
  write_file((dir / "pick.pgm").string(), encode_pgm(to_gray8(r.pick.score_map)));
  write_file((dir / "place.pgm").string(),
             encode_pgm(to_gray8(r.place.score_volume[static_cast<std::size_t>(r.place.angle.index() - 1)])));
  write_file((dir / "confidence_tl.pgm").string(), encode_pgm(score_map_to_gray16(r.m_tl.scores)));
  write_file((dir / "confidence_rd.pgm").string(), encode_pgm(score_map_to_gray16(r.m_rd.scores)));
  write_file((dir / "masks.pgm").string(), encode_pgm(export_masks(r.perception.seg)));
  const auto [vectors, ids] = perception_embeddings(r.perception);
  write_file((dir / "embeddings.emb").string(), export_embeddings(vectors, ids));
  std::printf("pick (%d, %d), place (%d, %d) at %d degrees\n", r.pick.pose.u, r.pick.pose.v, r.place.pose.u,
              r.place.pose.v, r.place.angle.degrees());
  return 0;
}

struct BenchOptions {
  std::vector<std::string> tasks;
  std::vector<int> demo_counts{1, 10, 20};
  std::string demo_split = "seen";
  int episodes = 50;
  int max_steps = 5;
};

int cmd_bench(const Common& c, const BenchOptions& b, const InitOptions& init, const TrainOptions& t) {
  BenchmarkConfig bc;
  bc.tasks = b.tasks;
  bc.demo_counts = b.demo_counts;
  bc.demo_split = parse_split(b.demo_split);
  bc.episodes = b.episodes;
  bc.max_steps = b.max_steps;
  bc.seed = c.seed;
  bc.init = init.config();
  bc.train = train_config(t, c.seed);
  const BenchmarkReport report = run_benchmark(bc);

  const fs::path dir = output_dir(c.out);
  const std::string text = benchmark_report_text(report);
  write_file((dir / "bench.json").string(), benchmark_report_json(report));
  write_file((dir / "bench.txt").string(), text);
  fs::create_directories(dir / "checkpoints");
  for (const BenchmarkCell& cell : report.cells) {
    write_file((dir / "checkpoints" / (cell.task + "-" + std::to_string(cell.demos) + ".ckpt")).string(),
               save_checkpoint(cell.checkpoint));
  }
  std::cout << text;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Language-conditioned pick-and-place on a synthetic tabletop", "arrange"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  Common common;
  std::string config_path;  // consumed by expand_config before parsing
  const auto config_flag = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "key = value file; command-line flags take precedence");
  };

  int gen_count = 10;
  auto* gen = app.add_subcommand("gen", "write episode documents and renders");
  add_task(gen, common);
  add_split(gen, common, "color split");
  add_seed(gen, common);
  gen->add_option("--episodes", gen_count, "number of episodes")->check(CLI::PositiveNumber)->capture_default_str();
  add_out(gen, common, true);
  config_flag(gen);

  int demos = 10;
  InitOptions init;
  TrainOptions train;
  std::string from;
  auto* trn = app.add_subcommand("train", "few-shot training from demonstrations");
  add_task(trn, common);
  add_split(trn, common, "color split of the demonstrations");
  add_seed(trn, common);
  trn->add_option("--demos", demos, "number of demonstrations")->check(CLI::PositiveNumber)->capture_default_str();
  add_init(trn, init);
  add_train(trn, train);
  trn->add_option("--from", from, "start from this checkpoint instead of a fresh system")->check(CLI::ExistingFile);
  add_out(trn, common, true);
  add_threads(trn, common);
  config_flag(trn);

  int episodes = 50, max_steps = 5;
  std::string checkpoint;
  bool baseline = false;
  double tau = kDefaultFusionTemperature;
  auto* evl = app.add_subcommand("eval", "success rate over generated episodes");
  add_task(evl, common);
  add_split(evl, common, "color split");
  add_seed(evl, common);
  evl->add_option("--episodes", episodes, "number of episodes")->check(CLI::PositiveNumber)->capture_default_str();
  evl->add_option("--max-steps", max_steps, "actions allowed per episode")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  evl->add_option("--checkpoint", checkpoint, "trained parameters (default: untrained oracle system)")
      ->check(CLI::ExistingFile);
  evl->add_flag("--random-baseline", baseline, "uniformly random actions instead of the policy");
  evl->add_option("--tau", tau, "fusion temperature")->check(CLI::PositiveNumber)->capture_default_str();
  add_out(evl, common, false);
  add_threads(evl, common);
  config_flag(evl);

  InferInputs in;
  auto* inf = app.add_subcommand("infer", "one decision with its score maps");
  add_task(inf, common);
  add_split(inf, common, "color split of the generated scene");
  add_seed(inf, common);
  auto* ep_opt = inf->add_option("--episode", in.episode, "episode document")->check(CLI::ExistingFile);
  auto* sc_opt = inf->add_option("--scene", in.scene, "scene document")->check(CLI::ExistingFile);
  auto* im_opt = inf->add_option("--image", in.image, "PPM observation")->check(CLI::ExistingFile);
  ep_opt->excludes(sc_opt)->excludes(im_opt);
  sc_opt->excludes(im_opt);
  inf->add_option("--instruction", in.instruction, "instruction (default: the episode's)");
  inf->add_option("--checkpoint", in.checkpoint, "trained parameters (default: untrained oracle system)")
      ->check(CLI::ExistingFile);
  inf->add_option("--masks", in.masks, "external instance label map (PGM)")->check(CLI::ExistingFile);
  inf->add_option("--embeddings", in.embeddings, "external embedding file")->check(CLI::ExistingFile);
  add_out(inf, common, true);
  config_flag(inf);

  BenchOptions bench;
  InitOptions bench_init;
  TrainOptions bench_train;
  bench_train.partition = "both";
  auto* bch = app.add_subcommand("bench", "train and evaluate every task and demo count");
  bch->add_option("--tasks", bench.tasks, "tasks (default: all)")->check(CLI::IsMember(task_names()))->delimiter(',');
  bch->add_option("--demos", bench.demo_counts, "demo counts")->check(CLI::PositiveNumber)->delimiter(',');
  bch->add_option("--demo-split", bench.demo_split, "color split of the demonstrations")
      ->check(CLI::IsMember(kSplits))
      ->capture_default_str();
  bch->add_option("--episodes", bench.episodes, "episodes per split")->check(CLI::PositiveNumber)->capture_default_str();
  bch->add_option("--max-steps", bench.max_steps, "actions allowed per episode")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  add_seed(bch, common);
  add_init(bch, bench_init);
  add_train(bch, bench_train);
  add_out(bch, common, true);
  add_threads(bch, common);
  config_flag(bch);

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args = expand_config(std::move(args));
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    apply_threads(common.threads);
    if (*gen) return cmd_gen(common, gen_count);
    if (*trn) return cmd_train(common, demos, init, train, from);
    if (*evl) return cmd_eval(common, episodes, max_steps, checkpoint, baseline, tau);
    if (*inf) return cmd_infer(common, in);
    return cmd_bench(common, bench, bench_init, bench_train);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

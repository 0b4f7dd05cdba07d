#include <nlohmann/json.hpp>

#include "arrange/eval.hpp"
#include "arrange/rng.hpp"
#include "doctest.h"

using namespace arrange;

namespace {

EvalConfig small(const std::string& task, Split split, int episodes, std::uint64_t seed) {
  EvalConfig c;
  c.task = task;
  c.split = split;
  c.episodes = episodes;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("the untrained oracle system solves put-block-in-bowl on both splits") {
  const Checkpoint sys = initial_system({0.0, true, kDefaultFeatureChannels}, 0);
  for (Split split : {Split::seen, Split::unseen}) {
    const EvalReport r = run_eval(small("put-block-in-bowl", split, 20, 1), sys.nets, sys.encoders);
    CHECK(r.success_rate == 100.0);
    for (const EpisodeRecord& e : r.per_episode) CHECK(e.steps_used == 1);
  }
}

TEST_CASE("reports are consistent with their episode records") {
  const Checkpoint sys = initial_system({0.3, false, kDefaultFeatureChannels}, 2);
  EvalConfig c = small("separating-piles", Split::seen, 12, 5);
  c.max_steps = 3;
  const EvalReport r = run_eval(c, sys.nets, sys.encoders);
  int successes = 0;
  for (std::size_t i = 0; i < r.per_episode.size(); ++i) {
    const EpisodeRecord& e = r.per_episode[i];
    CHECK(e.index == static_cast<int>(i));
    CHECK(e.seed == episode_seed(5, e.index));
    CHECK(e.steps_used >= 1);
    CHECK(e.steps_used <= 3);
    if (!e.success) CHECK(e.steps_used == 3);
    successes += e.success ? 1 : 0;
  }
  CHECK(r.successes == successes);
  CHECK(r.success_rate == 100.0 * successes / 12);

  const auto j = nlohmann::json::parse(eval_report_json(r));
  CHECK(j["schema"] == "arrange-eval/1");
  CHECK(j["config"]["episodes"] == 12);
  CHECK(j["config"]["max_steps"] == 3);
  CHECK(j["config"]["task"] == "separating-piles");
  CHECK(j["per_episode"].size() == 12);
  CHECK(j["success_rate"].get<double>() == r.success_rate);
  CHECK(eval_report_text(r).find("max_steps 3") != std::string::npos);
}

TEST_CASE("evaluation is deterministic") {
  const Checkpoint sys = initial_system({}, 3);
  const EvalConfig c = small("pack-block-in-box", Split::unseen, 8, 9);
  CHECK(eval_report_json(run_eval(c, sys.nets, sys.encoders)) == eval_report_json(run_eval(c, sys.nets, sys.encoders)));
  CHECK(eval_report_json(run_random_baseline(c)) == eval_report_json(run_random_baseline(c)));
}

TEST_CASE("random actions rarely succeed") {
  for (const TaskSpec& t : task_roster()) {
    const EvalReport r = run_random_baseline(small(t.name, Split::seen, 50, 0));
    CHECK(r.policy == "random-action");
    CHECK(r.success_rate < 50.0);
  }
}

TEST_CASE("evaluation configuration errors") {
  const Checkpoint sys = initial_system({}, 0);
  EvalConfig c;
  c.episodes = 0;
  CHECK_THROWS_AS(run_eval(c, sys.nets, sys.encoders), ParameterError);
  c.episodes = 1;
  c.max_steps = 0;
  CHECK_THROWS_AS(run_random_baseline(c), ParameterError);
  c.max_steps = 1;
  c.task = "stack-blocks";
  CHECK_THROWS_AS(run_eval(c, sys.nets, sys.encoders), ParameterError);
}

TEST_CASE("benchmark layout and determinism") {
  BenchmarkConfig b;
  b.tasks = {"put-block-in-bowl", "pack-block-in-box"};
  b.demo_counts = {1, 2};
  b.episodes = 3;
  b.seed = 7;
  b.train.steps = 2;
  b.train.partition = resolve_partition(PartitionPolicy::both);
  const BenchmarkReport r = run_benchmark(b);
  REQUIRE(r.cells.size() == 4);
  CHECK(r.cells[0].task == "put-block-in-bowl");
  CHECK(r.cells[1].demos == 2);
  CHECK(r.cells[2].task == "pack-block-in-box");
  for (const BenchmarkCell& c : r.cells) {
    CHECK(c.gap() == c.seen - c.unseen);
    CHECK(c.checkpoint.partition == PartitionPolicy::both);
    CHECK(load_checkpoint(save_checkpoint(c.checkpoint)).nets == c.checkpoint.nets);
  }
  const BenchmarkReport again = run_benchmark(b);
  CHECK(benchmark_report_json(r) == benchmark_report_json(again));
  CHECK(benchmark_report_text(r) == benchmark_report_text(again));
  for (std::size_t i = 0; i < r.cells.size(); ++i)
    CHECK(save_checkpoint(r.cells[i].checkpoint) == save_checkpoint(again.cells[i].checkpoint));

  const auto j = nlohmann::json::parse(benchmark_report_json(r));
  CHECK(j["schema"] == "arrange-bench/1");
  CHECK(j["cells"].size() == 4);
  const std::string text = benchmark_report_text(r);
  CHECK(text.find("unseen") != std::string::npos);
  CHECK(text.find("gap") != std::string::npos);

  b.demo_counts = {0};
  CHECK_THROWS_AS(run_benchmark(b), ParameterError);
}

TEST_CASE("trained parameters survive a checkpoint round trip with identical decisions") {
  const Checkpoint start = initial_system({}, 11);
  const auto demos = make_demonstrations(task_by_name("put-block-in-bowl"), Split::seen, 2, 4);
  TrainConfig tc;
  tc.steps = 3;
  tc.partition = resolve_partition(PartitionPolicy::both);
  const TrainResult r = train_few_shot(demos, start.nets, start.encoders, tc);
  const Checkpoint saved = quantized({r.nets, r.encoders, PartitionPolicy::both, 11});
  const Checkpoint loaded = load_checkpoint(save_checkpoint(saved));
  const EvalConfig c = small("put-block-in-bowl", Split::unseen, 6, 2);
  CHECK(eval_report_json(run_eval(c, saved.nets, saved.encoders)) ==
        eval_report_json(run_eval(c, loaded.nets, loaded.encoders)));
}

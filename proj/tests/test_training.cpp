#include <cmath>
#include <cstdlib>

#include "arrange/eval.hpp"
#include "arrange/rng.hpp"
#include "arrange/training.hpp"
#include "doctest.h"

using namespace arrange;

namespace {

PolicyNets zero_nets() {
  PolicyNets n = PolicyNets::oracle();
  for (ConvStack* s : {&n.tl_head, &n.phi, &n.psi})
    for (ConvLayer* l : {&s->hidden, &s->output}) {
      std::fill(l->kernel.begin(), l->kernel.end(), 0.0);
      std::fill(l->bias.begin(), l->bias.end(), 0.0);
    }
  return n;
}

const std::vector<Demonstration>& demos() {
  static const auto d = make_demonstrations(task_by_name("put-block-in-bowl"), Split::seen, 2, 17);
  return d;
}

}  // namespace

TEST_CASE("make_demonstrations yields ground-truth targets") {
  const auto one = make_demonstrations(task_by_name("pack-block-in-box"), Split::unseen, 1, 3);
  REQUIRE(one.size() == 1);
  const Demonstration& d = one[0];
  CHECK(d.obs == render(d.episode.scene));
  CHECK(d.tl_target == d.episode.gt_pick);
  CHECK(d.rd_target == Pixel{d.episode.gt_place.u, d.episode.gt_place.v});
  CHECK(d.rd_angle == RotationAngle::nearest(d.episode.gt_place.theta));
  CHECK(d.episode.scene.find(d.episode.target_object_id)->covers(d.tl_target));

  const auto ten = make_demonstrations(task_by_name("pack-block-in-box"), Split::unseen, 10, 3);
  CHECK(ten.size() == 10);
  CHECK(ten[0].episode == d.episode);
  CHECK_THROWS_AS(make_demonstrations(task_by_name("pack-block-in-box"), Split::seen, 0, 3), ParameterError);

  CHECK(RotationAngle::nearest(90).index() == 9);
  CHECK(RotationAngle::nearest(95).index() == 10);
}

TEST_CASE("uniform score maps give the log of the support size") {
  const EncoderParams enc = oracle_aligned_params(0);
  TrainConfig cfg;
  const LossValue l = loss(demos()[0], zero_nets(), enc, cfg);
  CHECK(l.l_tl == doctest::Approx(std::log(4096.0)).epsilon(1e-12));
  CHECK(l.l_tl == doctest::Approx(8.318).epsilon(1e-4));
  CHECK(l.l_rd == doctest::Approx(std::log(4096.0 * 36.0)).epsilon(1e-12));
  CHECK(l.l_rd == doctest::Approx(11.901).epsilon(1e-4));
  CHECK(l.total == doctest::Approx(l.l_tl + l.l_rd));

  cfg.lambda_rd = 0.0;
  cfg.lambda_tl = 0.7;
  const LossValue t = loss(demos()[0], PolicyNets::random(2), enc, cfg);
  CHECK(t.total == 0.7 * t.l_tl);
}

TEST_CASE("analytic gradients agree with central differences") {
  const EncoderParams enc = oracle_aligned_params(1);
  TrainConfig cfg;
  cfg.partition = resolve_partition(PartitionPolicy::all);
  for (std::uint64_t s = 0; s < 2; ++s) {
    const GradientCheckReport r = gradient_check(PolicyNets::random(s), enc, demos()[s], cfg, 50, s);
    CHECK(r.entries.size() == 50);
    CHECK(r.max_relative_error < 1e-3);
  }
}

TEST_CASE("frozen encoder slots get exactly zero gradient") {
  const EncoderParams enc = oracle_aligned_params(1);
  TrainConfig cfg;
  for (PartitionPolicy p : {PartitionPolicy::none, PartitionPolicy::text_ffn_bias_only,
                            PartitionPolicy::visual_layernorm_only, PartitionPolicy::both}) {
    cfg.partition = resolve_partition(p);
    Gradients g = Gradients::zeros_like(PolicyNets::random(1), enc);
    loss_and_gradients(demos()[0], PolicyNets::random(1), enc, cfg, g);
    bool any_trainable_nonzero = p == PartitionPolicy::none;
    for (Slot s : kAllSlots) {
      const auto& v = g.encoders.slot(s);
      if (cfg.partition.contains(s)) {
        for (double x : v) any_trainable_nonzero = any_trainable_nonzero || x != 0.0;
      } else {
        for (double x : v) CHECK(x == 0.0);
      }
    }
    CHECK(any_trainable_nonzero);
    const GradientCheckReport r = gradient_check(PolicyNets::random(1), enc, demos()[0], cfg, 5, 0);
    CHECK(r.frozen_max_abs == 0.0);
  }
}

TEST_CASE("training validates its configuration") {
  const EncoderParams enc = oracle_aligned_params(0);
  TrainConfig cfg;
  cfg.steps = 0;
  CHECK_THROWS_AS(train_few_shot(demos(), PolicyNets::oracle(), enc, cfg), ParameterError);
  cfg.steps = 1;
  cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(train_few_shot(demos(), PolicyNets::oracle(), enc, cfg), ParameterError);
  cfg.learning_rate = 0.05;
  cfg.lambda_tl = -1;
  CHECK_THROWS_AS(train_few_shot(demos(), PolicyNets::oracle(), enc, cfg), ParameterError);
  cfg.lambda_tl = 1;
  CHECK_THROWS_AS(train_few_shot({}, PolicyNets::oracle(), enc, cfg), ParameterError);
  const TrainResult r = train_few_shot(demos(), PolicyNets::oracle(), enc, cfg);
  CHECK(r.trace.size() == 1);
  CHECK_FALSE(r.nets == PolicyNets::oracle());
}

TEST_CASE("partition none trains the nets only and the loss falls") {
  const Checkpoint start = initial_system({}, 4);
  TrainConfig cfg;
  cfg.steps = 10;
  const TrainResult r = train_few_shot(demos(), start.nets, start.encoders, cfg);
  CHECK(r.encoders == start.encoders);
  CHECK(r.trace.back().total < r.trace.front().total);
  for (std::size_t i = 1; i < r.trace.size(); ++i) CHECK(r.trace[i].total <= r.trace[i - 1].total + 1e-6);
}

TEST_CASE("training is deterministic and independent of the worker count") {
  const Checkpoint start = initial_system({}, 5);
  TrainConfig cfg;
  cfg.steps = 3;
  cfg.partition = resolve_partition(PartitionPolicy::both);
  setenv("ARRANGE_THREADS", "1", 1);
  const TrainResult a = train_few_shot(demos(), start.nets, start.encoders, cfg);
  setenv("ARRANGE_THREADS", "3", 1);
  const TrainResult b = train_few_shot(demos(), start.nets, start.encoders, cfg);
  unsetenv("ARRANGE_THREADS");
  CHECK(a.nets == b.nets);
  CHECK(a.encoders == b.encoders);
  REQUIRE(a.trace.size() == b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i) CHECK(a.trace[i].total == b.trace[i].total);
  for (Slot s : kAllSlots) {
    if (!cfg.partition.contains(s)) CHECK(a.encoders.slot(s) == start.encoders.slot(s));
  }
}

TEST_CASE("a runaway learning rate reports the diverging step") {
  const Checkpoint start = initial_system({}, 6);
  TrainConfig cfg;
  cfg.steps = 5;
  cfg.learning_rate = 1e300;
  try {
    train_few_shot(demos(), start.nets, start.encoders, cfg);
    FAIL("expected DivergenceError");
  } catch (const DivergenceError& e) {
    CHECK(e.step() >= 0);
    CHECK(e.step() < 5);
    CHECK(std::string(e.what()).find("step " + std::to_string(e.step())) != std::string::npos);
  }
}

TEST_CASE("checkpoints round-trip byte for byte") {
  Checkpoint c = initial_system({0.3, false, 2}, 9);
  c.partition = PartitionPolicy::both;
  c.seed = 12345678901234ULL;
  const std::string text = save_checkpoint(c);
  CHECK(text.rfind("arrange-ckpt/1\n", 0) == 0);
  CHECK(text.find("partition both\n") != std::string::npos);
  const Checkpoint back = load_checkpoint(text);
  CHECK(save_checkpoint(back) == text);
  const Checkpoint q = quantized(c);
  CHECK(back.nets == q.nets);
  CHECK(back.encoders == q.encoders);
  CHECK(back.partition == c.partition);
  CHECK(back.seed == c.seed);
  CHECK(quantized(q).nets == q.nets);
}

TEST_CASE("malformed checkpoints are rejected") {
  const std::string text = save_checkpoint(initial_system({}, 1));
  CHECK_THROWS_AS(load_checkpoint(""), FormatError);
  CHECK_THROWS_AS(load_checkpoint("arrange-ckpt/2\n" + text.substr(text.find('\n') + 1)), FormatError);
  CHECK_THROWS_AS(load_checkpoint(text.substr(0, text.size() / 2)), FormatError);
  std::string bad = text;
  bad.replace(bad.find("tl_head.hidden.bias"), 19, "tl_head.hidden.bogus");
  CHECK_THROWS_AS(load_checkpoint(bad), FormatError);
  bad = text;
  const std::size_t line = bad.find("\nphi.output.bias");
  bad.replace(bad.find(' ', bad.find(' ', line + 1) + 1) + 1, 8, "zzzzzzzz");
  CHECK_THROWS_AS(load_checkpoint(bad), FormatError);
  bad = text;
  bad.replace(bad.find("partition none"), 14, "partition most");
  CHECK_THROWS_AS(load_checkpoint(bad), FormatError);
  CHECK_THROWS_AS(load_checkpoint(text + "extra\n"), FormatError);
}

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(ARRANGE_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("arrange_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
  for (const char* args : {"", "frobnicate", "eval --bogus", "eval --task stack-blocks", "eval --split mid",
                           "eval --episodes 0", "eval --max-steps -1", "infer", "train --partition most --out x",
                           "eval --checkpoint /nonexistent/ckpt", "eval --config /nonexistent/cfg"}) {
    CAPTURE(args);
    CHECK(run(args) == 2);
  }
  CHECK(run("--help") == 0);
}

TEST_CASE("runtime failures exit with 1") {
  const fs::path dir = scratch("runtime");
  std::ofstream(dir / "bad.ckpt") << "not a checkpoint\n";
  CHECK(run("eval --checkpoint " + (dir / "bad.ckpt").string()) == 1);
  std::ofstream(dir / "scene.json") << "{}";
  CHECK(run("infer --scene " + (dir / "scene.json").string() + " --instruction 'put the red block in a blue bowl' --out " +
            (dir / "o").string()) == 1);
}

TEST_CASE("infer parses the instruction into both queries") {
  const fs::path dir = scratch("infer");
  REQUIRE(run("infer --instruction 'put the brown blocks in a cyan bowl' --out " + dir.string()) == 0);
  const auto j = nlohmann::json::parse(slurp(dir / "decision.json"));
  CHECK(j["tl_query"] == "a photo of the brown blocks");
  CHECK(j["rd_query"] == "a photo of a cyan bowl");
  for (const char* f : {"pick.pgm", "place.pgm", "confidence_tl.pgm", "confidence_rd.pgm", "masks.pgm",
                        "embeddings.emb", "observation.ppm"})
    CHECK(fs::exists(dir / f));
  CHECK(slurp(dir / "confidence_tl.pgm").rfind("P5", 0) == 0);
}

TEST_CASE("external masks and embeddings reproduce the internal decision") {
  const fs::path dir = scratch("bridge");
  REQUIRE(run("gen --task pack-block-in-box --split unseen --seed 3 --episodes 2 --out " + (dir / "gen").string()) == 0);
  const std::string ep = (dir / "gen" / "episode_001.json").string();
  REQUIRE(run("infer --episode " + ep + " --out " + (dir / "a").string()) == 0);
  REQUIRE(run("infer --episode " + ep + " --masks " + (dir / "a" / "masks.pgm").string() + " --embeddings " +
              (dir / "a" / "embeddings.emb").string() + " --out " + (dir / "b").string()) == 0);
  CHECK(slurp(dir / "a" / "decision.json") == slurp(dir / "b" / "decision.json"));
}

TEST_CASE("eval echoes its budget and honours config files") {
  const fs::path dir = scratch("eval");
  std::ofstream(dir / "run.cfg") << "# evaluation settings\nepisodes = 4\nmax-steps = 2\nsplit = unseen\n";
  REQUIRE(run("eval --config " + (dir / "run.cfg").string() + " --episodes 3 --out " + dir.string()) == 0);
  const auto j = nlohmann::json::parse(slurp(dir / "eval.json"));
  CHECK(j["config"]["episodes"] == 3);
  CHECK(j["config"]["max_steps"] == 2);
  CHECK(j["config"]["split"] == "unseen");
  CHECK(j["success_rate"] == 100.0);

  std::ofstream(dir / "bad.cfg") << "frobnicate = 1\n";
  CHECK(run("eval --config " + (dir / "bad.cfg").string()) == 2);
}

TEST_CASE("train writes a loadable checkpoint that eval accepts") {
  const fs::path dir = scratch("train");
  REQUIRE(run("train --demos 2 --steps 2 --partition both --seed 5 --out " + dir.string()) == 0);
  CHECK(slurp(dir / "checkpoint.ckpt").rfind("arrange-ckpt/1\n", 0) == 0);
  const auto log = nlohmann::json::parse(slurp(dir / "train.json"));
  CHECK(log["trace"].size() == 2);
  CHECK(run("eval --episodes 2 --checkpoint " + (dir / "checkpoint.ckpt").string()) == 0);
  CHECK(run("train --demos 1 --steps 1 --from " + (dir / "checkpoint.ckpt").string() + " --out " +
            (dir / "again").string()) == 0);
}

TEST_CASE("bench output directories are reproducible") {
  const fs::path a = scratch("bench_a"), b = scratch("bench_b");
  const std::string args = "bench --seed 7 --tasks put-block-in-bowl --demos 1,2 --episodes 2 --steps 2 --out ";
  REQUIRE(run(args + a.string()) == 0);
  REQUIRE(run(args + b.string()) == 0);
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    const fs::path other = b / fs::relative(entry.path(), a);
    CAPTURE(other.string());
    REQUIRE(fs::exists(other));
    CHECK(slurp(entry.path()) == slurp(other));
  }
  CHECK(fs::exists(a / "checkpoints" / "put-block-in-bowl-2.ckpt"));
}

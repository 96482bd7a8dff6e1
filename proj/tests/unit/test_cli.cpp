#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "config.hpp"
#include "doctest.h"
#include "rundir.hpp"
#include "sda/error.hpp"
#include "sda/io.hpp"

using namespace sda;
using namespace sda::cli;
namespace fs = std::filesystem;

namespace {

const fs::path& workdir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "sda_test_cli";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

struct Run {
  int code = -1;
  std::string out;
};

/// Runs the sda binary inside the scratch directory.
Run run_sda(const std::string& args) {
  const fs::path log = workdir() / "stdout.txt";
  const std::string cmd = "cd '" + workdir().string() + "' && SDA_LOG=error '" SDA_BIN "' " + args + " > '" +
                          log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_text(log);
  return r;
}

std::string file(const std::string& rel) { return read_text(workdir() / rel); }

}  // namespace

TEST_CASE("config parsing and validation") {
  const RunConfig c = RunConfig::from_text("# comment\nseed = 7\nobs_fraction = 0.3  # trailing\n\nvariants = storm\n", "t");
  CHECK(c.seed() == 7);
  CHECK(c.real("obs_fraction") == 0.3);
  CHECK(c.is_set("seed"));
  CHECK_FALSE(c.is_set("members"));
  CHECK(c.int32("members") == 16);
  CHECK(c.text_list("variants") == std::vector<std::string>{"storm"});

  const RunConfig back = RunConfig::from_text(c.serialize(), "snapshot");
  CHECK(back.serialize() == c.serialize());

  auto message = [](const std::string& text) {
    try {
      RunConfig::from_text(text, "f");
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message("members = -3").find("'members'") != std::string::npos);
  CHECK(message("lr = fast").find("'lr'") != std::string::npos);
  CHECK(message("obs_fraction = 1.5").find("'obs_fraction'") != std::string::npos);
  CHECK(message("sampler = euler").find("'sampler'") != std::string::npos);
  CHECK(message("edges = 16,x").find("'edges'") != std::string::npos);
  CHECK(message("colour = red").find("'colour'") != std::string::npos);
  CHECK(message("seed = 1\nseed = 2").find("f:2") != std::string::npos);
  CHECK(message("just words").find("f:1") != std::string::npos);

  RunConfig d;
  d.set("edges", "8, 16 ,32");
  CHECK(d.int_list("edges") == std::vector<int>{8, 16, 32});
  CHECK(field_spec("n_steps").flag() == "--n-steps");
}

TEST_CASE("sha256 and manifest") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  const fs::path root = workdir() / "manifest";
  fs::create_directories(root / "sub");
  write_text(root / "b.txt", "b");
  write_text(root / "sub" / "a.txt", "abc");
  write_text(root / "manifest.sha256", "ignored");
  const std::string m = manifest(root);
  CHECK(m == sha256_hex("b") + "  b.txt\n" + sha256_hex("abc") + "  sub/a.txt\n");
}

TEST_CASE("usage and config errors map to exit codes") {
  CHECK(run_sda("").code == 64);
  const Run unknown = run_sda("frobnicate");
  CHECK(unknown.code == 64);
  CHECK(unknown.out.find("Subcommands:") != std::string::npos);
  CHECK(run_sda("assimilate --not-a-field 1").code == 64);
  const Run bad = run_sda("train --out bad --batch 0");
  CHECK(bad.code == 2);
  CHECK(bad.out.find("'batch'") != std::string::npos);
  CHECK(run_sda("assimilate --out s --denoiser storm").code == 2);
  CHECK(run_sda("--help").code == 0);
}

TEST_CASE("generate-data writes reproducible, hashed containers") {
  REQUIRE(run_sda("generate-data --out g1 --K 3 --seed 5").code == 0);
  REQUIRE(run_sda("generate-data --out g2 --K 3 --seed 5").code == 0);
  int containers = 0;
  for (const auto& e : fs::directory_iterator(workdir() / "g1"))
    containers += e.path().extension() == ".sdaf";
  CHECK(containers == 4);
  CHECK(file("g1/truth.sdaf") == file("g2/truth.sdaf"));
  CHECK(file("g1/frame_02.sdaf") == file("g2/frame_02.sdaf"));

  std::istringstream lines(file("g1/manifest.sha256"));
  std::string hash, path;
  int listed = 0;
  while (lines >> hash >> path) {
    CHECK(hash == sha256_hex(file("g1/" + path)));
    ++listed;
  }
  CHECK(listed == 10);  // 4 containers, observations and sidecar, 4 run records
  for (const char* f : {"config.txt", "seed.txt", "version.txt", "command.txt"})
    CHECK(fs::exists(workdir() / "g1" / f));
  CHECK(RunConfig::from_file(workdir() / "g1" / "config.txt").int32("K") == 3);
}

TEST_CASE("assimilate metrics and provenance") {
  REQUIRE(run_sda("assimilate --out prior --mode prior --members 6 --n-steps 12").code == 0);
  REQUIRE(run_sda("assimilate --out zero --obs-fraction 0 --members 6 --n-steps 12").code == 0);
  REQUIRE(run_sda("assimilate --out post --members 6 --n-steps 12 --obs-fraction 0.3").code == 0);
  const std::string prior = file("prior/metrics.csv"), zero = file("zero/metrics.csv"), post = file("post/metrics.csv");
  CHECK(prior.find(",prior,") != std::string::npos);
  CHECK(post.find(",posterior,") != std::string::npos);
  std::string relabelled = zero;
  for (auto at = relabelled.find("posterior"); at != std::string::npos; at = relabelled.find("posterior"))
    relabelled.replace(at, 9, "prior");
  CHECK(relabelled == prior);
  CHECK(post != relabelled);

  REQUIRE(run_sda("generate-data --out data --K 2 --seed 3").code == 0);
  const Run from_data = run_sda("assimilate --out fromdata --data ../data --members 4 --n-steps 8 --seed 3");
  CHECK(from_data.code == 0);
  CHECK(file("fromdata/truth.sdaf") == file("data/truth.sdaf"));

  const Run preset = run_sda("assimilate --out conj --preset conjugate");
  CHECK(preset.code == 0);
  CHECK(preset.out.rfind("PASS [1]", 0) == 0);
}

TEST_CASE("train resumes to the uninterrupted parameters") {
  const std::string common = " --ny 8 --nx 8 --batch 4 --d-model 8 --n-heads 1 --n-layers 1 --seed 2";
  REQUIRE(run_sda("train --out full --train-steps 12" + common).code == 0);
  REQUIRE(run_sda("train --out half --train-steps 5" + common).code == 0);
  REQUIRE(run_sda("train --out rest --train-steps 12 --resume ../half/checkpoint.sdck" + common).code == 0);
  CHECK(file("full/params.sdnp") == file("rest/params.sdnp"));
  REQUIRE(run_sda("train --out chunks --train-steps 12 --checkpoint-every 4" + common).code == 0);
  CHECK(file("full/params.sdnp") == file("chunks/params.sdnp"));
  CHECK(file("rest/train_log.csv").find("\n5,") != std::string::npos);
  CHECK(run_sda("train --out back --train-steps 3 --resume ../full/checkpoint.sdck" + common).code == 2);
}

TEST_CASE("bench, probe and verify") {
  const Run scaling = run_sda("bench --suite scaling --out bs --edges 16,32 --repeats 1 --warmup 0");
  CHECK(scaling.code == 0);
  CHECK(scaling.out.find("slope") != std::string::npos);
  CHECK(file("bs/slopes.csv").rfind("variant,slope,intercept,points\n", 0) == 0);
  CHECK(fs::exists(workdir() / "bs" / "scaling.svg"));

  CHECK(run_sda("bench-frontier --out bf --variants storm,timesformer --budgets 1e10").code == 0);
  CHECK(run_sda("bench-frontier --out bf2 --variants storm-tiled").code == 2);
  CHECK(run_sda("bench-ensemble --out be --ensemble-workers 1,2 --members-per-worker 1 --ensemble-edge 8 "
            "--ensemble-steps 2 --d-model 8 --n-layers 1 --repeats 1")
            .code == 0);
  CHECK(file("be/ensemble_bench.csv").find(",1\n") != std::string::npos);

  const Run probe = run_sda("probe-propagation --out pr --ny 32 --nx 32 --tile-core 8 --tile-halo 4 --n-steps 20");
  CHECK(probe.code == 0);
  CHECK(probe.out.find("ring 1 first influenced at step 1") != std::string::npos);
  CHECK(run_sda("probe-propagation --out pr0").code == 2);

  const Run verify = run_sda("verify --out v --suites partition,tiling,gradients");
  CHECK(verify.code == 0);
  CHECK(verify.out.find("FAIL") == std::string::npos);
  CHECK(run_sda("verify --out v2 --suites nonsense").code == 2);
}

#include <filesystem>

#include "doctest.h"
#include "helpers.hpp"
#include "sda/error.hpp"
#include "sda/guidance.hpp"
#include "sda/io.hpp"
#include "sda/storm.hpp"
#include "sda/train.hpp"

using namespace sda;
using namespace sda::test;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "sda_test_io";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("field container round trip") {
  const GridSpec spec = make_grid(5, 7, 2, 1, 1);
  Rng rng(1);
  const std::vector<StateField> frames{normal_field(spec, rng), normal_field(spec, rng), normal_field(spec, rng)};

  const auto back = decode_fields(encode_fields(frames, DType::f64));
  REQUIRE(back.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(back[k].spec().K == 3);
    CHECK(back[k].vector() == frames[k].vector());
  }

  const auto single = decode_fields(encode_fields(frames, DType::f32));
  for (std::size_t k = 0; k < 3; ++k) CHECK(max_abs_diff(single[k], frames[k]) < 1e-6);

  const fs::path p = scratch("frames.sdaf");
  write_fields(p, frames);
  const auto disk = read_fields(p);
  CHECK(disk[1].vector() == frames[1].vector());

  const GridSpec patched = make_grid(4, 4, 1, 2, 1);
  CHECK(read_fields(p, 1)[0].spec().patch == 1);
  write_fields(p, std::vector<StateField>{StateField(patched, 1.0)});
  CHECK(read_fields(p, 2)[0].spec().patch == 2);
}

TEST_CASE("malformed containers are rejected") {
  const GridSpec spec = make_grid(2, 2, 1, 1, 1);
  std::string bytes = encode_fields(std::vector<StateField>{StateField(spec, 1.0)}, DType::f64);
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(decode_fields(bad_magic), FormatError);
  CHECK_THROWS_AS(decode_fields(bytes.substr(0, bytes.size() - 3)), FormatError);
  CHECK_THROWS_AS(decode_fields(bytes + "junk"), FormatError);
  CHECK_THROWS_AS(read_fields(scratch("missing.sdaf")), FormatError);
}

TEST_CASE("csv export refuses large grids") {
  const fs::path p = scratch("field.csv");
  write_field_csv(p, StateField(make_grid(2, 3, 1, 1, 1), 0.5));
  CHECK(read_text(p).rfind("var,row,col,value\n", 0) == 0);
  CHECK_THROWS_AS(write_field_csv(p, StateField(make_grid(65, 8, 1, 1, 1))), ConfigError);
}

TEST_CASE("observation file round trip") {
  const GridSpec spec = make_grid(6, 6, 1, 1, 1);
  Rng rng(2);
  const auto op = ObservationOperator::random(spec, 0.25, 3);
  const ObservationSet y = observe(normal_field(spec, rng), op, 0.2, rng);
  const fs::path p = scratch("obs.csv");
  write_observations(p, {op, y, 3, 0.25});
  const ObservationFile back = read_observations(p, spec);
  CHECK(back.op.mask() == op.mask());
  CHECK(back.obs.noise_var == y.noise_var);
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(back.obs.values[i] == doctest::Approx(y.values[i]).epsilon(1e-15));
  CHECK(back.mask_seed == 3);
  CHECK_THROWS(read_observations(p, make_grid(5, 5, 1, 1, 1)));
}

TEST_CASE("parameter and checkpoint containers round trip") {
  StormConfig cfg;
  cfg.d_model = 8;
  cfg.n_heads = 1;
  cfg.n_layers = 1;
  Rng init(4);
  const StormParams params = init_storm(cfg, init, false);
  const StormParams back = decode_params(encode_params(params));
  CHECK(back.tensors == params.tensors);
  CHECK(back.config.d_model == 8);
  CHECK(back.config.K == cfg.K);
  CHECK(back.config.sigma_data == cfg.sigma_data);

  TrainState state = TrainState::fresh(params);
  state.step = 17;
  state.adam_m[0][0] = 0.25f;
  const fs::path p = scratch("state.sdck");
  save_checkpoint(p, state);
  const TrainState loaded = load_checkpoint(p);
  CHECK(loaded.step == 17);
  CHECK(loaded.adam_m == state.adam_m);
  CHECK(loaded.adam_v == state.adam_v);
  CHECK(loaded.params.tensors == state.params.tensors);
  CHECK_THROWS_AS(load_params(p), FormatError);
}

#include "doctest.h"
#include "helpers.hpp"
#include "sda/error.hpp"
#include "sda/grf.hpp"

using namespace sda;
using namespace sda::test;

TEST_CASE("make_grid token counts") {
  CHECK(make_grid(8, 8, 1, 2, 4).tokens() == 16);
  CHECK(make_grid(720, 1440, 6, 2, 8).tokens() == 259200);
  CHECK_THROWS_AS(make_grid(8, 6, 1, 4, 1), ConfigError);
  CHECK_THROWS_AS(make_grid(0, 8, 1, 1, 1), ConfigError);
}

TEST_CASE("patchify layout") {
  const GridSpec spec = make_grid(4, 4, 1, 2, 1);
  StateField f(spec);
  const TokenGrid t0 = patchify(f, spec);
  CHECK(t0.n_tokens == 4);
  CHECK(t0.width == 4);

  // Cell (2, 3) sits in patch (1, 1), the last token of the 2x2 patch grid,
  // at in-patch position (0, 1).
  f.at(0, 2, 3) = 1.0;
  const TokenGrid t = patchify(f, spec);
  for (int tok = 0; tok < t.n_tokens; ++tok)
    for (int off = 0; off < t.width; ++off)
      CHECK(t.at(tok, off) == ((tok == 3 && off == 1) ? 1.0 : 0.0));
}

TEST_CASE("patchify variables vary fastest inside a token") {
  const GridSpec spec = make_grid(2, 2, 3, 2, 1);
  StateField f(spec);
  f.at(2, 1, 0) = 5.0;  // var 2, in-patch (1, 0)
  const TokenGrid t = patchify(f, spec);
  CHECK(t.at(0, (1 * 2 + 0) * 3 + 2) == 5.0);
}

TEST_CASE("patchify round trip over random shapes") {
  Rng rng(11);
  for (int trial = 0; trial < 25; ++trial) {
    const int patch = 1 + static_cast<int>(rng.below(4));
    const int ny = patch * (1 + static_cast<int>(rng.below(5)));
    const int nx = patch * (1 + static_cast<int>(rng.below(5)));
    const int vars = 1 + static_cast<int>(rng.below(3));
    const GridSpec spec = make_grid(ny, nx, vars, patch, 1);
    const StateField f = normal_field(spec, rng);
    CHECK(bit_equal(unpatchify(patchify(f, spec), spec), f));
  }
}

TEST_CASE("sample_grf degenerate limits") {
  const GridSpec spec = make_grid(16, 16, 1, 1, 1);
  Rng rng(3);
  const StateField flat = sample_grf(spec, {4.0, 0.0, 2.5}, rng);
  for (double v : flat.values()) CHECK(v == doctest::Approx(2.5).epsilon(1e-12));

  const StateField offset = sample_grf(spec, {1e9, 1.0, 0.0}, rng);
  for (double v : offset.values()) CHECK(v == doctest::Approx(offset[0]).epsilon(1e-6));
  CHECK(offset[0] != 0.0);
}

TEST_CASE("sample_grf lag-4 correlation matches the kernel") {
  const GridSpec spec = make_grid(64, 64, 1, 1, 1);
  double num = 0.0, den = 0.0;
  for (int seed = 0; seed < 100; ++seed) {
    Rng rng(static_cast<std::uint64_t>(seed));
    const StateField f = sample_grf(spec, {4.0, 1.0, 0.0}, rng);
    for (int r = 0; r < 64; ++r)
      for (int c = 0; c < 64; ++c) {
        num += f.at(0, r, c) * f.at(0, r, (c + 4) % 64);
        den += f.at(0, r, c) * f.at(0, r, c);
      }
  }
  CHECK(std::abs(num / den - std::exp(-0.5)) < 0.1);
}

TEST_CASE("sample_grf is reproducible") {
  const GridSpec spec = make_grid(16, 8, 2, 1, 1);
  Rng a(42, 7), b(42, 7);
  CHECK(bit_equal(sample_grf(spec, {}, a), sample_grf(spec, {}, b)));
}

TEST_CASE("evolve_context") {
  const GridSpec spec = make_grid(8, 8, 1, 1, 4);
  Rng rng(5);
  const StateField x0 = sample_grf(spec, {}, rng);

  const TemporalContext still = evolve_context(x0, 4, 0.0, rng, Dynamics::identity());
  for (const auto& f : still.frames()) CHECK(bit_equal(f, x0));

  CHECK(evolve_context(x0, 1, 0.3, rng).K() == 1);
  CHECK(bit_equal(evolve_context(x0, 1, 0.3, rng).frame(0), x0));

  const TemporalContext shifted = evolve_context(x0, 4, 0.0, rng, Dynamics::pure_shift(1));
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c) CHECK(shifted.frame(3).at(0, r, (c + 3) % 8) == x0.at(0, r, c));

  Rng a(9), b(9);
  const TemporalContext ca = evolve_context(x0, 3, 0.0, a), cb = evolve_context(x0, 3, 0.0, b);
  for (int k = 0; k < 3; ++k) CHECK(bit_equal(ca.frame(k), cb.frame(k)));
}

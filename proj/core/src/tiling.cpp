#include "sda/tiling.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "sda/error.hpp"
#include "sda/parallel.hpp"

namespace sda {

TilePlan::TilePlan(GridSpec grid, int core, int halo) : grid_(grid), core_(core), halo_(halo) {
  if (core <= 0 || grid.ny % core != 0 || grid.nx % core != 0) {
    throw ConfigError("tile core " + std::to_string(core) + " must divide the grid " +
                      std::to_string(grid.ny) + "x" + std::to_string(grid.nx));
  }
  if (halo < 0) throw ConfigError("tile halo must be >= 0");
  if (grid.patch > 1 && (core % grid.patch != 0 || halo % grid.patch != 0)) {
    throw ConfigError("tile core and halo must be multiples of the patch size");
  }
  tile_rows_ = grid.ny / core;
  tile_cols_ = grid.nx / core;
  tiles_.reserve(static_cast<std::size_t>(tile_rows_) * tile_cols_);
  for (int tr = 0; tr < tile_rows_; ++tr) {
    for (int tc = 0; tc < tile_cols_; ++tc) {
      Tile t;
      t.tile_row = tr;
      t.tile_col = tc;
      t.core = {tr * core, tc * core, core, core};
      t.window_row0 = t.core.row0 - halo;
      t.window_col0 = t.core.col0 - halo;
      const int r0 = std::max(0, t.window_row0);
      const int c0 = std::max(0, t.window_col0);
      const int r1 = std::min(grid.ny, t.core.row1() + halo);
      const int c1 = std::min(grid.nx, t.core.col1() + halo);
      t.ext = {r0, c0, r1 - r0, c1 - c0};
      tiles_.push_back(t);
    }
  }
}

TilePlan plan_tiles(const GridSpec& spec, int core, int halo) { return TilePlan(spec, core, halo); }

std::string plan_csv(const TilePlan& plan) {
  std::ostringstream ss;
  ss << "tile,core_r0,core_c0,core_r1,core_c1,ext_r0,ext_c0,ext_r1,ext_c1\n";
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const Tile& t = plan.tiles()[i];
    ss << i << ',' << t.core.row0 << ',' << t.core.col0 << ',' << t.core.row1() << ','
       << t.core.col1() << ',' << t.ext.row0 << ',' << t.ext.col0 << ',' << t.ext.row1() << ','
       << t.ext.col1() << '\n';
  }
  return ss.str();
}

std::vector<double> hanning(int length) {
  if (length < 2) throw ConfigError("Hanning window needs length >= 2");
  std::vector<double> w(static_cast<std::size_t>(length));
  for (int n = 0; n < length; ++n) {
    w[static_cast<std::size_t>(n)] =
        0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * n / (length - 1)));
  }
  return w;
}

BlendWeights hanning_weights(const TilePlan& plan) {
  std::vector<double> window = hanning(plan.window_edge());
  for (double& v : window) v = std::max(v, kWeightFloor);

  const GridSpec& g = plan.grid();
  BlendWeights bw;
  bw.raw.resize(plan.size());
  bw.normalized.resize(plan.size());
  std::vector<double> total(g.cells(), 0.0);
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const Tile& t = plan.tiles()[i];
    auto& raw = bw.raw[i];
    raw.resize(static_cast<std::size_t>(t.ext.rows) * t.ext.cols);
    for (int r = 0; r < t.ext.rows; ++r) {
      const double wr = window[static_cast<std::size_t>(t.ext.row0 + r - t.window_row0)];
      for (int c = 0; c < t.ext.cols; ++c) {
        const double wc = window[static_cast<std::size_t>(t.ext.col0 + c - t.window_col0)];
        raw[static_cast<std::size_t>(r) * t.ext.cols + c] = wr * wc;
        total[static_cast<std::size_t>(t.ext.row0 + r) * g.nx + t.ext.col0 + c] += wr * wc;
      }
    }
  }
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const Tile& t = plan.tiles()[i];
    auto& norm = bw.normalized[i];
    norm.resize(bw.raw[i].size());
    for (int r = 0; r < t.ext.rows; ++r) {
      for (int c = 0; c < t.ext.cols; ++c) {
        const std::size_t li = static_cast<std::size_t>(r) * t.ext.cols + c;
        norm[li] = bw.raw[i][li] / total[static_cast<std::size_t>(t.ext.row0 + r) * g.nx + t.ext.col0 + c];
      }
    }
  }
  return bw;
}

TiledDenoiser::TiledDenoiser(const Denoiser& inner, const TilePlan& plan, int workers)
    : inner_(inner), plan_(plan), weights_(hanning_weights(plan)), workers_(std::max(1, workers)) {}

void TiledDenoiser::check(const StateField& z, const Region& region) const {
  if (!z.spec().same_layout(plan_.grid()) || !(region == whole(z))) {
    throw ShapeError("tiled denoiser: field does not match the tile plan grid");
  }
}

namespace {

// Blends per-tile fields over their extended rectangles in tile order. The
// first contribution to a cell is assigned rather than added so a sole
// covering tile with weight 1 reproduces its input exactly.
StateField blend(const TilePlan& plan, const BlendWeights& weights,
                 const std::vector<StateField>& parts) {
  const GridSpec& g = plan.grid();
  StateField out(g);
  std::vector<std::uint8_t> seen(g.cells(), 0);
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const Tile& t = plan.tiles()[i];
    const auto& w = weights.normalized[i];
    for (int r = 0; r < t.ext.rows; ++r) {
      for (int c = 0; c < t.ext.cols; ++c) {
        const std::size_t cell = static_cast<std::size_t>(t.ext.row0 + r) * g.nx + t.ext.col0 + c;
        const double wt = w[static_cast<std::size_t>(r) * t.ext.cols + c];
        const bool first = seen[cell] == 0;
        seen[cell] = 1;
        for (int v = 0; v < g.n_vars; ++v) {
          const double contrib = wt * parts[i].at(v, r, c);
          double& dst = out.at(v, t.ext.row0 + r, t.ext.col0 + c);
          dst = first ? contrib : dst + contrib;
        }
      }
    }
  }
  return out;
}

}  // namespace

StateField TiledDenoiser::evaluate_region(const StateField& z, double sigma,
                                          const TemporalContext& ctx, const Region& region) const {
  check(z, region);
  std::vector<StateField> parts(plan_.size());
  parallel_for(plan_.size(), workers_, [&](std::size_t i) {
    const Region& ext = plan_.tiles()[i].ext;
    parts[i] = inner_.evaluate_region(crop(z, ext), sigma, crop(ctx, ext), ext);
  });
  return blend(plan_, weights_, parts);
}

StateField TiledDenoiser::vjp_region(const StateField& z, double sigma, const TemporalContext& ctx,
                                     const StateField& cotangent, const Region& region) const {
  check(z, region);
  require_same_shape(z, cotangent, "tiled vjp");
  const GridSpec& g = plan_.grid();
  std::vector<StateField> parts(plan_.size());
  parallel_for(plan_.size(), workers_, [&](std::size_t i) {
    const Tile& t = plan_.tiles()[i];
    StateField cot = crop(cotangent, t.ext);
    const auto& w = weights_.normalized[i];
    for (int v = 0; v < g.n_vars; ++v) {
      for (int r = 0; r < t.ext.rows; ++r) {
        for (int c = 0; c < t.ext.cols; ++c) cot.at(v, r, c) *= w[static_cast<std::size_t>(r) * t.ext.cols + c];
      }
    }
    parts[i] = inner_.vjp_region(crop(z, t.ext), sigma, crop(ctx, t.ext), cot, t.ext);
  });
  StateField out(g);
  for (std::size_t i = 0; i < plan_.size(); ++i) {
    const Tile& t = plan_.tiles()[i];
    for (int v = 0; v < g.n_vars; ++v) {
      for (int r = 0; r < t.ext.rows; ++r) {
        for (int c = 0; c < t.ext.cols; ++c) out.at(v, t.ext.row0 + r, t.ext.col0 + c) += parts[i].at(v, r, c);
      }
    }
  }
  return out;
}

StateField tiled_denoise(const Denoiser& denoiser, const StateField& z, double sigma,
                         const TemporalContext& ctx, const TilePlan& plan, int workers) {
  return TiledDenoiser(denoiser, plan, workers).evaluate(z, sigma, ctx);
}

int ProbeResult::first_step(int ring) const {
  int best = -1;
  for (const auto& s : samples) {
    if (s.ring == ring && s.influence > 0.0 && (best < 0 || s.step < best)) best = s.step;
  }
  return best;
}

int ProbeResult::max_ring() const {
  int best = -1;
  for (const auto& s : samples) {
    if (s.influence > 0.0) best = std::max(best, s.ring);
  }
  return best;
}

ProbeResult propagation_radius_probe(const Denoiser& denoiser, const TilePlan& plan,
                                     const NoiseSchedule& schedule, const TemporalContext& ctx,
                                     const Rng& rng, SamplerMode mode, double delta,
                                     int source_row, int source_col) {
  const GridSpec& g = plan.grid();
  ProbeResult result;
  if (source_row < 0 || source_col < 0) {
    const int tr = plan.tile_rows() / 2;
    const int tc = plan.tile_cols() / 2;
    source_row = tr * plan.core() + plan.core() / 2;
    source_col = tc * plan.core() + plan.core() / 2;
  }
  if (source_row >= g.ny || source_col >= g.nx) throw ConfigError("probe source outside the grid");
  result.source_row = source_row;
  result.source_col = source_col;

  auto run = [&](bool perturb) {
    std::vector<StateField> states;
    SamplerOptions opts;
    opts.mode = mode;
    opts.tiling = &plan;
    if (perturb) {
      opts.on_init = [&](NoisyState& s) { s.z.at(0, source_row, source_col) += delta; };
    }
    opts.on_step = [&](int, const NoisyState& s) { states.push_back(s.z); };
    Rng local = rng;
    states.push_back(run_reverse(denoiser, ctx, g, schedule, local, opts, {}));
    return states;
  };
  const auto base = run(false);
  const auto pert = run(true);

  const int src_tr = source_row / plan.core();
  const int src_tc = source_col / plan.core();
  int max_ring = 0;
  for (int tr = 0; tr < plan.tile_rows(); ++tr) {
    for (int tc = 0; tc < plan.tile_cols(); ++tc) {
      max_ring = std::max(max_ring, std::max(std::abs(tr - src_tr), std::abs(tc - src_tc)));
    }
  }
  for (std::size_t s = 0; s < base.size(); ++s) {
    std::vector<double> ring_max(static_cast<std::size_t>(max_ring) + 1, 0.0);
    for (int v = 0; v < g.n_vars; ++v) {
      for (int r = 0; r < g.ny; ++r) {
        for (int c = 0; c < g.nx; ++c) {
          const int ring = std::max(std::abs(r / plan.core() - src_tr), std::abs(c / plan.core() - src_tc));
          const double d = std::abs(pert[s].at(v, r, c) - base[s].at(v, r, c));
          auto& m = ring_max[static_cast<std::size_t>(ring)];
          m = std::max(m, d);
        }
      }
    }
    for (int ring = 0; ring <= max_ring; ++ring) {
      result.samples.push_back({static_cast<int>(s) + 1, ring, ring_max[static_cast<std::size_t>(ring)]});
    }
  }
  return result;
}

std::string probe_csv(const ProbeResult& probe) {
  std::ostringstream ss;
  ss << "step,ring,influence\n" << std::setprecision(9);
  for (const auto& s : probe.samples) ss << s.step << ',' << s.ring << ',' << s.influence << '\n';
  return ss.str();
}

std::vector<std::uint8_t> dependency_closure(const TilePlan& plan,
                                             const std::vector<std::uint8_t>& cells) {
  const GridSpec& g = plan.grid();
  if (cells.size() != g.cells()) throw ShapeError("dependency_closure: mask size mismatch");
  std::vector<std::uint8_t> out(g.cells(), 0);
  for (const Tile& t : plan.tiles()) {
    bool touched = false;
    for (int r = t.ext.row0; r < t.ext.row1() && !touched; ++r) {
      for (int c = t.ext.col0; c < t.ext.col1(); ++c) {
        if (cells[static_cast<std::size_t>(r) * g.nx + c] != 0) {
          touched = true;
          break;
        }
      }
    }
    if (!touched) continue;
    for (int r = t.ext.row0; r < t.ext.row1(); ++r) {
      for (int c = t.ext.col0; c < t.ext.col1(); ++c) out[static_cast<std::size_t>(r) * g.nx + c] = 1;
    }
  }
  return out;
}

}  // namespace sda

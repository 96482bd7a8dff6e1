#pragma once

#include <string>
#include <vector>

#include "sda/denoiser.hpp"
#include "sda/diffusion.hpp"
#include "sda/field.hpp"
#include "sda/rng.hpp"

namespace sda {

/// One tile: disjoint core, its halo-extended rectangle clamped to the domain,
/// and the unclamped extent the blend window is defined on.
struct Tile {
  int tile_row = 0;
  int tile_col = 0;
  Region core;
  Region ext;
  int window_row0 = 0;  // unclamped extent origin (may be negative)
  int window_col0 = 0;
};

/// Spatial partition of a grid into core x core tiles with `halo` cell borders.
class TilePlan {
 public:
  TilePlan() = default;
  TilePlan(GridSpec grid, int core, int halo);

  const GridSpec& grid() const { return grid_; }
  int core() const { return core_; }
  int halo() const { return halo_; }
  int tile_rows() const { return tile_rows_; }
  int tile_cols() const { return tile_cols_; }
  /// Unclamped extended edge length core + 2 halo.
  int window_edge() const { return core_ + 2 * halo_; }
  const std::vector<Tile>& tiles() const { return tiles_; }
  std::size_t size() const { return tiles_.size(); }
  /// Index of the tile whose core holds cell (r, c).
  int tile_of(int r, int c) const { return (r / core_) * tile_cols_ + c / core_; }

 private:
  GridSpec grid_;
  int core_ = 1;
  int halo_ = 0;
  int tile_rows_ = 0;
  int tile_cols_ = 0;
  std::vector<Tile> tiles_;
};

/// Throws ConfigError unless core divides ny and nx, halo >= 0, and (for
/// patch > 1) core and halo are multiples of the patch.
TilePlan plan_tiles(const GridSpec& spec, int core, int halo);

/// "tile,core_r0,...,ext_c1" listing.
std::string plan_csv(const TilePlan& plan);

inline constexpr double kWeightFloor = 1e-3;

/// 1-D Hanning window 0.5 (1 - cos(2 pi n / (L - 1))); throws for L < 2.
std::vector<double> hanning(int length);

/// Per-tile weights over each extended rectangle, normalized per cell.
struct BlendWeights {
  std::vector<std::vector<double>> raw;         // floored outer products
  std::vector<std::vector<double>> normalized;  // partition of unity

  double at(std::size_t tile, int local_r, int local_c, int cols) const {
    return normalized[tile][static_cast<std::size_t>(local_r) * cols + local_c];
  }
};

/// Clamped boundary tiles reuse the window of their unclamped extent,
/// cropped, so core cells still outweigh halo cells.
BlendWeights hanning_weights(const TilePlan& plan);

/// Wraps a denoiser so each call evaluates per-tile crops and blends them.
/// Tiles run on up to `workers` threads; the blend is a fixed-order
/// reduction, so results do not depend on the worker count.
class TiledDenoiser final : public Denoiser {
 public:
  TiledDenoiser(const Denoiser& inner, const TilePlan& plan, int workers = 1);

  const TilePlan& plan() const { return plan_; }
  const BlendWeights& weights() const { return weights_; }

  StateField evaluate_region(const StateField& z, double sigma, const TemporalContext& ctx,
                             const Region& region) const override;
  StateField vjp_region(const StateField& z, double sigma, const TemporalContext& ctx,
                        const StateField& cotangent, const Region& region) const override;
  bool has_vjp() const override { return inner_.has_vjp(); }
  bool pointwise() const override { return inner_.pointwise(); }
  std::string name() const override { return "tiled(" + inner_.name() + ")"; }

 private:
  void check(const StateField& z, const Region& region) const;

  const Denoiser& inner_;
  TilePlan plan_;
  BlendWeights weights_;
  int workers_;
};

StateField tiled_denoise(const Denoiser& denoiser, const StateField& z, double sigma,
                         const TemporalContext& ctx, const TilePlan& plan, int workers = 1);

struct InfluenceSample {
  int step = 0;  // 1-based reverse step; the final denoise is n_steps
  int ring = 0;  // Chebyshev tile distance from the source tile
  double influence = 0.0;
};

struct ProbeResult {
  int source_row = 0;
  int source_col = 0;
  std::vector<InfluenceSample> samples;

  /// First step with nonzero influence on `ring`, or -1.
  int first_step(int ring) const;
  /// Largest ring ever touched.
  int max_ring() const;
};

/// Runs the tiled reverse trajectory twice with identical seeds, the second
/// with one cell of the initial noise perturbed by `delta`, and records the
/// max |difference| per tile ring after every step. The source defaults to
/// the centre cell of the central tile.
ProbeResult propagation_radius_probe(const Denoiser& denoiser, const TilePlan& plan,
                                     const NoiseSchedule& schedule, const TemporalContext& ctx,
                                     const Rng& rng, SamplerMode mode = SamplerMode::sde,
                                     double delta = 1.0, int source_row = -1,
                                     int source_col = -1);

std::string probe_csv(const ProbeResult& probe);

/// Cells any tiled evaluation can couple to `cells` in one call: the union of
/// extended rectangles of every tile whose extended rectangle touches them.
std::vector<std::uint8_t> dependency_closure(const TilePlan& plan,
                                             const std::vector<std::uint8_t>& cells);

}  // namespace sda

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sda/tensor.hpp"

namespace sda {

enum class Variant { vit_global, timesformer, storm, storm_tiled };

std::string to_string(Variant v);
Variant parse_variant(const std::string& s);

/// Analytic attention cost of one variant. N counts spatial tokens per frame,
/// K frames of context, M compressed context tokens (per tile for storm-tiled).
struct CostModel {
  Variant variant = Variant::storm;
  double N = 0;
  double K = 1;
  double M = 0;
  double d_model = 32;
  double n_layers = 1;
  double tile_tokens = 0;  // storm-tiled: extended tokens per tile
  double tiles = 0;        // storm-tiled: tile count
  double token_width = 4;  // values per token (patch^2 * vars), context embedding cost

  void validate() const;
};

/// Score flops of the per-layer attention, times n_layers (1 multiply-add = 2):
///   vit-global  2 (KN)^2 d
///   timesformer 2 K N^2 d + 2 N K^2 d
///   storm       2 N^2 d + 2 N M d
///   storm-tiled tiles (2 n_t^2 d + 2 n_t M d)
double count_attention_flops(const CostModel& model);

/// Everything the comparison count leaves out as well: attention apply,
/// softmax (5 flops per score), projections, feed-forward and, for the storm
/// variants, context embedding per frame token.
double count_total_flops(const CostModel& model);

struct BenchRecord {
  Variant variant = Variant::storm;
  std::int64_t tokens = 0;  // N * K
  std::int64_t K = 1;
  std::int64_t N = 0;
  std::uint64_t flops = 0;            // all counted flops of one forward
  std::uint64_t attention_flops = 0;  // layer attention score flops only
  std::size_t peak_bytes = 0;         // tracked working memory
  double wall_s = 0.0;                // median
  double layer_s = 0.0;               // storm variants: median layer-stack time
  std::uint64_t seed = 0;
  bool capped = false;  // skipped: score matrix above the memory cap
};

struct ScalingConfig {
  std::vector<Variant> variants{Variant::vit_global, Variant::storm_tiled};
  /// Square grid edges in cells; tokens per frame are (edge / patch)^2.
  std::vector<int> edges{16, 32, 64, 128};
  int K = 1;
  int d_model = 8;
  int n_layers = 1;
  int n_heads = 1;
  int patch = 2;
  int tile_core = 16;
  int tile_halo = 4;
  int repeats = 5;
  int warmup = 1;
  std::uint64_t seed = 0;
  /// Quadratic variants whose attention probabilities would exceed this are capped.
  double max_score_bytes = 1.5e9;

  void validate() const;
};

/// Real forwards: the storm variants run STORM (tiled through TiledDenoiser),
/// vit-global and timesformer run reference layers built on the same kernels.
std::vector<BenchRecord> run_scaling_bench(const ScalingConfig& config);

/// One measured point (median of repeats after warmups).
BenchRecord bench_point(const ScalingConfig& config, Variant variant, int edge);

/// Cost model matching what bench_point executes for a variant and edge.
CostModel cost_model_for(const ScalingConfig& config, Variant variant, int edge);

struct SlopeFit {
  Variant variant = Variant::storm;
  double slope = 0.0;  // d log(wall) / d log(tokens)
  double intercept = 0.0;
  int points = 0;
};

/// Least squares in log-log space per variant, skipping capped points and,
/// when given, points outside [min_tokens, max_tokens].
std::vector<SlopeFit> fit_slopes(const std::vector<BenchRecord>& records, double min_tokens = 0,
                                 double max_tokens = 0);

/// "variant,tokens,K,N,flops,peak_bytes,wall_s,seed".
std::string bench_csv(const std::vector<BenchRecord>& records);

struct FrontierPoint {
  Variant variant = Variant::storm;
  double budget = 0.0;
  double N = 0.0;
  double K_max = 0.0;
};

/// Largest K (capped at k_cap) with count_total_flops <= budget, for each N.
/// N values with no feasible K >= 1 are omitted.
std::vector<FrontierPoint> feasibility_frontier(const CostModel& base, const std::vector<double>& N,
                                                double budget, double k_cap = 1e12);

/// "variant,budget,N,K_max".
std::string frontier_csv(const std::vector<FrontierPoint>& points);

struct EnsembleBenchConfig {
  std::vector<int> workers{1, 2, 4, 8};
  int members_per_worker = 4;
  int edge = 16;
  int n_steps = 16;
  int d_model = 32;
  int n_layers = 2;
  int repeats = 3;
  std::uint64_t seed = 0;
};

struct EnsembleBenchRow {
  int workers = 1;
  int members = 0;
  double wall_s = 0.0;
  double baseline_s = 0.0;  // members_per_worker members on one worker
  double ratio = 0.0;       // wall_s / baseline_s
  bool identical = false;   // members equal the single-worker run bit for bit
};

struct EnsembleBenchResult {
  std::vector<EnsembleBenchRow> rows;
  double sequential_s = 0.0;  // plain loop over the baseline members
};

/// Weak scaling: n = w * m members on w workers against m members on one.
EnsembleBenchResult run_ensemble_bench(const EnsembleBenchConfig& config);

/// "workers,members,wall_s,baseline_s,ratio,identical".
std::string ensemble_bench_csv(const EnsembleBenchResult& result);

struct PlotSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

/// Minimal SVG line plot; log axes drop non-positive values.
std::string svg_line_plot(const std::string& title, const std::string& x_label,
                          const std::string& y_label, const std::vector<PlotSeries>& series,
                          bool log_x, bool log_y);

}  // namespace sda

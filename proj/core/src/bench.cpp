#include "sda/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <limits>
#include <sstream>

#include "sda/diffusion.hpp"
#include "sda/ensemble.hpp"
#include "sda/error.hpp"
#include "sda/rng.hpp"
#include "sda/storm.hpp"
#include "sda/tiling.hpp"

namespace sda {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::vit_global: return "vit-global";
    case Variant::timesformer: return "timesformer";
    case Variant::storm: return "storm";
    case Variant::storm_tiled: return "storm-tiled";
  }
  return "?";
}

Variant parse_variant(const std::string& s) {
  if (s == "vit-global") return Variant::vit_global;
  if (s == "timesformer") return Variant::timesformer;
  if (s == "storm") return Variant::storm;
  if (s == "storm-tiled") return Variant::storm_tiled;
  throw ConfigError("unknown variant '" + s + "'");
}

void CostModel::validate() const {
  if (!(N > 0 && K > 0 && d_model > 0 && n_layers > 0 && token_width > 0)) {
    throw ConfigError("cost model: N, K, d_model, n_layers and token_width must be positive");
  }
  if (M < 0) throw ConfigError("cost model: M must be >= 0");
  if (variant == Variant::storm_tiled && !(tile_tokens > 0 && tiles > 0)) {
    throw ConfigError("cost model: storm-tiled needs positive tile_tokens and tiles");
  }
}

double count_attention_flops(const CostModel& m) {
  m.validate();
  const double d = m.d_model;
  double per_layer = 0.0;
  switch (m.variant) {
    case Variant::vit_global: per_layer = 2.0 * (m.K * m.N) * (m.K * m.N) * d; break;
    case Variant::timesformer: per_layer = 2.0 * m.K * m.N * m.N * d + 2.0 * m.N * m.K * m.K * d; break;
    case Variant::storm: per_layer = 2.0 * m.N * m.N * d + 2.0 * m.N * m.M * d; break;
    case Variant::storm_tiled:
      per_layer = m.tiles * (2.0 * m.tile_tokens * m.tile_tokens * d + 2.0 * m.tile_tokens * m.M * d);
      break;
  }
  return per_layer * m.n_layers;
}

namespace {

// Storm on n tokens: layer stack plus K-frame context embedding and compression.
double storm_total(double n, const CostModel& m) {
  const double d = m.d_model;
  const double scores = 2.0 * n * n * d + 2.0 * n * m.M * d;
  const double attention = 2.0 * scores + 5.0 * scores / (2.0 * d);
  const double dense = 28.0 * d * d * n + 4.0 * d * d * m.M;
  const double context = m.K * n * (2.0 * m.token_width * d + 8.0 * d * d) + 4.0 * d * d * n +
                         2.0 * d * d * m.M + 4.0 * m.M * n * d;
  return m.n_layers * (attention + dense) + context;
}

}  // namespace

double count_total_flops(const CostModel& m) {
  const double scores = count_attention_flops(m);
  const double d = m.d_model;
  const double tokens = m.K * m.N;
  switch (m.variant) {
    case Variant::vit_global:
      return 2.0 * scores + 5.0 * scores / (2.0 * d) + m.n_layers * 24.0 * d * d * tokens;
    case Variant::timesformer:
      return 2.0 * scores + 5.0 * scores / (2.0 * d) + m.n_layers * 32.0 * d * d * tokens;
    case Variant::storm: return storm_total(m.N, m);
    case Variant::storm_tiled: return m.tiles * storm_total(m.tile_tokens, m);
  }
  return 0.0;
}

void ScalingConfig::validate() const {
  if (variants.empty() || edges.empty()) throw ConfigError("scaling bench: no variants or sizes");
  if (K < 1 || d_model < 4 || d_model % 4 != 0 || n_layers < 1 || n_heads < 1 ||
      d_model % n_heads != 0 || patch < 1) {
    throw ConfigError("scaling bench: invalid model dimensions");
  }
  if (repeats < 1 || warmup < 0) throw ConfigError("scaling bench: repeats must be >= 1");
  for (int e : edges) {
    if (e < patch || e % patch != 0) throw ConfigError("scaling bench: edge must be a multiple of patch");
  }
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<double> random_weights(Rng& rng, int rows, int cols) {
  std::vector<double> w(static_cast<std::size_t>(rows) * cols);
  const double sd = 1.0 / std::sqrt(static_cast<double>(rows));
  for (double& x : w) x = sd * rng.normal();
  return w;
}

/// Attention layouts used only for measurement: pre-LN attention blocks and a
/// feed-forward block per layer, on the same kernels as STORM.
class ReferenceModel {
 public:
  ReferenceModel(Variant variant, int d, int layers, int heads, Rng& rng)
      : variant_(variant), d_(d), heads_(heads) {
    const int blocks = variant == Variant::timesformer ? 2 : 1;
    for (int l = 0; l < layers; ++l) {
      Layer layer;
      for (int b = 0; b < blocks; ++b) {
        layer.attn.push_back({random_weights(rng, d, d), random_weights(rng, d, d),
                              random_weights(rng, d, d), random_weights(rng, d, d)});
      }
      layer.w1 = random_weights(rng, d, 4 * d);
      layer.w2 = random_weights(rng, 4 * d, d);
      layers_.push_back(std::move(layer));
    }
    gain_.assign(static_cast<std::size_t>(d), 1.0);
    bias_.assign(static_cast<std::size_t>(4 * d), 0.0);
  }

  /// x holds K frames of N tokens, frame-major.
  void forward(Mat<double>& x, int K, int N) const {
    for (const auto& layer : layers_) {
      if (variant_ == Variant::vit_global) {
        attend(x, layer.attn[0]);
      } else {
        Mat<double> group;
        for (int k = 0; k < K; ++k) {  // spatial, per frame
          gather(x, group, N, [&](int i) { return k * N + i; });
          attend(group, layer.attn[0]);
          scatter(group, x, [&](int i) { return k * N + i; });
        }
        for (int n = 0; n < N; ++n) {  // temporal, per location
          gather(x, group, K, [&](int i) { return i * N + n; });
          attend(group, layer.attn[1]);
          scatter(group, x, [&](int i) { return i * N + n; });
        }
      }
      feed_forward(x, layer);
    }
  }

 private:
  struct Attn {
    std::vector<double> wq, wk, wv, wo;
  };
  struct Layer {
    std::vector<Attn> attn;
    std::vector<double> w1, w2;
  };

  template <class Index>
  void gather(const Mat<double>& x, Mat<double>& out, int rows, Index idx) const {
    out.resize(rows, d_);
    for (int i = 0; i < rows; ++i) std::copy_n(x.row(idx(i)), d_, out.row(i));
  }
  template <class Index>
  void scatter(const Mat<double>& in, Mat<double>& x, Index idx) const {
    for (int i = 0; i < in.rows; ++i) std::copy_n(in.row(i), d_, x.row(idx(i)));
  }

  void attend(Mat<double>& x, const Attn& a) const {
    LayerNormCache<double> cache;
    Mat<double> h, q, k, v, o, probs, y;
    layernorm_forward(x, gain_.data(), bias_.data(), h, cache);
    linear(h, a.wq.data(), static_cast<const double*>(nullptr), d_, q);
    linear(h, a.wk.data(), static_cast<const double*>(nullptr), d_, k);
    linear(h, a.wv.data(), static_cast<const double*>(nullptr), d_, v);
    attention_forward(q, k, v, heads_, o, &probs, FlopTag::layer_attention);
    linear(o, a.wo.data(), static_cast<const double*>(nullptr), d_, y);
    for (std::size_t i = 0; i < x.size(); ++i) x.data[i] += y.data[i];
  }

  void feed_forward(Mat<double>& x, const Layer& layer) const {
    LayerNormCache<double> cache;
    Mat<double> h, f, y;
    layernorm_forward(x, gain_.data(), bias_.data(), h, cache);
    linear(h, layer.w1.data(), bias_.data(), 4 * d_, f);
    for (double& t : f.data) t = gelu(t);
    linear(f, layer.w2.data(), bias_.data(), d_, y);
    for (std::size_t i = 0; i < x.size(); ++i) x.data[i] += y.data[i];
  }

  Variant variant_;
  int d_;
  int heads_;
  std::vector<Layer> layers_;
  std::vector<double> gain_, bias_;
};

StormConfig bench_storm_config(const ScalingConfig& c) {
  StormConfig cfg;
  cfg.patch = c.patch;
  cfg.d_model = c.d_model;
  cfg.n_layers = c.n_layers;
  cfg.n_heads = c.n_heads;
  cfg.K = c.K;
  return cfg;
}

StateField random_field(const GridSpec& spec, Rng& rng) {
  StateField f(spec);
  rng.fill_normal(f.values());
  return f;
}

TemporalContext random_context(const GridSpec& spec, int K, Rng& rng) {
  std::vector<StateField> frames;
  for (int k = 0; k < K; ++k) frames.push_back(random_field(spec, rng));
  return TemporalContext(std::move(frames));
}

// Largest attention probability matrix a forward materializes.
double score_bytes(const ScalingConfig& c, Variant v, double N) {
  const double h = c.n_heads;
  switch (v) {
    case Variant::vit_global: return h * (c.K * N) * (c.K * N) * sizeof(double);
    case Variant::timesformer: return h * std::max(N * N, double(c.K) * c.K) * sizeof(double);
    case Variant::storm: return h * N * N * sizeof(double);
    case Variant::storm_tiled: return 0.0;
  }
  return 0.0;
}

}  // namespace

CostModel cost_model_for(const ScalingConfig& c, Variant variant, int edge) {
  const int tr = edge / c.patch;
  CostModel m;
  m.variant = variant;
  m.N = static_cast<double>(tr) * tr;
  m.K = c.K;
  m.d_model = c.d_model;
  m.n_layers = c.n_layers;
  m.token_width = static_cast<double>(c.patch) * c.patch;
  if (variant == Variant::storm) m.M = compressed_tokens(tr, tr);
  if (variant == Variant::storm_tiled) {
    // Interior tiles; clamped border tiles are smaller.
    const TilePlan plan = plan_tiles(make_grid(edge, edge, 1, c.patch, c.K), c.tile_core, c.tile_halo);
    const int ext = std::min(edge, c.tile_core + 2 * c.tile_halo) / c.patch;
    m.tile_tokens = static_cast<double>(ext) * ext;
    m.tiles = static_cast<double>(plan.size());
    m.M = compressed_tokens(ext, ext);
  }
  return m;
}

BenchRecord bench_point(const ScalingConfig& c, Variant variant, int edge) {
  c.validate();
  const int tr = edge / c.patch;
  const std::int64_t N = static_cast<std::int64_t>(tr) * tr;
  BenchRecord rec;
  rec.variant = variant;
  rec.N = N;
  rec.K = c.K;
  rec.tokens = N * c.K;
  rec.seed = c.seed;
  if (score_bytes(c, variant, static_cast<double>(N)) > c.max_score_bytes) {
    rec.capped = true;
    return rec;
  }

  Rng rng(c.seed, 0xBE7C4ull);
  std::function<double()> run;  // returns layer-stack seconds (storm) or 0
  std::unique_ptr<ReferenceModel> ref;
  Mat<double> tokens0;
  std::unique_ptr<StormNet<double>> net;
  std::unique_ptr<StormDenoiser> denoiser;
  std::unique_ptr<TilePlan> plan;
  StateField z;
  TemporalContext ctx;
  const StormConfig cfg = bench_storm_config(c);

  if (variant == Variant::vit_global || variant == Variant::timesformer) {
    ref = std::make_unique<ReferenceModel>(variant, c.d_model, c.n_layers, c.n_heads, rng);
    tokens0.resize(static_cast<int>(rec.tokens), c.d_model);
    rng.fill_normal(tokens0.data);
    run = [&] {
      Mat<double> x = tokens0;
      ref->forward(x, c.K, static_cast<int>(N));
      return 0.0;
    };
  } else {
    Rng init(c.seed, 0x5708ull);
    const StormParams params = init_storm(cfg, init, false);
    const GridSpec spec = make_grid(edge, edge, 1, c.patch, c.K);
    z = random_field(spec, rng);
    ctx = random_context(spec, c.K, rng);
    if (variant == Variant::storm) {
      net = std::make_unique<StormNet<double>>(params);
      run = [&] {
        const StormInputs<double> in = make_inputs<double>(cfg, z, 1.0, ctx);
        StormTape<double> tape;
        net->forward(in, tape);
        return tape.layer_seconds;
      };
    } else {
      denoiser = std::make_unique<StormDenoiser>(params);
      plan = std::make_unique<TilePlan>(plan_tiles(spec, c.tile_core, c.tile_halo));
      run = [&] {
        tiled_denoise(*denoiser, z, 1.0, ctx, *plan, 1);
        return 0.0;
      };
    }
  }

  for (int i = 0; i < c.warmup; ++i) run();
  std::vector<double> walls, layers;
  for (int i = 0; i < c.repeats; ++i) {
    flops::reset();
    const std::size_t base = memtrack::current();
    memtrack::reset_peak();
    const auto t0 = Clock::now();
    layers.push_back(run());
    walls.push_back(seconds_since(t0));
    rec.peak_bytes = std::max(rec.peak_bytes, memtrack::peak() - base);
    rec.flops = flops::total();
    rec.attention_flops = flops::get(FlopTag::layer_attention);
  }
  rec.wall_s = median(walls);
  rec.layer_s = median(layers);
  return rec;
}

std::vector<BenchRecord> run_scaling_bench(const ScalingConfig& c) {
  c.validate();
  std::vector<BenchRecord> out;
  for (Variant v : c.variants) {
    for (int e : c.edges) out.push_back(bench_point(c, v, e));
  }
  return out;
}

std::vector<SlopeFit> fit_slopes(const std::vector<BenchRecord>& records, double min_tokens,
                                 double max_tokens) {
  std::vector<SlopeFit> fits;
  for (Variant v : {Variant::vit_global, Variant::timesformer, Variant::storm, Variant::storm_tiled}) {
    std::vector<double> xs, ys;
    for (const auto& r : records) {
      if (r.variant != v || r.capped || r.wall_s <= 0.0) continue;
      const double t = static_cast<double>(r.tokens);
      if (t < min_tokens || (max_tokens > 0 && t > max_tokens)) continue;
      xs.push_back(std::log(t));
      ys.push_back(std::log(r.wall_s));
    }
    if (xs.size() < 2) continue;
    const double n = static_cast<double>(xs.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      mx += xs[i];
      my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      sxx += (xs[i] - mx) * (xs[i] - mx);
      sxy += (xs[i] - mx) * (ys[i] - my);
    }
    if (sxx == 0.0) continue;
    SlopeFit f;
    f.variant = v;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    f.points = static_cast<int>(xs.size());
    fits.push_back(f);
  }
  return fits;
}

std::string bench_csv(const std::vector<BenchRecord>& records) {
  std::ostringstream ss;
  ss.precision(10);
  ss << "variant,tokens,K,N,flops,peak_bytes,wall_s,seed\n";
  for (const auto& r : records) {
    ss << to_string(r.variant) << ',' << r.tokens << ',' << r.K << ',' << r.N << ',' << r.flops
       << ',' << r.peak_bytes << ',';
    if (r.capped) {
      ss << "capped";
    } else {
      ss << r.wall_s;
    }
    ss << ',' << r.seed << '\n';
  }
  return ss.str();
}

std::vector<FrontierPoint> feasibility_frontier(const CostModel& base, const std::vector<double>& Ns,
                                                double budget, double k_cap) {
  std::vector<FrontierPoint> out;
  if (!(budget > 0.0)) return out;
  for (double N : Ns) {
    CostModel m = base;
    m.N = N;
    if (m.variant == Variant::storm) m.M = std::ceil(N / 4.0);
    auto cost = [&](double K) {
      m.K = K;
      return count_total_flops(m);
    };
    if (cost(1.0) > budget) continue;
    double lo = 1.0, hi = 2.0;
    while (hi <= k_cap && cost(hi) <= budget) {
      lo = hi;
      hi *= 2.0;
    }
    if (hi > k_cap) {
      hi = k_cap + 1.0;
      if (cost(k_cap) <= budget) lo = k_cap;
    }
    while (hi - lo > 1.0) {
      const double mid = std::floor(0.5 * (lo + hi));
      if (cost(mid) <= budget) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    out.push_back({m.variant, budget, N, lo});
  }
  return out;
}

std::string frontier_csv(const std::vector<FrontierPoint>& points) {
  std::ostringstream ss;
  ss.precision(12);
  ss << "variant,budget,N,K_max\n";
  for (const auto& p : points) {
    ss << to_string(p.variant) << ',' << p.budget << ',' << p.N << ',' << p.K_max << '\n';
  }
  return ss.str();
}

EnsembleBenchResult run_ensemble_bench(const EnsembleBenchConfig& c) {
  if (c.members_per_worker < 1 || c.repeats < 1 || c.workers.empty()) {
    throw ConfigError("ensemble bench: members_per_worker, repeats and workers must be positive");
  }
  StormConfig cfg;
  cfg.d_model = c.d_model;
  cfg.n_layers = c.n_layers;
  cfg.validate();
  Rng init(c.seed, 0x5708ull);
  const StormDenoiser denoiser(init_storm(cfg, init, false));
  const GridSpec spec = make_grid(c.edge, c.edge, 1, cfg.patch, cfg.K);
  Rng ctx_rng(c.seed, 0xC7ull);
  const TemporalContext ctx = random_context(spec, cfg.K, ctx_rng);
  const NoiseSchedule schedule = build_schedule(c.n_steps, 0.002, 10.0, 7.0);
  const MemberSampler sampler = [&](int, Rng& rng) {
    return sample_prior(denoiser, ctx, spec, schedule, rng);
  };
  const Rng root(c.seed);

  auto timed = [&](int n, int workers, Ensemble* keep) {
    std::vector<double> walls;
    for (int r = 0; r < c.repeats; ++r) {
      const auto t0 = Clock::now();
      Ensemble e = generate_ensemble(n, sampler, workers, root, Provenance::prior);
      walls.push_back(seconds_since(t0));
      if (keep != nullptr && r == 0) *keep = std::move(e);
    }
    return median(walls);
  };

  EnsembleBenchResult result;
  const int m = c.members_per_worker;
  auto sequential = [&] {
    const auto t0 = Clock::now();
    for (int i = 0; i < m; ++i) {
      Rng local = root.substream(static_cast<std::uint64_t>(i));
      sampler(i, local);
    }
    return seconds_since(t0);
  };
  // One untimed pass, then the two single-worker measurements interleaved so
  // neither absorbs the warm-up.
  timed(m, 1, nullptr);
  std::vector<double> base_walls, seq_walls;
  for (int r = 0; r < c.repeats; ++r) {
    const auto t0 = Clock::now();
    generate_ensemble(m, sampler, 1, root, Provenance::prior);
    base_walls.push_back(seconds_since(t0));
    seq_walls.push_back(sequential());
  }
  const double baseline = median(base_walls);
  result.sequential_s = median(seq_walls);
  for (int w : c.workers) {
    if (w < 1) throw ConfigError("ensemble bench: worker counts must be >= 1");
    EnsembleBenchRow row;
    row.workers = w;
    row.members = w * m;
    Ensemble parallel_run;
    row.wall_s = timed(row.members, w, &parallel_run);
    row.baseline_s = baseline;
    row.ratio = row.wall_s / baseline;
    const Ensemble serial = generate_ensemble(row.members, sampler, 1, root, Provenance::prior);
    row.identical = true;
    for (int i = 0; i < row.members; ++i) {
      const auto a = parallel_run.members[static_cast<std::size_t>(i)].values();
      const auto b = serial.members[static_cast<std::size_t>(i)].values();
      if (!std::equal(a.begin(), a.end(), b.begin(), b.end())) row.identical = false;
    }
    result.rows.push_back(row);
  }
  return result;
}

std::string ensemble_bench_csv(const EnsembleBenchResult& r) {
  std::ostringstream ss;
  ss.precision(10);
  ss << "workers,members,wall_s,baseline_s,ratio,identical\n";
  for (const auto& row : r.rows) {
    ss << row.workers << ',' << row.members << ',' << row.wall_s << ',' << row.baseline_s << ','
       << row.ratio << ',' << (row.identical ? 1 : 0) << '\n';
  }
  return ss.str();
}

namespace {

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

}  // namespace

std::string svg_line_plot(const std::string& title, const std::string& x_label,
                          const std::string& y_label, const std::vector<PlotSeries>& series,
                          bool log_x, bool log_y) {
  constexpr double W = 640, H = 420, L = 70, R = 150, T = 40, B = 50;
  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  auto tx = [&](double v) { return log_x ? std::log10(v) : v; };
  auto ty = [&](double v) { return log_y ? std::log10(v) : v; };
  auto usable = [&](double x, double y) {
    return std::isfinite(x) && std::isfinite(y) && (!log_x || x > 0) && (!log_y || y > 0);
  };
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!usable(s.x[i], s.y[i])) continue;
      x0 = std::min(x0, tx(s.x[i]));
      x1 = std::max(x1, tx(s.x[i]));
      y0 = std::min(y0, ty(s.y[i]));
      y1 = std::max(y1, ty(s.y[i]));
    }
  }
  if (!(x1 >= x0)) x0 = 0, x1 = 1;
  if (!(y1 >= y0)) y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  auto px = [&](double v) { return L + (tx(v) - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double v) { return H - B - (ty(v) - y0) / (y1 - y0) * (H - T - B); };

  std::ostringstream ss;
  ss.precision(6);
  ss << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  ss << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  ss << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
     << escape_xml(title) << "</text>\n";
  ss << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
     << "\" stroke=\"black\"/>\n";
  ss << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B
     << "\" stroke=\"black\"/>\n";
  auto tick_label = [](double v, bool log) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", log ? std::pow(10.0, v) : v);
    return std::string(buf);
  };
  for (int i = 0; i <= 4; ++i) {
    const double fx = x0 + (x1 - x0) * i / 4.0, fy = y0 + (y1 - y0) * i / 4.0;
    const double sx = L + (W - L - R) * i / 4.0, sy = H - B - (H - T - B) * i / 4.0;
    ss << "<text x=\"" << sx << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">"
       << tick_label(fx, log_x) << "</text>\n";
    ss << "<text x=\"" << L - 6 << "\" y=\"" << sy + 4 << "\" text-anchor=\"end\">"
       << tick_label(fy, log_y) << "</text>\n";
  }
  ss << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">"
     << escape_xml(x_label) << "</text>\n";
  ss << "<text x=\"16\" y=\"" << (T + H - B) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
     << (T + H - B) / 2 << ")\">" << escape_xml(y_label) << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = colors[k % 6];
    ss << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (usable(s.x[i], s.y[i])) ss << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
    }
    ss << "\"/>\n";
    const double ly = T + 16.0 * static_cast<double>(k);
    ss << "<line x1=\"" << W - R + 10 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 30 << "\" y2=\""
       << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    ss << "<text x=\"" << W - R + 34 << "\" y=\"" << ly + 4 << "\">" << escape_xml(s.name)
       << "</text>\n";
  }
  ss << "</svg>\n";
  return ss.str();
}

}  // namespace sda

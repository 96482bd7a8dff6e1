#include "commands.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <optional>
#include <set>

#include "log.hpp"
#include "rundir.hpp"
#include "sda/bench.hpp"
#include "sda/ensemble.hpp"
#include "sda/error.hpp"
#include "sda/gaussian.hpp"
#include "sda/grf.hpp"
#include "sda/guidance.hpp"
#include "sda/io.hpp"
#include "sda/recipes.hpp"
#include "sda/storm.hpp"
#include "sda/tiling.hpp"
#include "sda/train.hpp"

namespace sda::cli {
namespace {

namespace fs = std::filesystem;

// Stream ids for the command-level generators.
constexpr std::uint64_t kScenarioStream = 0xDA7A;
constexpr std::uint64_t kObsStream = 0x0B5;
constexpr std::uint64_t kEnsembleStream = 0xE45;
constexpr std::uint64_t kInitStream = 0x1417;
constexpr std::uint64_t kProbeStream = 0x9B0E;

std::string frame_name(int k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%02d.sdaf", k);
  return buf;
}

GridSpec grid(const RunConfig& c, int patch) {
  return make_grid(c.int32("ny"), c.int32("nx"), c.int32("n_vars"), patch, c.int32("K"));
}

NoiseSchedule schedule(const RunConfig& c) {
  if (!(c.real("sigma_min") < c.real("sigma_max")))
    throw ConfigError("config field 'sigma_min': must be below sigma_max");
  return build_schedule(c.int32("n_steps"), c.real("sigma_min"), c.real("sigma_max"), c.real("rho"));
}

GrfParams grf(const RunConfig& c) { return {c.real("length_scale"), c.real("prior_var"), c.real("prior_mean")}; }

Dynamics dynamics(const RunConfig& c) { return {0, c.int32("dyn_shift"), c.real("dyn_smooth")}; }

GuidanceSchedule guidance(const RunConfig& c) {
  GuidanceSchedule g;
  g.mode = parse_guidance_mode(c.text("guidance"));
  g.zeta0 = c.real("zeta0");
  g.data_var = c.real("prior_var");
  g.validate();
  return g;
}

std::uint64_t mask_seed(const RunConfig& c) {
  const auto s = c.integer("mask_seed");
  return s < 0 ? c.seed() : static_cast<std::uint64_t>(s);
}

/// The denoiser named by the config and the grid it runs on.
struct Model {
  std::unique_ptr<Denoiser> denoiser;
  GridSpec spec;
};

Model build_model(const RunConfig& c, const RunDir& run) {
  Model m;
  const std::string kind = c.text("denoiser");
  if (kind == "storm") {
    if (c.text("params").empty()) throw ConfigError("config field 'params': required when denoiser = storm");
    StormParams params = load_params(run.input(c.text("params")));
    if (params.config.n_vars != c.int32("n_vars"))
      throw ConfigError("config field 'n_vars': does not match the trained model");
    if (params.config.K != c.int32("K"))
      log(LogLevel::warn, "model trained with K=%d, running with K=%d", params.config.K, c.int32("K"));
    m.spec = grid(c, params.config.patch);
    m.denoiser = std::make_unique<StormDenoiser>(std::move(params));
  } else if (kind == "identity") {
    m.spec = grid(c, 1);
    m.denoiser = std::make_unique<IdentityDenoiser>();
  } else {
    m.spec = grid(c, 1);
    const GaussianPrior prior = c.text("prior") == "diagonal"
                                    ? GaussianPrior::diagonal(m.spec, c.real("prior_mean"), c.real("prior_var"))
                                    : GaussianPrior::stationary(m.spec, grf(c));
    m.denoiser = std::make_unique<GaussianDenoiser>(prior);
  }
  return m;
}

std::optional<TilePlan> tile_plan(const RunConfig& c, const GridSpec& spec) {
  if (c.int32("tile_core") == 0) return std::nullopt;
  return plan_tiles(spec, c.int32("tile_core"), c.int32("tile_halo"));
}

/// Truth and its context frames.
struct Scenario {
  StateField truth;
  TemporalContext ctx;
};

/// Diagonal priors draw independent frames; otherwise a GRF initial state is
/// run through the forecast model and the truth is one step past the context.
Scenario synthesize(const RunConfig& c, const GridSpec& spec) {
  Rng rng(c.seed(), kScenarioStream);
  const int K = spec.K;
  if (c.text("denoiser") == "gaussian" && c.text("prior") == "diagonal") {
    auto draw = [&] {
      StateField x(spec, c.real("prior_mean"));
      for (auto& v : x.values()) v += std::sqrt(c.real("prior_var")) * rng.normal();
      return x;
    };
    std::vector<StateField> frames;
    for (int k = 0; k < K; ++k) frames.push_back(draw());
    return {draw(), TemporalContext(std::move(frames))};
  }
  const StateField x0 = sample_grf(spec, grf(c), rng);
  if (K == 0) return {x0, TemporalContext()};
  TemporalContext ctx = evolve_context(x0, K, c.real("model_noise"), rng, dynamics(c));
  StateField truth = advance(ctx.frames().back(), dynamics(c), c.real("model_noise"), rng);
  return {std::move(truth), std::move(ctx)};
}

Scenario load_scenario(const fs::path& dir, const GridSpec& spec) {
  auto one = [&](const fs::path& p) {
    auto fields = read_fields(p, spec.patch);
    if (fields.size() != 1) throw FormatError(p.string() + ": expected one frame");
    const GridSpec& g = fields[0].spec();
    if (g.ny != spec.ny || g.nx != spec.nx || g.n_vars != spec.n_vars)
      throw ConfigError("config field 'data': " + p.string() + " does not match ny/nx/n_vars");
    return fields[0];
  };
  std::vector<StateField> frames;
  for (int k = 0; k < spec.K; ++k) frames.push_back(one(dir / frame_name(k)));
  return {one(dir / "truth.sdaf"), TemporalContext(std::move(frames))};
}

Scenario scenario(const RunConfig& c, const RunDir& run, const GridSpec& spec) {
  if (c.text("data").empty()) return synthesize(c, spec);
  return load_scenario(run.input(c.text("data")), spec);
}

void print_report(const recipes::CriterionReport& r) {
  std::printf("%s\n", r.line().c_str());
  std::fflush(stdout);
}

std::vector<Variant> variants(const RunConfig& c) {
  std::vector<Variant> out;
  for (const auto& s : c.text_list("variants")) {
    try {
      out.push_back(parse_variant(s));
    } catch (const std::exception&) {
      throw ConfigError("config field 'variants': unknown variant '" + s + "'");
    }
  }
  if (out.empty()) throw ConfigError("config field 'variants': empty");
  return out;
}

int run_conjugate_preset(const RunConfig& c, const RunDir& run) {
  recipes::ConjugateConfig cc;
  cc.seed = c.seed();
  cc.workers = c.int32("workers");
  cc.guidance = guidance(c);
  if (c.is_set("members")) cc.members = c.int32("members");
  if (c.is_set("n_steps")) cc.n_steps = c.int32("n_steps");
  if (c.is_set("obs_fraction")) cc.fraction = c.real("obs_fraction");
  if (c.is_set("obs_r")) cc.noise_var = c.real("obs_r");
  if (c.is_set("prior_var")) cc.prior_var = c.real("prior_var");
  if (c.is_set("ny")) cc.edge = c.int32("ny");
  const auto report = recipes::conjugate_gaussian(cc);
  print_report(report);
  write_text(run.file("report.txt"), report.line() + "\n");
  run.finish();
  return report.pass() ? 0 : 1;
}

}  // namespace

const std::vector<Command>& commands() {
  static const std::vector<Command> table{
      {"generate-data", "write context frames, truth and observations", cmd_generate_data},
      {"train", "train the STORM denoiser (resumable)", cmd_train},
      {"assimilate", "sample a prior or posterior ensemble and score it", cmd_assimilate},
      {"bench", "run the benchmark named by --suite", cmd_bench},
      {"bench-scaling", "wall time and memory against token count", cmd_bench_scaling},
      {"bench-ensemble", "ensemble weak scaling", cmd_bench_ensemble},
      {"bench-frontier", "largest feasible context length per flop budget", cmd_bench_frontier},
      {"verify", "run the invariant suites", cmd_verify},
      {"probe-propagation", "cross-tile influence per reverse step", cmd_probe_propagation},
  };
  return table;
}

int cmd_generate_data(const RunConfig& c) {
  RunDir run(c, "generate-data");
  const GridSpec spec = grid(c, 1);
  const Scenario s = synthesize(c, spec);
  for (int k = 0; k < s.ctx.K(); ++k) {
    const StateField& f = s.ctx.frame(k);
    write_fields(run.file(frame_name(k)), std::span(&f, 1));
  }
  write_fields(run.file("truth.sdaf"), std::span(&s.truth, 1));
  if (c.real("obs_fraction") > 0.0) {
    const auto op = ObservationOperator::random(spec, c.real("obs_fraction"), mask_seed(c));
    Rng rng(c.seed(), kObsStream);
    const auto y = observe(s.truth, op, c.real("obs_r"), rng);
    write_observations(run.file("observations.csv"), {op, y, mask_seed(c), c.real("obs_fraction")});
  }
  run.finish();
  log(LogLevel::info, "wrote %d context frames and truth to %s", s.ctx.K(), run.root().c_str());
  return 0;
}

int cmd_train(const RunConfig& c) {
  RunDir run(c, "train");
  StormConfig mc;
  mc.n_vars = c.int32("n_vars");
  mc.patch = c.int32("patch");
  mc.d_model = c.int32("d_model");
  mc.n_layers = c.int32("n_layers");
  mc.n_heads = c.int32("n_heads");
  mc.K = c.int32("K");
  mc.validate();
  const GridSpec spec = grid(c, mc.patch);

  TrainConfig tc;
  tc.batch = c.int32("batch");
  tc.lr = c.real("lr");
  tc.law = parse_sigma_law(c.text("sigma_law"));
  tc.decay_steps = c.int32("decay_steps");
  tc.final_lr_fraction = c.real("final_lr_fraction");
  tc.seed = c.seed();

  DatasetGenerator data;
  const std::string ds = c.text("dataset");
  if (ds == "grf")
    data = grf_dataset(spec, grf(c), ContextMode::evolved, dynamics(c), c.real("model_noise"));
  else if (ds == "constant")
    data = constant_dataset(spec, c.real("prior_mean"));
  else
    data = gaussian_toy_dataset(spec, c.real("prior_mean"), c.real("prior_var"));

  TrainState state;
  if (!c.text("resume").empty()) {
    state = load_checkpoint(run.input(c.text("resume")));
    const StormConfig& rc = state.params.config;
    if (rc.n_vars != mc.n_vars || rc.patch != mc.patch || rc.d_model != mc.d_model ||
        rc.n_layers != mc.n_layers || rc.n_heads != mc.n_heads || rc.K != mc.K)
      throw ConfigError("config field 'resume': checkpoint model shape differs from the config");
    log(LogLevel::info, "resuming at step %d", state.step);
  } else {
    Rng init(c.seed(), kInitStream);
    state = TrainState::fresh(init_storm(mc, init));
  }
  const int total = c.int32("train_steps");
  if (state.step > total)
    throw ConfigError("config field 'train_steps': checkpoint is already at step " + std::to_string(state.step));

  const int chunk = c.int32("checkpoint_every") > 0 ? c.int32("checkpoint_every") : total - state.step;
  std::vector<TrainLogRow> log_rows;
  double final_loss = 0.0;
  while (state.step < total) {
    tc.steps = std::min(chunk, total - state.step);
    TrainResult r = train_denoiser(data, std::move(state), tc, [](const TrainLogRow& row) {
      log(LogLevel::debug, "step %d loss %.6f", row.step, row.loss);
    });
    log_rows.insert(log_rows.end(), r.log.begin(), r.log.end());
    final_loss = r.final_smoothed_loss;
    state = std::move(r.state);
    save_checkpoint(run.file("checkpoint.sdck"), state);
    log(LogLevel::info, "step %d/%d smoothed loss %.6f", state.step, total, final_loss);
  }
  if (!fs::exists(run.file("checkpoint.sdck"))) save_checkpoint(run.file("checkpoint.sdck"), state);
  save_params(run.file("params.sdnp"), state.params);
  write_text(run.file("train_log.csv"), train_log_csv(log_rows));
  run.finish();
  std::printf("trained to step %d, smoothed loss %.6f\n", state.step, final_loss);
  return 0;
}

int cmd_assimilate(const RunConfig& c) {
  RunDir run(c, "assimilate");
  if (c.text("preset") == "conjugate") return run_conjugate_preset(c, run);

  const Model m = build_model(c, run);
  const NoiseSchedule sched = schedule(c);
  const GuidanceSchedule guide = guidance(c);
  const Scenario s = scenario(c, run, m.spec);
  const auto plan = tile_plan(c, m.spec);

  const auto op = ObservationOperator::random(m.spec, c.real("obs_fraction"), mask_seed(c));
  Rng obs_rng(c.seed(), kObsStream);
  const auto y = observe(s.truth, op, c.real("obs_r"), obs_rng);
  write_observations(run.file("observations.csv"), {op, y, mask_seed(c), c.real("obs_fraction")});

  SamplerOptions opts;
  opts.mode = parse_sampler_mode(c.text("sampler"));
  opts.tiling = plan ? &*plan : nullptr;
  const bool posterior = c.text("mode") == "posterior";
  const Denoiser& den = *m.denoiser;
  const MemberSampler sampler = [&](int, Rng& rng) {
    return posterior ? assimilate(den, s.ctx, m.spec, y, op, sched, guide, rng, opts)
                     : sample_prior(den, s.ctx, m.spec, sched, rng, opts);
  };
  const Ensemble ens = generate_ensemble(c.int32("members"), sampler, c.int32("workers"),
                                         Rng(c.seed(), kEnsembleStream),
                                         posterior ? Provenance::posterior : Provenance::prior, den.name());

  const auto rows = ensemble_metrics(ens, s.truth);
  const std::string csv = metrics_csv(rows);
  write_text(run.file("metrics.csv"), csv);
  const StateField mean = ensemble_mean(ens);
  write_fields(run.file("mean.sdaf"), std::span(&mean, 1));
  write_fields(run.file("truth.sdaf"), std::span(&s.truth, 1));
  if (c.boolean("write_members")) write_ensemble(run.file("members"), ens);
  run.finish();
  std::printf("%s", csv.c_str());
  return 0;
}

int cmd_bench(const RunConfig& c) {
  const std::string suite = c.text("suite");
  if (suite == "ensemble") return cmd_bench_ensemble(c);
  if (suite == "frontier") return cmd_bench_frontier(c);
  return cmd_bench_scaling(c);
}

int cmd_bench_scaling(const RunConfig& c) {
  RunDir run(c, "bench-scaling");
  ScalingConfig sc;
  sc.variants = variants(c);
  sc.edges = c.int_list("edges");
  sc.K = c.int32("bench_k");
  sc.d_model = c.int32("bench_d_model");
  sc.n_layers = c.int32("bench_layers");
  sc.n_heads = c.int32("bench_heads");
  sc.patch = c.int32("bench_patch");
  sc.tile_core = c.int32("bench_tile_core");
  sc.tile_halo = c.int32("bench_tile_halo");
  sc.repeats = c.int32("repeats");
  sc.warmup = c.int32("warmup");
  sc.seed = c.seed();
  sc.validate();

  std::vector<BenchRecord> records;
  for (const Variant v : sc.variants) {
    for (const int edge : sc.edges) {
      records.push_back(bench_point(sc, v, edge));
      const auto& r = records.back();
      log(LogLevel::info, "%s edge %d tokens %lld wall %.4gs%s", to_string(v).c_str(), edge,
          static_cast<long long>(r.tokens), r.wall_s, r.capped ? " (capped)" : "");
    }
  }
  write_text(run.file("bench.csv"), bench_csv(records));

  std::string table = "variant,slope,intercept,points\n";
  std::printf("%-12s %8s %6s\n", "variant", "slope", "points");
  for (const auto& f : fit_slopes(records)) {
    std::printf("%-12s %8.3f %6d\n", to_string(f.variant).c_str(), f.slope, f.points);
    char line[160];
    std::snprintf(line, sizeof line, "%s,%.6f,%.6f,%d\n", to_string(f.variant).c_str(), f.slope,
                  f.intercept, f.points);
    table += line;
  }
  write_text(run.file("slopes.csv"), table);

  std::vector<PlotSeries> wall, mem;
  for (const Variant v : sc.variants) {
    PlotSeries w{to_string(v), {}, {}}, p{to_string(v), {}, {}};
    for (const auto& r : records) {
      if (r.variant != v || r.capped) continue;
      w.x.push_back(static_cast<double>(r.tokens));
      w.y.push_back(r.wall_s);
      p.x.push_back(static_cast<double>(r.tokens));
      p.y.push_back(static_cast<double>(r.peak_bytes));
    }
    wall.push_back(std::move(w));
    mem.push_back(std::move(p));
  }
  write_text(run.file("scaling.svg"), svg_line_plot("wall time", "tokens", "seconds", wall, true, true));
  write_text(run.file("memory.svg"), svg_line_plot("peak memory", "tokens", "bytes", mem, true, true));
  run.finish();
  return 0;
}

int cmd_bench_ensemble(const RunConfig& c) {
  RunDir run(c, "bench-ensemble");
  EnsembleBenchConfig ec;
  ec.workers = c.int_list("ensemble_workers");
  ec.members_per_worker = c.int32("members_per_worker");
  ec.edge = c.int32("ensemble_edge");
  ec.n_steps = c.int32("ensemble_steps");
  ec.d_model = c.int32("d_model");
  ec.n_layers = c.int32("n_layers");
  ec.repeats = c.int32("repeats");
  ec.seed = c.seed();
  const EnsembleBenchResult res = run_ensemble_bench(ec);
  const std::string csv = ensemble_bench_csv(res);
  write_text(run.file("ensemble_bench.csv"), csv);
  PlotSeries ratio{"wall ratio", {}, {}};
  for (const auto& r : res.rows) {
    ratio.x.push_back(r.workers);
    ratio.y.push_back(r.ratio);
  }
  write_text(run.file("ensemble.svg"),
             svg_line_plot("ensemble weak scaling", "workers", "wall / baseline", {ratio}, true, false));
  run.finish();
  std::printf("%s", csv.c_str());
  std::printf("sequential baseline %.4fs\n", res.sequential_s);
  return 0;
}

int cmd_bench_frontier(const RunConfig& c) {
  RunDir run(c, "bench-frontier");
  CostModel base;
  base.d_model = c.int32("bench_d_model");
  base.n_layers = c.int32("bench_layers");
  base.token_width = static_cast<double>(c.int32("bench_patch")) * c.int32("bench_patch") * c.int32("n_vars");
  std::vector<FrontierPoint> points;
  std::vector<PlotSeries> series;
  for (const Variant v : variants(c)) {
    if (v == Variant::storm_tiled)
      throw ConfigError("config field 'variants': storm-tiled has no frontier (tile count is not a function of K)");
    base.variant = v;
    for (const double budget : c.real_list("budgets")) {
      const auto curve = feasibility_frontier(base, c.real_list("frontier_n"), budget, c.real("k_cap"));
      char name[96];
      std::snprintf(name, sizeof name, "%s %.0e", to_string(v).c_str(), budget);
      PlotSeries s{name, {}, {}};
      for (const auto& p : curve) {
        s.x.push_back(p.N);
        s.y.push_back(p.K_max);
      }
      series.push_back(std::move(s));
      points.insert(points.end(), curve.begin(), curve.end());
    }
  }
  const std::string csv = frontier_csv(points);
  write_text(run.file("frontier.csv"), csv);
  write_text(run.file("frontier.svg"),
             svg_line_plot("feasible context length", "tokens per frame", "K max", series, true, true));
  run.finish();
  std::printf("%s", csv.c_str());
  return 0;
}

int cmd_verify(const RunConfig& c) {
  RunDir run(c, "verify");
  using namespace recipes;
  const ToyModelConfig toy = ToyModelConfig::defaults();
  struct Suite {
    const char* name;
    std::function<CriterionReport()> run;
  };
  const std::vector<Suite> suites{
      {"partition", [] { return partition_of_unity(); }},
      {"tiling", [] { return tiling_fidelity({}); }},
      {"propagation", [] { return context_propagation({}); }},
      {"gradients", [&] { return gradient_check({}, toy, nullptr); }},
      {"score", [&] { return score_identity({}, toy, nullptr); }},
      {"conjugate", [] { return conjugate_gaussian({}); }},
      {"flops",
       [] {
         DecouplingConfig d;
         d.timing = false;
         return decoupling(d);
       }},
  };
  std::set<std::string> wanted;
  for (const auto& s : c.text_list("suites")) wanted.insert(s);
  const bool all = wanted.count("all") > 0;
  for (const auto& w : wanted) {
    bool known = w == "all";
    for (const auto& s : suites) known = known || w == s.name;
    if (!known) throw ConfigError("config field 'suites': unknown suite '" + w + "'");
  }

  std::string report;
  bool ok = true;
  for (const auto& s : suites) {
    if (!all && wanted.count(s.name) == 0) continue;
    const CriterionReport r = s.run();
    print_report(r);
    report += std::string(s.name) + ": " + r.line() + "\n";
    ok = ok && r.pass();
  }
  write_text(run.file("verify.txt"), report);
  run.finish();
  return ok ? 0 : 1;
}

int cmd_probe_propagation(const RunConfig& c) {
  RunDir run(c, "probe-propagation");
  const Model m = build_model(c, run);
  const auto plan = tile_plan(c, m.spec);
  if (!plan) throw ConfigError("config field 'tile_core': the probe needs a tiled plan (> 0)");
  const Scenario s = scenario(c, run, m.spec);
  const ProbeResult probe = propagation_radius_probe(*m.denoiser, *plan, schedule(c), s.ctx,
                                                     Rng(c.seed(), kProbeStream),
                                                     parse_sampler_mode(c.text("sampler")));
  write_text(run.file("probe.csv"), probe_csv(probe));
  write_text(run.file("plan.csv"), plan_csv(*plan));
  run.finish();
  std::printf("source tile (%d, %d), %zu tiles, max ring reached %d\n", probe.source_row,
              probe.source_col, plan->size(), probe.max_ring());
  for (int ring = 1; ring <= probe.max_ring(); ++ring)
    std::printf("ring %d first influenced at step %d\n", ring, probe.first_step(ring));
  return 0;
}

}  // namespace sda::cli

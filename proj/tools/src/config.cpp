#include "config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "sda/error.hpp"
#include "sda/io.hpp"

namespace sda::cli {
namespace {

constexpr double kInf = 1e300;

FieldSpec integer(std::string key, std::string fallback, double lo, double hi, std::string help) {
  return {std::move(key), Kind::integer, std::move(fallback), std::move(help), lo, hi, false, {}};
}
FieldSpec real(std::string key, std::string fallback, double lo, bool lo_open, std::string help,
               double hi = kInf) {
  return {std::move(key), Kind::real, std::move(fallback), std::move(help), lo, hi, lo_open, {}};
}
FieldSpec text(std::string key, std::string fallback, std::string help) {
  return {std::move(key), Kind::text, std::move(fallback), std::move(help), -kInf, kInf, false, {}};
}
FieldSpec choice(std::string key, std::string fallback, std::vector<std::string> choices,
                 std::string help) {
  return {std::move(key), Kind::choice, std::move(fallback), std::move(help),
          -kInf,          kInf,         false,                std::move(choices)};
}
FieldSpec boolean(std::string key, std::string fallback, std::string help) {
  return {std::move(key), Kind::boolean, std::move(fallback), std::move(help), -kInf, kInf, false, {}};
}
FieldSpec ints(std::string key, std::string fallback, double lo, std::string help) {
  return {std::move(key), Kind::int_list, std::move(fallback), std::move(help), lo, kInf, false, {}};
}
FieldSpec reals(std::string key, std::string fallback, double lo, std::string help) {
  return {std::move(key), Kind::real_list, std::move(fallback), std::move(help), lo, kInf, true, {}};
}

std::vector<FieldSpec> build_specs() {
  return {
      // run
      text("experiment", "run", "experiment name recorded in the run directory"),
      text("out", "run", "run directory; other paths are relative to it"),
      integer("seed", "0", 0, 9.2e18, "master seed"),
      integer("workers", "1", 1, 4096, "ensemble workers"),
      // grid
      integer("ny", "16", 1, 1 << 20, "grid rows"),
      integer("nx", "16", 1, 1 << 20, "grid columns"),
      integer("n_vars", "1", 1, 64, "variables per cell"),
      integer("K", "2", 0, 1024, "context frames"),
      // schedule
      integer("n_steps", "80", 1, 1e6, "reverse steps"),
      real("sigma_min", "0.002", 0, true, "smallest noise level"),
      real("sigma_max", "10", 0, true, "largest noise level"),
      real("rho", "7", 0, true, "schedule curvature"),
      choice("sampler", "sde", {"sde", "ode"}, "reverse sampler"),
      // denoiser and prior
      choice("denoiser", "gaussian", {"gaussian", "storm", "identity"}, "denoiser"),
      choice("prior", "stationary", {"stationary", "diagonal"}, "Gaussian prior kind"),
      real("prior_mean", "0", -kInf, false, "prior mean"),
      real("prior_var", "1", 0, true, "prior variance"),
      real("length_scale", "4", 0, true, "GRF correlation length in cells"),
      text("params", "", "trained STORM parameters (.sdnp)"),
      // data
      text("data", "", "directory with truth.sdaf and frame_*.sdaf"),
      real("model_noise", "0.1", 0, false, "forecast model noise"),
      integer("dyn_shift", "1", -1e6, 1e6, "forecast column shift per step"),
      real("dyn_smooth", "0.25", 0, false, "forecast smoothing weight", 0.5),
      // observations and guidance
      real("obs_fraction", "0.2", 0, false, "observed fraction of values", 1),
      real("obs_r", "0.1", 0, true, "observation error variance"),
      integer("mask_seed", "-1", -1, 9.2e18, "mask seed (-1: use seed)"),
      choice("guidance", "annealed", {"annealed", "constant", "residual_normalized"},
             "guidance weight schedule"),
      real("zeta0", "0.5", 0, false, "guidance strength"),
      // tiling
      integer("tile_core", "0", 0, 1 << 20, "tile core edge (0: untiled)"),
      integer("tile_halo", "0", 0, 1 << 20, "tile halo width"),
      // ensemble
      integer("members", "16", 1, 1 << 20, "ensemble members"),
      choice("mode", "posterior", {"prior", "posterior"}, "assimilate: sample prior or posterior"),
      choice("preset", "none", {"none", "conjugate"}, "assimilate: canned verification recipe"),
      boolean("write_members", "false", "assimilate: write every member container"),
      // training
      choice("dataset", "gaussian-toy", {"gaussian-toy", "grf", "constant"}, "training data"),
      integer("patch", "2", 1, 64, "STORM patch edge"),
      integer("d_model", "32", 1, 4096, "STORM width"),
      integer("n_layers", "2", 1, 256, "STORM layers"),
      integer("n_heads", "2", 1, 256, "STORM heads"),
      integer("train_steps", "2000", 0, 1e9, "total optimizer steps"),
      integer("batch", "16", 1, 1 << 20, "batch size"),
      real("lr", "1e-3", 0, true, "learning rate"),
      choice("sigma_law", "log_normal", {"log_normal", "log_uniform"}, "training noise law"),
      integer("decay_steps", "0", 0, 1e9, "linear learning-rate decay length"),
      real("final_lr_fraction", "1", 0, true, "learning rate left after decay", 1),
      text("resume", "", "checkpoint to resume from (.sdck)"),
      integer("checkpoint_every", "0", 0, 1e9, "checkpoint interval in steps (0: end only)"),
      // benchmarks
      text("variants", "vit-global,storm-tiled", "comma list of attention variants"),
      ints("edges", "16,32,64,128", 1, "bench grid edges"),
      integer("bench_k", "1", 1, 1024, "bench context frames"),
      integer("bench_d_model", "8", 1, 4096, "bench model width"),
      integer("bench_layers", "1", 1, 256, "bench layers"),
      integer("bench_heads", "1", 1, 256, "bench heads"),
      integer("bench_patch", "2", 1, 64, "bench patch edge"),
      integer("bench_tile_core", "16", 1, 1 << 20, "bench tile core edge"),
      integer("bench_tile_halo", "4", 0, 1 << 20, "bench tile halo"),
      integer("repeats", "5", 1, 1e6, "timed repeats per point"),
      integer("warmup", "1", 0, 1e6, "untimed warmup runs per point"),
      ints("ensemble_workers", "1,2,4,8", 1, "worker counts for the ensemble bench"),
      integer("members_per_worker", "4", 1, 1e6, "members per worker"),
      integer("ensemble_edge", "16", 2, 1 << 20, "ensemble bench grid edge"),
      integer("ensemble_steps", "16", 1, 1e6, "ensemble bench reverse steps"),
      reals("budgets", "1e9,1e10,1e11,1e12", 0, "flop budgets for the frontier"),
      reals("frontier_n", "64,256,1024,4096,16384,65536", 0, "tokens per frame for the frontier"),
      real("k_cap", "1e6", 1, false, "largest K searched by the frontier"),
      choice("suite", "scaling", {"scaling", "ensemble", "frontier"}, "bench: which benchmark"),
      // verify
      text("suites", "all", "verify: comma list of suites or 'all'"),
  };
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

[[noreturn]] void bad(const FieldSpec& f, const std::string& value, const std::string& why) {
  throw ConfigError("config field '" + f.key + "': " + why + " (got '" + value + "')");
}

double parse_number(const FieldSpec& f, const std::string& s, bool whole) {
  const std::string t = trim(s);
  double v = 0.0;
  if (whole) {
    long long i = 0;
    const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), i);
    if (ec != std::errc() || p != t.data() + t.size() || t.empty()) bad(f, s, "expected an integer");
    v = static_cast<double>(i);
  } else {
    const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || p != t.data() + t.size() || t.empty() || !std::isfinite(v))
      bad(f, s, "expected a finite number");
  }
  const bool below = f.lo_open ? !(v > f.lo) : v < f.lo;
  if (below || v > f.hi) {
    std::ostringstream why;
    why << "must be " << (f.lo_open ? "> " : ">= ") << f.lo;
    if (f.hi < kInf) why << " and <= " << f.hi;
    bad(f, s, why.str());
  }
  return v;
}

void check(const FieldSpec& f, const std::string& value) {
  switch (f.kind) {
    case Kind::integer: parse_number(f, value, true); break;
    case Kind::real: parse_number(f, value, false); break;
    case Kind::text: break;
    case Kind::choice:
      if (std::find(f.choices.begin(), f.choices.end(), value) == f.choices.end()) {
        std::string list;
        for (const auto& c : f.choices) list += (list.empty() ? "" : "|") + c;
        bad(f, value, "expected one of " + list);
      }
      break;
    case Kind::boolean:
      if (value != "true" && value != "false") bad(f, value, "expected true or false");
      break;
    case Kind::int_list:
    case Kind::real_list: {
      const auto items = split(value);
      if (items.empty()) bad(f, value, "expected a comma list");
      for (const auto& it : items) parse_number(f, it, f.kind == Kind::int_list);
      break;
    }
  }
}

}  // namespace

std::string FieldSpec::flag() const {
  std::string s = "--" + key;
  std::replace(s.begin(), s.end(), '_', '-');
  return s;
}

const std::vector<FieldSpec>& field_specs() {
  static const std::vector<FieldSpec> specs = build_specs();
  return specs;
}

const FieldSpec& field_spec(const std::string& key) {
  for (const auto& f : field_specs())
    if (f.key == key) return f;
  throw ConfigError("config: unknown field '" + key + "'");
}

RunConfig::RunConfig() {
  for (const auto& f : field_specs()) values_[f.key] = f.fallback;
}

RunConfig RunConfig::from_text(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::stringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    if (cfg.is_set(key)) throw ConfigError(where + ": field '" + key + "' given twice");
    try {
      cfg.set(key, trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text(path);
  } catch (const std::exception& e) {
    throw ConfigError("config: cannot read " + path.string() + ": " + e.what());
  }
  return from_text(text, path.string());
}

void RunConfig::set(const std::string& key, const std::string& value) {
  check(field_spec(key), value);
  values_[key] = value;
  explicit_.insert(key);
}

const std::string& RunConfig::text(const std::string& key) const { return values_.at(field_spec(key).key); }

std::int64_t RunConfig::integer(const std::string& key) const {
  return static_cast<std::int64_t>(parse_number(field_spec(key), text(key), true));
}

int RunConfig::int32(const std::string& key) const { return static_cast<int>(integer(key)); }

double RunConfig::real(const std::string& key) const {
  return parse_number(field_spec(key), text(key), false);
}

bool RunConfig::boolean(const std::string& key) const { return text(key) == "true"; }

std::vector<int> RunConfig::int_list(const std::string& key) const {
  std::vector<int> out;
  for (const auto& it : split(text(key)))
    out.push_back(static_cast<int>(parse_number(field_spec(key), it, true)));
  return out;
}

std::vector<double> RunConfig::real_list(const std::string& key) const {
  std::vector<double> out;
  for (const auto& it : split(text(key))) out.push_back(parse_number(field_spec(key), it, false));
  return out;
}

std::vector<std::string> RunConfig::text_list(const std::string& key) const { return split(text(key)); }

std::string RunConfig::serialize() const {
  std::string out;
  for (const auto& f : field_specs()) out += f.key + " = " + values_.at(f.key) + "\n";
  return out;
}

}  // namespace sda::cli

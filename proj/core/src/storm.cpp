#include "sda/storm.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "sda/error.hpp"
#include "sda/io.hpp"

namespace sda {

void StormConfig::validate() const {
  if (n_vars < 1 || patch < 1 || d_model < 4 || n_layers < 0 || n_heads < 1 || ffn_mult < 1 ||
      noise_features < 4 || K < 0) {
    throw ConfigError("storm config: counts must be positive");
  }
  if (d_model % n_heads != 0) throw ConfigError("storm config: n_heads must divide d_model");
  if (d_model % 4 != 0) throw ConfigError("storm config: d_model must be a multiple of 4");
  if (noise_features % 2 != 0) throw ConfigError("storm config: noise_features must be even");
  if (!(sigma_data > 0.0)) throw ConfigError("storm config: sigma_data must be > 0");
}

double noise_gate(double sigma, double sigma_data) {
  if (!(sigma_data > 0.0)) throw ConfigError("noise_gate: sigma_data must be > 0");
  if (!(sigma >= 0.0)) throw ConfigError("noise_gate: sigma must be >= 0");
  if (std::isinf(sigma)) return 1.0;
  const double s2 = sigma * sigma;
  return s2 / (s2 + sigma_data * sigma_data);
}

Preconditioning precondition(double sigma, double sigma_data) {
  const double s2 = sigma * sigma;
  const double d2 = sigma_data * sigma_data;
  Preconditioning p;
  p.c_skip = d2 / (s2 + d2);
  p.c_out = sigma * sigma_data / std::sqrt(s2 + d2);
  p.c_in = 1.0 / std::sqrt(s2 + d2);
  p.c_noise = std::log(sigma) / 4.0;
  return p;
}

int compressed_tokens(int token_rows, int token_cols) {
  return ((token_rows + 1) / 2) * ((token_cols + 1) / 2);
}

// ---------------------------------------------------------------------------
// Layout and parameter container
// ---------------------------------------------------------------------------

std::size_t StormLayout::Entry::size() const {
  std::size_t n = 1;
  for (int s : shape) n *= static_cast<std::size_t>(s);
  return n;
}

int StormLayout::add(std::string name, std::vector<int> shape) {
  entries_.push_back({std::move(name), std::move(shape)});
  return static_cast<int>(entries_.size()) - 1;
}

StormLayout::StormLayout(const StormConfig& cfg) {
  cfg.validate();
  const int d = cfg.d_model;
  const int v = cfg.n_vars;
  const int pp = cfg.patch * cfg.patch;
  cur_w = add("embed.cur.w", {v, pp, d});
  cur_b = add("embed.cur.b", {v, d});
  cur_q = add("agg.cur.q", {d});
  cur_wk = add("agg.cur.wk", {d, d});
  cur_wv = add("agg.cur.wv", {d, d});
  ctx_w = add("embed.ctx.w", {v, pp, d});
  ctx_b = add("embed.ctx.b", {v, d});
  var_q = add("agg.var.q", {d});
  var_wk = add("agg.var.wk", {d, d});
  var_wv = add("agg.var.wv", {d, d});
  time_q = add("agg.time.q", {d});
  time_wk = add("agg.time.wk", {d, d});
  time_wv = add("agg.time.wv", {d, d});
  comp_wq = add("compress.wq", {d, d});
  comp_q0 = add("compress.q0", {d});
  comp_wk = add("compress.wk", {d, d});
  comp_wv = add("compress.wv", {d, d});
  noise_w = add("noise.w", {cfg.noise_features, d});
  noise_b = add("noise.b", {d});
  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string pre = "layers." + std::to_string(l) + ".";
    Layer L{};
    L.ln1_g = add(pre + "ln1.g", {d});
    L.ln1_b = add(pre + "ln1.b", {d});
    L.self_wq = add(pre + "self.wq", {d, d});
    L.self_wk = add(pre + "self.wk", {d, d});
    L.self_wv = add(pre + "self.wv", {d, d});
    L.self_wo = add(pre + "self.wo", {d, d});
    L.cross_wq = add(pre + "cross.wq", {d, d});
    L.cross_wk = add(pre + "cross.wk", {d, d});
    L.cross_wv = add(pre + "cross.wv", {d, d});
    L.cross_wo = add(pre + "cross.wo", {d, d});
    L.ln2_g = add(pre + "ln2.g", {d});
    L.ln2_b = add(pre + "ln2.b", {d});
    L.ffn_w1 = add(pre + "ffn.w1", {d, cfg.ffn_mult * d});
    L.ffn_b1 = add(pre + "ffn.b1", {cfg.ffn_mult * d});
    L.ffn_w2 = add(pre + "ffn.w2", {cfg.ffn_mult * d, d});
    L.ffn_b2 = add(pre + "ffn.b2", {d});
    layers.push_back(L);
  }
  out_ln_g = add("out.ln.g", {d});
  out_ln_b = add("out.ln.b", {d});
  out_w = add("out.w", {d, v * pp});
  out_b = add("out.b", {v * pp});
}

std::size_t StormLayout::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.size();
  return n;
}

int StormLayout::find(const std::string& name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

StormParams init_storm(const StormConfig& cfg, Rng& rng, bool zero_residual) {
  const StormLayout layout(cfg);
  StormParams params;
  params.config = cfg;
  params.tensors.resize(layout.entries().size());
  std::vector<int> zero_ids = {layout.out_w, layout.out_b};
  std::vector<int> one_ids = {layout.out_ln_g};
  for (const auto& L : layout.layers) {
    zero_ids.insert(zero_ids.end(), {L.self_wo, L.cross_wo, L.ffn_w2, L.ffn_b2});
    one_ids.insert(one_ids.end(), {L.ln1_g, L.ln2_g});
  }
  auto contains = [](const std::vector<int>& ids, int i) {
    return std::find(ids.begin(), ids.end(), i) != ids.end();
  };
  for (std::size_t i = 0; i < layout.entries().size(); ++i) {
    const auto& e = layout.entries()[i];
    auto& t = params.tensors[i];
    t.assign(e.size(), 0.0f);
    const int id = static_cast<int>(i);
    if (contains(one_ids, id)) {
      std::fill(t.begin(), t.end(), 1.0f);
      continue;
    }
    const bool is_bias = e.name.ends_with(".b") || e.name.ends_with(".b1") ||
                         e.name.ends_with(".b2") || e.name == "compress.q0";
    if (is_bias && !(id == layout.out_b && !zero_residual)) continue;
    if (zero_residual && contains(zero_ids, id)) continue;
    double std = 1.0;
    if (e.shape.size() >= 2) std = 1.0 / std::sqrt(static_cast<double>(e.shape[e.shape.size() - 2]));
    if (e.shape.size() == 1 && !is_bias) std = 1.0;  // query vectors
    if (is_bias) std = 0.1;
    for (float& x : t) x = static_cast<float>(std * rng.normal());
  }
  return params;
}

namespace {

constexpr char kParamMagic[4] = {'S', 'D', 'N', 'P'};
constexpr std::uint16_t kParamVersion = 1;

std::vector<std::pair<std::string, double>> config_fields(const StormConfig& c) {
  return {{"config.n_vars", c.n_vars},       {"config.patch", c.patch},
          {"config.d_model", c.d_model},     {"config.n_layers", c.n_layers},
          {"config.n_heads", c.n_heads},     {"config.ffn_mult", c.ffn_mult},
          {"config.noise_features", c.noise_features}, {"config.K", c.K},
          {"config.sigma_data", c.sigma_data}, {"config.learn_sigma_data", c.learn_sigma_data ? 1 : 0}};
}

}  // namespace

std::string encode_params(const StormParams& params) {
  const StormLayout layout(params.config);
  if (params.tensors.size() != layout.entries().size()) {
    throw ShapeError("encode_params: tensor count does not match the config");
  }
  const auto cfg = config_fields(params.config);
  ByteWriter w;
  w.raw(std::string(kParamMagic, 4));
  w.u16(kParamVersion);
  w.u32(static_cast<std::uint32_t>(cfg.size() + params.tensors.size()));
  auto put = [&](const std::string& name, const std::vector<int>& shape, const float* data,
                 std::size_t n) {
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.raw(name);
    w.u8(static_cast<std::uint8_t>(shape.size()));
    for (int s : shape) w.u32(static_cast<std::uint32_t>(s));
    for (std::size_t i = 0; i < n; ++i) w.f32(data[i]);
  };
  for (const auto& [name, value] : cfg) {
    const float f = static_cast<float>(value);
    put(name, {1}, &f, 1);
  }
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    const auto& e = layout.entries()[i];
    if (params.tensors[i].size() != e.size()) throw ShapeError("encode_params: bad size for " + e.name);
    put(e.name, e.shape, params.tensors[i].data(), e.size());
  }
  return w.take();
}

StormParams decode_params(const std::string& bytes) {
  ByteReader r(bytes);
  if (r.raw(4) != std::string(kParamMagic, 4)) throw FormatError("not an SDNP parameter container");
  if (r.u16() != kParamVersion) throw FormatError("unsupported SDNP version");
  const std::uint32_t count = r.u32();
  std::vector<std::pair<std::string, std::pair<std::vector<int>, std::vector<float>>>> items;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.raw(r.u16());
    const int rank = r.u8();
    std::vector<int> shape(static_cast<std::size_t>(rank));
    std::size_t n = 1;
    for (int& s : shape) {
      s = static_cast<int>(r.u32());
      n *= static_cast<std::size_t>(s);
    }
    std::vector<float> data(n);
    for (float& f : data) f = r.f32();
    items.push_back({name, {std::move(shape), std::move(data)}});
  }
  if (!r.done()) throw FormatError("trailing bytes in SDNP container");

  auto scalar = [&](const std::string& name) -> double {
    for (const auto& it : items) {
      if (it.first == name) return it.second.second.at(0);
    }
    throw FormatError("SDNP container lacks " + name);
  };
  StormParams params;
  StormConfig& c = params.config;
  c.n_vars = static_cast<int>(scalar("config.n_vars"));
  c.patch = static_cast<int>(scalar("config.patch"));
  c.d_model = static_cast<int>(scalar("config.d_model"));
  c.n_layers = static_cast<int>(scalar("config.n_layers"));
  c.n_heads = static_cast<int>(scalar("config.n_heads"));
  c.ffn_mult = static_cast<int>(scalar("config.ffn_mult"));
  c.noise_features = static_cast<int>(scalar("config.noise_features"));
  c.K = static_cast<int>(scalar("config.K"));
  c.sigma_data = scalar("config.sigma_data");
  c.learn_sigma_data = scalar("config.learn_sigma_data") != 0.0;
  const StormLayout layout(c);
  params.tensors.resize(layout.entries().size());
  for (std::size_t i = 0; i < layout.entries().size(); ++i) {
    const auto& e = layout.entries()[i];
    bool found = false;
    for (auto& it : items) {
      if (it.first != e.name) continue;
      if (it.second.first != e.shape) throw FormatError("SDNP shape mismatch for " + e.name);
      params.tensors[i] = std::move(it.second.second);
      found = true;
      break;
    }
    if (!found) throw FormatError("SDNP container lacks " + e.name);
  }
  return params;
}

void save_params(const std::filesystem::path& path, const StormParams& params) {
  write_text(path, encode_params(params));
}

StormParams load_params(const std::filesystem::path& path) { return decode_params(read_text(path)); }

// ---------------------------------------------------------------------------
// Embedding tables
// ---------------------------------------------------------------------------

namespace {

constexpr double kSinusoidBase = 64.0;

template <class T>
void sinusoid(double x, int dims, T* out) {
  const int half = dims / 2;
  for (int i = 0; i < half; ++i) {
    const double freq = std::pow(kSinusoidBase, -static_cast<double>(i) / half);
    out[2 * i] = static_cast<T>(std::sin(x * freq));
    out[2 * i + 1] = static_cast<T>(std::cos(x * freq));
  }
}

template <class T>
std::vector<T> noise_features(T c_noise, int n) {
  std::vector<T> f(static_cast<std::size_t>(n));
  const int half = n / 2;
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(std::log(16.0) * i / std::max(1, half - 1));
    f[static_cast<std::size_t>(2 * i)] = static_cast<T>(std::cos(freq * c_noise));
    f[static_cast<std::size_t>(2 * i + 1)] = static_cast<T>(std::sin(freq * c_noise));
  }
  return f;
}

template <class T>
void add_row(Mat<T>& m, const T* row) {
  for (int i = 0; i < m.rows; ++i) {
    T* r = m.row(i);
    for (int j = 0; j < m.cols; ++j) r[j] += row[j];
  }
}

template <class T>
void add_mat(Mat<T>& m, const Mat<T>& other) {
  for (std::size_t i = 0; i < m.size(); ++i) m.data[i] += other.data[i];
}

// Single-query attention pooling over J stacked item matrices (N x d each):
// out[t] = sum_j softmax_j(q . K_j[t] / sqrt(d)) V_j[t].
template <class T>
void aggregate_forward(const std::vector<Mat<T>>& items, const std::uint8_t* mask, const T* q,
                       const T* wk, const T* wv, int d, int n, Mat<T>& out, AggCache<T>& cache) {
  const int J = static_cast<int>(items.size());
  cache.keys.resize(static_cast<std::size_t>(J));
  cache.values.resize(static_cast<std::size_t>(J));
  for (int j = 0; j < J; ++j) {
    linear(items[static_cast<std::size_t>(j)], wk, static_cast<const T*>(nullptr), d, cache.keys[static_cast<std::size_t>(j)]);
    linear(items[static_cast<std::size_t>(j)], wv, static_cast<const T*>(nullptr), d, cache.values[static_cast<std::size_t>(j)]);
  }
  cache.weights.resize(n, J);
  out.resize(n, d);
  const T scale = T(1) / std::sqrt(static_cast<T>(d));
  for (int t = 0; t < n; ++t) {
    T* w = cache.weights.row(t);
    for (int j = 0; j < J; ++j) {
      if (mask != nullptr && mask[j] == 0) {
        w[j] = -std::numeric_limits<T>::infinity();
        continue;
      }
      const T* k = cache.keys[static_cast<std::size_t>(j)].row(t);
      T s = 0;
      for (int c = 0; c < d; ++c) s += q[c] * k[c];
      w[j] = s * scale;
    }
    if (J > 0) softmax_inplace(w, J);
    T* o = out.row(t);
    for (int j = 0; j < J; ++j) {
      const T a = w[j];
      if (a == T(0)) continue;
      const T* v = cache.values[static_cast<std::size_t>(j)].row(t);
      for (int c = 0; c < d; ++c) o[c] += a * v[c];
    }
  }
  flops::add(FlopTag::context_attention, 2ull * n * J * d);
}

template <class T>
void aggregate_backward(const std::vector<Mat<T>>& items, const T* q, const T* wk, const T* wv,
                        int d, const AggCache<T>& cache, const Mat<T>& dout, T* dq, T* dwk,
                        T* dwv, std::vector<Mat<T>>* ditems) {
  const int J = static_cast<int>(items.size());
  const int n = dout.rows;
  const T scale = T(1) / std::sqrt(static_cast<T>(d));
  std::vector<Mat<T>> dk(static_cast<std::size_t>(J), Mat<T>(n, d));
  std::vector<Mat<T>> dv(static_cast<std::size_t>(J), Mat<T>(n, d));
  std::vector<T> da(static_cast<std::size_t>(J));
  for (int t = 0; t < n; ++t) {
    const T* w = cache.weights.row(t);
    const T* g = dout.row(t);
    T dot = 0;
    for (int j = 0; j < J; ++j) {
      const T* v = cache.values[static_cast<std::size_t>(j)].row(t);
      T s = 0;
      for (int c = 0; c < d; ++c) s += g[c] * v[c];
      da[static_cast<std::size_t>(j)] = s;
      dot += w[j] * s;
      T* dvr = dv[static_cast<std::size_t>(j)].row(t);
      for (int c = 0; c < d; ++c) dvr[c] = w[j] * g[c];
    }
    for (int j = 0; j < J; ++j) {
      const T ds = w[j] * (da[static_cast<std::size_t>(j)] - dot) * scale;
      if (ds == T(0)) continue;
      const T* k = cache.keys[static_cast<std::size_t>(j)].row(t);
      if (dq != nullptr) {
        for (int c = 0; c < d; ++c) dq[c] += ds * k[c];
      }
      T* dkr = dk[static_cast<std::size_t>(j)].row(t);
      for (int c = 0; c < d; ++c) dkr[c] = ds * q[c];
    }
  }
  if (ditems != nullptr) ditems->resize(static_cast<std::size_t>(J));
  for (int j = 0; j < J; ++j) {
    const auto& x = items[static_cast<std::size_t>(j)];
    Mat<T>* dx = ditems != nullptr ? &(*ditems)[static_cast<std::size_t>(j)] : nullptr;
    linear_backward(x, wk, dk[static_cast<std::size_t>(j)], dwk, static_cast<T*>(nullptr), dx, false);
    linear_backward(x, wv, dv[static_cast<std::size_t>(j)], dwv, static_cast<T*>(nullptr), dx, true);
  }
}

template <class T>
void split_vars(const Mat<T>& tokens, int n_vars, std::vector<Mat<T>>& out) {
  const int pp = tokens.cols / n_vars;
  out.resize(static_cast<std::size_t>(n_vars));
  for (int v = 0; v < n_vars; ++v) {
    Mat<T>& m = out[static_cast<std::size_t>(v)];
    m.resize(tokens.rows, pp);
    for (int t = 0; t < tokens.rows; ++t) {
      for (int o = 0; o < pp; ++o) m(t, o) = tokens(t, o * n_vars + v);
    }
  }
}

}  // namespace

template <class T>
Mat<T> position_table(int token_rows, int token_cols, int patch, int d) {
  Mat<T> m(token_rows * token_cols, d);
  for (int r = 0; r < token_rows; ++r) {
    for (int c = 0; c < token_cols; ++c) {
      T* row = m.row(r * token_cols + c);
      sinusoid((r + 0.5) * patch, d / 2, row);
      sinusoid((c + 0.5) * patch, d / 2, row + d / 2);
    }
  }
  return m;
}

template <class T>
Mat<T> coarse_position_table(int token_rows, int token_cols, int patch, int d) {
  const int mr = (token_rows + 1) / 2;
  const int mc = (token_cols + 1) / 2;
  Mat<T> m(mr * mc, d);
  for (int r = 0; r < mr; ++r) {
    for (int c = 0; c < mc; ++c) {
      T* row = m.row(r * mc + c);
      sinusoid((2 * r + 1.0) * patch, d / 2, row);
      sinusoid((2 * c + 1.0) * patch, d / 2, row + d / 2);
    }
  }
  return m;
}

template Mat<float> position_table<float>(int, int, int, int);
template Mat<double> position_table<double>(int, int, int, int);
template Mat<float> coarse_position_table<float>(int, int, int, int);
template Mat<double> coarse_position_table<double>(int, int, int, int);

template <class T>
StormInputs<T> make_inputs(const StormConfig& cfg, const StateField& z, double sigma,
                           const TemporalContext& ctx) {
  const GridSpec& s = z.spec();
  if (s.n_vars != cfg.n_vars) throw ShapeError("storm: variable count does not match the model");
  if (s.ny % cfg.patch != 0 || s.nx % cfg.patch != 0) {
    throw ShapeError("storm: patch size must divide the field");
  }
  const GridSpec local{s.ny, s.nx, s.n_vars, cfg.patch, ctx.K()};
  const Preconditioning pc = precondition(sigma, cfg.sigma_data);
  auto to_mat = [&](const StateField& f, double scale) {
    const TokenGrid tg = patchify(StateField(GridSpec{local.ny, local.nx, local.n_vars, local.patch, f.spec().K}, f.vector()),
                                  GridSpec{local.ny, local.nx, local.n_vars, local.patch, f.spec().K});
    Mat<T> m(tg.n_tokens, tg.width);
    for (std::size_t i = 0; i < tg.data.size(); ++i) m.data[i] = static_cast<T>(scale * tg.data[i]);
    return m;
  };
  StormInputs<T> in;
  in.current = to_mat(z, pc.c_in);
  for (int k = 0; k < ctx.K(); ++k) {
    const StateField& f = ctx.frame(k);
    if (f.spec().ny != s.ny || f.spec().nx != s.nx || f.spec().n_vars != s.n_vars) {
      throw ShapeError("storm: context frame shape does not match the state");
    }
    in.frames.push_back(to_mat(f, 1.0));
    in.calendar.push_back(static_cast<T>(ctx.calendar()[static_cast<std::size_t>(k)]));
    in.mask.push_back(ctx.mask()[static_cast<std::size_t>(k)]);
  }
  in.pos = position_table<T>(local.token_rows(), local.token_cols(), cfg.patch, cfg.d_model);
  in.coarse_pos = coarse_position_table<T>(local.token_rows(), local.token_cols(), cfg.patch, cfg.d_model);
  in.c_noise = static_cast<T>(pc.c_noise);
  in.gate = static_cast<T>(noise_gate(sigma, cfg.sigma_data));
  return in;
}

template StormInputs<float> make_inputs<float>(const StormConfig&, const StateField&, double,
                                               const TemporalContext&);
template StormInputs<double> make_inputs<double>(const StormConfig&, const StateField&, double,
                                                 const TemporalContext&);

// ---------------------------------------------------------------------------
// Network
// ---------------------------------------------------------------------------

template <class T>
StormNet<T>::StormNet(const StormParams& params) : cfg_(params.config), layout_(params.config) {
  if (params.tensors.size() != layout_.entries().size()) {
    throw ShapeError("storm: parameter tensors do not match the config");
  }
  w_.resize(params.tensors.size());
  for (std::size_t i = 0; i < w_.size(); ++i) {
    if (params.tensors[i].size() != layout_.entries()[i].size()) {
      throw ShapeError("storm: wrong size for " + layout_.entries()[i].name);
    }
    w_[i].assign(params.tensors[i].begin(), params.tensors[i].end());
  }
}

template <class T>
void StormNet<T>::embed_context(const StormInputs<T>& in, StormTape<T>& tape) const {
  const int d = cfg_.d_model;
  const int n = in.current.rows;
  const int pp = cfg_.patch * cfg_.patch;
  const std::size_t K = in.frames.size();
  std::vector<T> res(static_cast<std::size_t>(d));
  sinusoid(static_cast<double>(cfg_.patch), d, res.data());
  std::vector<T> cal(static_cast<std::size_t>(d));

  tape.ctx_in.resize(K);
  tape.ctx_embed.resize(K);
  tape.ctx_agg.resize(K);
  tape.frame_tokens.resize(K);
  for (std::size_t k = 0; k < K; ++k) {
    if (in.frames[k].rows != n) throw ShapeError("storm: context frame token count mismatch");
    split_vars(in.frames[k], cfg_.n_vars, tape.ctx_in[k]);
    tape.ctx_embed[k].resize(static_cast<std::size_t>(cfg_.n_vars));
    for (int v = 0; v < cfg_.n_vars; ++v) {
      linear(tape.ctx_in[k][static_cast<std::size_t>(v)], p(layout_.ctx_w) + v * pp * d,
             p(layout_.ctx_b) + v * d, d, tape.ctx_embed[k][static_cast<std::size_t>(v)]);
    }
    aggregate_forward(tape.ctx_embed[k], static_cast<const std::uint8_t*>(nullptr), p(layout_.var_q),
                      p(layout_.var_wk), p(layout_.var_wv), d, n, tape.frame_tokens[k], tape.ctx_agg[k]);
    sinusoid(static_cast<double>(in.calendar[k]), d, cal.data());
    add_mat(tape.frame_tokens[k], in.pos);
    add_row(tape.frame_tokens[k], res.data());
    add_row(tape.frame_tokens[k], cal.data());
  }
  aggregate_forward(tape.frame_tokens, in.mask.empty() ? nullptr : in.mask.data(), p(layout_.time_q),
                    p(layout_.time_wk), p(layout_.time_wv), d, n, tape.context, tape.time_agg);
  linear(in.coarse_pos, p(layout_.comp_wq), p(layout_.comp_q0), d, tape.cq);
  linear(tape.context, p(layout_.comp_wk), static_cast<const T*>(nullptr), d, tape.ck);
  linear(tape.context, p(layout_.comp_wv), static_cast<const T*>(nullptr), d, tape.cv);
  attention_forward(tape.cq, tape.ck, tape.cv, 1, tape.compressed, &tape.cp, FlopTag::context_attention);
}

template <class T>
Mat<T> StormNet<T>::compress_context(const StormInputs<T>& in) const {
  StormTape<T> tape;
  embed_context(in, tape);
  return tape.compressed;
}

template <class T>
void StormNet<T>::forward(const StormInputs<T>& in, StormTape<T>& tape) const {
  const int d = cfg_.d_model;
  const int n = in.current.rows;
  const int pp = cfg_.patch * cfg_.patch;
  const int width = cfg_.n_vars * pp;
  if (in.current.cols != width) throw ShapeError("storm: token width does not match the model");
  if (in.pos.rows != n || in.pos.cols != d) throw ShapeError("storm: positional table shape mismatch");

  split_vars(in.current, cfg_.n_vars, tape.cur_in);
  tape.cur_embed.resize(static_cast<std::size_t>(cfg_.n_vars));
  for (int v = 0; v < cfg_.n_vars; ++v) {
    linear(tape.cur_in[static_cast<std::size_t>(v)], p(layout_.cur_w) + v * pp * d,
           p(layout_.cur_b) + v * d, d, tape.cur_embed[static_cast<std::size_t>(v)]);
  }
  Mat<T> u;
  aggregate_forward(tape.cur_embed, static_cast<const std::uint8_t*>(nullptr), p(layout_.cur_q),
                    p(layout_.cur_wk), p(layout_.cur_wv), d, n, u, tape.cur_agg);

  tape.noise_feat = noise_features(in.c_noise, cfg_.noise_features);
  std::vector<T> bias(p(layout_.noise_b), p(layout_.noise_b) + d);
  gemm_nn(1, d, cfg_.noise_features, tape.noise_feat.data(), cfg_.noise_features, p(layout_.noise_w),
          d, bias.data(), d, true);
  std::vector<T> res(static_cast<std::size_t>(d));
  sinusoid(static_cast<double>(cfg_.patch), d, res.data());
  for (int j = 0; j < d; ++j) bias[static_cast<std::size_t>(j)] += res[static_cast<std::size_t>(j)];
  add_mat(u, in.pos);
  add_row(u, bias.data());

  auto t0 = std::chrono::steady_clock::now();
  embed_context(in, tape);
  auto t1 = std::chrono::steady_clock::now();
  tape.context_seconds = std::chrono::duration<double>(t1 - t0).count();

  const T g = in.gate;
  const int heads = cfg_.n_heads;
  const int hidden = cfg_.ffn_mult * d;
  tape.layers.resize(layout_.layers.size());
  for (std::size_t l = 0; l < layout_.layers.size(); ++l) {
    const auto& L = layout_.layers[l];
    LayerTape<T>& lt = tape.layers[l];
    lt.u_in = u;
    layernorm_forward(u, p(L.ln1_g), p(L.ln1_b), lt.h1, lt.ln1);
    linear(lt.h1, p(L.self_wq), static_cast<const T*>(nullptr), d, lt.qs);
    linear(lt.h1, p(L.self_wk), static_cast<const T*>(nullptr), d, lt.ks);
    linear(lt.h1, p(L.self_wv), static_cast<const T*>(nullptr), d, lt.vs);
    attention_forward(lt.qs, lt.ks, lt.vs, heads, lt.s, &lt.ps, FlopTag::layer_attention);
    Mat<T> so;
    linear(lt.s, p(L.self_wo), static_cast<const T*>(nullptr), d, so);
    linear(lt.h1, p(L.cross_wq), static_cast<const T*>(nullptr), d, lt.qx);
    linear(tape.compressed, p(L.cross_wk), static_cast<const T*>(nullptr), d, lt.kx);
    linear(tape.compressed, p(L.cross_wv), static_cast<const T*>(nullptr), d, lt.vx);
    attention_forward(lt.qx, lt.kx, lt.vx, heads, lt.x, &lt.px, FlopTag::layer_attention);
    Mat<T> xo;
    linear(lt.x, p(L.cross_wo), static_cast<const T*>(nullptr), d, xo);
    lt.u1 = u;
    for (std::size_t i = 0; i < u.size(); ++i) lt.u1.data[i] += (T(1) - g) * so.data[i] + g * xo.data[i];
    layernorm_forward(lt.u1, p(L.ln2_g), p(L.ln2_b), lt.h2, lt.ln2);
    linear(lt.h2, p(L.ffn_w1), p(L.ffn_b1), hidden, lt.f1);
    lt.act = lt.f1;
    for (T& x : lt.act.data) x = gelu(x);
    Mat<T> f2;
    linear(lt.act, p(L.ffn_w2), p(L.ffn_b2), d, f2);
    u = lt.u1;
    add_mat(u, f2);
    if (!all_finite(u)) {
      throw NumericalError("storm: non-finite activation in layer " + std::to_string(l));
    }
  }
  tape.layer_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count();
  tape.u_out = u;
  layernorm_forward(u, p(layout_.out_ln_g), p(layout_.out_ln_b), tape.h_out, tape.ln_out);
  linear(tape.h_out, p(layout_.out_w), p(layout_.out_b), width, tape.out);
  if (!all_finite(tape.out)) throw NumericalError("storm: non-finite decoder output");
}

template <class T>
void StormNet<T>::backward(const StormInputs<T>& in, const StormTape<T>& tape, const Mat<T>& d_out,
                           std::vector<std::vector<T>>* grads, Mat<T>* d_current) const {
  const int d = cfg_.d_model;
  const int n = in.current.rows;
  const int pp = cfg_.patch * cfg_.patch;
  const int heads = cfg_.n_heads;
  auto gp = [&](int idx) -> T* {
    return grads != nullptr ? (*grads)[static_cast<std::size_t>(idx)].data() : nullptr;
  };

  Mat<T> dh;
  linear_backward(tape.h_out, p(layout_.out_w), d_out, gp(layout_.out_w), gp(layout_.out_b), &dh, false);
  Mat<T> du(n, d);
  layernorm_backward(tape.ln_out, p(layout_.out_ln_g), dh, gp(layout_.out_ln_g), gp(layout_.out_ln_b), du);

  const int m = tape.compressed.rows;
  Mat<T> dcomp(m, d);
  const T g = in.gate;
  for (std::size_t li = layout_.layers.size(); li-- > 0;) {
    const auto& L = layout_.layers[li];
    const LayerTape<T>& lt = tape.layers[li];
    Mat<T> dact;
    linear_backward(lt.act, p(L.ffn_w2), du, gp(L.ffn_w2), gp(L.ffn_b2), &dact, false);
    for (std::size_t i = 0; i < dact.size(); ++i) dact.data[i] *= gelu_grad(lt.f1.data[i]);
    Mat<T> dh2;
    linear_backward(lt.h2, p(L.ffn_w1), dact, gp(L.ffn_w1), gp(L.ffn_b1), &dh2, false);
    Mat<T> du1 = du;
    layernorm_backward(lt.ln2, p(L.ln2_g), dh2, gp(L.ln2_g), gp(L.ln2_b), du1);

    Mat<T> dso = du1;
    Mat<T> dxo = du1;
    for (T& x : dso.data) x *= (T(1) - g);
    for (T& x : dxo.data) x *= g;

    Mat<T> dx;
    linear_backward(lt.x, p(L.cross_wo), dxo, gp(L.cross_wo), static_cast<T*>(nullptr), &dx, false);
    Mat<T> dqx(n, d), dkx(m, d), dvx(m, d);
    attention_backward(lt.qx, lt.kx, lt.vx, heads, lt.px, dx, dqx, dkx, dvx);
    Mat<T> dh1;
    linear_backward(lt.h1, p(L.cross_wq), dqx, gp(L.cross_wq), static_cast<T*>(nullptr), &dh1, false);
    if (grads != nullptr) {
      linear_backward(tape.compressed, p(L.cross_wk), dkx, gp(L.cross_wk), static_cast<T*>(nullptr), &dcomp, true);
      linear_backward(tape.compressed, p(L.cross_wv), dvx, gp(L.cross_wv), static_cast<T*>(nullptr), &dcomp, true);
    }

    Mat<T> ds;
    linear_backward(lt.s, p(L.self_wo), dso, gp(L.self_wo), static_cast<T*>(nullptr), &ds, false);
    Mat<T> dqs(n, d), dks(n, d), dvs(n, d);
    attention_backward(lt.qs, lt.ks, lt.vs, heads, lt.ps, ds, dqs, dks, dvs);
    linear_backward(lt.h1, p(L.self_wq), dqs, gp(L.self_wq), static_cast<T*>(nullptr), &dh1, true);
    linear_backward(lt.h1, p(L.self_wk), dks, gp(L.self_wk), static_cast<T*>(nullptr), &dh1, true);
    linear_backward(lt.h1, p(L.self_wv), dvs, gp(L.self_wv), static_cast<T*>(nullptr), &dh1, true);
    du = du1;
    layernorm_backward(lt.ln1, p(L.ln1_g), dh1, gp(L.ln1_g), gp(L.ln1_b), du);
  }

  if (grads != nullptr) {
    // Noise embedding: u0 = ... + nf W + b.
    std::vector<T> dn(static_cast<std::size_t>(d), T(0));
    for (int t = 0; t < n; ++t) {
      const T* r = du.row(t);
      for (int j = 0; j < d; ++j) dn[static_cast<std::size_t>(j)] += r[j];
    }
    T* dw = gp(layout_.noise_w);
    T* db = gp(layout_.noise_b);
    for (int i = 0; i < cfg_.noise_features; ++i) {
      for (int j = 0; j < d; ++j) dw[i * d + j] += tape.noise_feat[static_cast<std::size_t>(i)] * dn[static_cast<std::size_t>(j)];
    }
    for (int j = 0; j < d; ++j) db[j] += dn[static_cast<std::size_t>(j)];

    // Context path.
    Mat<T> dcq(m, d), dck(n, d), dcv(n, d);
    attention_backward(tape.cq, tape.ck, tape.cv, 1, tape.cp, dcomp, dcq, dck, dcv);
    linear_backward(in.coarse_pos, p(layout_.comp_wq), dcq, gp(layout_.comp_wq), gp(layout_.comp_q0),
                    static_cast<Mat<T>*>(nullptr), false);
    Mat<T> dctx;
    linear_backward(tape.context, p(layout_.comp_wk), dck, gp(layout_.comp_wk), static_cast<T*>(nullptr), &dctx, false);
    linear_backward(tape.context, p(layout_.comp_wv), dcv, gp(layout_.comp_wv), static_cast<T*>(nullptr), &dctx, true);
    std::vector<Mat<T>> dframes;
    aggregate_backward(tape.frame_tokens, p(layout_.time_q), p(layout_.time_wk), p(layout_.time_wv), d,
                       tape.time_agg, dctx, gp(layout_.time_q), gp(layout_.time_wk), gp(layout_.time_wv),
                       &dframes);
    for (std::size_t k = 0; k < tape.frame_tokens.size(); ++k) {
      std::vector<Mat<T>> dembed;
      aggregate_backward(tape.ctx_embed[k], p(layout_.var_q), p(layout_.var_wk), p(layout_.var_wv), d,
                         tape.ctx_agg[k], dframes[k], gp(layout_.var_q), gp(layout_.var_wk),
                         gp(layout_.var_wv), &dembed);
      for (int v = 0; v < cfg_.n_vars; ++v) {
        linear_backward(tape.ctx_in[k][static_cast<std::size_t>(v)], p(layout_.ctx_w) + v * pp * d,
                        dembed[static_cast<std::size_t>(v)], gp(layout_.ctx_w) + v * pp * d,
                        gp(layout_.ctx_b) + v * d, static_cast<Mat<T>*>(nullptr), false);
      }
    }
  }

  std::vector<Mat<T>> dembed;
  aggregate_backward(tape.cur_embed, p(layout_.cur_q), p(layout_.cur_wk), p(layout_.cur_wv), d,
                     tape.cur_agg, du, gp(layout_.cur_q), gp(layout_.cur_wk), gp(layout_.cur_wv), &dembed);
  if (d_current != nullptr) d_current->resize(n, in.current.cols);
  for (int v = 0; v < cfg_.n_vars; ++v) {
    Mat<T> dxv;
    T* dw = grads != nullptr ? gp(layout_.cur_w) + v * pp * d : nullptr;
    T* db = grads != nullptr ? gp(layout_.cur_b) + v * d : nullptr;
    linear_backward(tape.cur_in[static_cast<std::size_t>(v)], p(layout_.cur_w) + v * pp * d,
                    dembed[static_cast<std::size_t>(v)], dw, db,
                    d_current != nullptr ? &dxv : nullptr, false);
    if (d_current != nullptr) {
      for (int t = 0; t < n; ++t) {
        for (int o = 0; o < pp; ++o) (*d_current)(t, o * cfg_.n_vars + v) = dxv(t, o);
      }
    }
  }
}

template class StormNet<float>;
template class StormNet<double>;

// ---------------------------------------------------------------------------
// Denoiser adapter
// ---------------------------------------------------------------------------

StormDenoiser::StormDenoiser(StormParams params) : params_(std::move(params)), net_(params_) {}

void StormDenoiser::check(const StateField& z, const TemporalContext& ctx) const {
  const auto& cfg = params_.config;
  if (z.spec().n_vars != cfg.n_vars) throw ShapeError("storm: variable count does not match the model");
  if (z.spec().ny % cfg.patch != 0 || z.spec().nx % cfg.patch != 0) {
    throw ShapeError("storm: patch size must divide the field");
  }
  for (const auto& f : ctx.frames()) {
    if (f.spec().ny != z.spec().ny || f.spec().nx != z.spec().nx) {
      throw ShapeError("storm: context frame shape does not match the state");
    }
  }
}

namespace {

StateField tokens_to_field(const Mat<double>& m, const GridSpec& spec, int patch) {
  const GridSpec local{spec.ny, spec.nx, spec.n_vars, patch, spec.K};
  TokenGrid tg{m.rows, m.cols, std::vector<double>(m.data.begin(), m.data.end())};
  StateField f = unpatchify(tg, local);
  return StateField(spec, f.vector());
}

Mat<double> field_to_tokens(const StateField& f, int patch) {
  const GridSpec& s = f.spec();
  const GridSpec local{s.ny, s.nx, s.n_vars, patch, s.K};
  const TokenGrid tg = patchify(StateField(local, f.vector()), local);
  Mat<double> m(tg.n_tokens, tg.width);
  std::copy(tg.data.begin(), tg.data.end(), m.data.begin());
  return m;
}

}  // namespace

StateField StormDenoiser::evaluate_region(const StateField& z, double sigma,
                                          const TemporalContext& ctx, const Region&) const {
  if (!(sigma >= 0.0)) throw ConfigError("storm: sigma must be >= 0");
  check(z, ctx);
  if (sigma == 0.0) return z;
  const auto& cfg = params_.config;
  const Preconditioning pc = precondition(sigma, cfg.sigma_data);
  const StormInputs<double> in = make_inputs<double>(cfg, z, sigma, ctx);
  StormTape<double> tape;
  net_.forward(in, tape);
  StateField out = tokens_to_field(tape.out, z.spec(), cfg.patch);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = pc.c_skip * z[i] + pc.c_out * out[i];
  return out;
}

StateField StormDenoiser::vjp_region(const StateField& z, double sigma, const TemporalContext& ctx,
                                     const StateField& cotangent, const Region&) const {
  require_same_shape(z, cotangent, "storm vjp");
  if (!(sigma >= 0.0)) throw ConfigError("storm: sigma must be >= 0");
  check(z, ctx);
  if (sigma == 0.0) return cotangent;
  const auto& cfg = params_.config;
  const Preconditioning pc = precondition(sigma, cfg.sigma_data);
  const StormInputs<double> in = make_inputs<double>(cfg, z, sigma, ctx);
  StormTape<double> tape;
  net_.forward(in, tape);
  Mat<double> dout = field_to_tokens(cotangent, cfg.patch);
  for (double& x : dout.data) x *= pc.c_out;
  Mat<double> dcur;
  net_.backward(in, tape, dout, nullptr, &dcur);
  StateField dz = tokens_to_field(dcur, z.spec(), cfg.patch);
  for (std::size_t i = 0; i < dz.size(); ++i) dz[i] = pc.c_skip * cotangent[i] + pc.c_in * dz[i];
  return dz;
}

}  // namespace sda

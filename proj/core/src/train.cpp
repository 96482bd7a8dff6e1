#include "sda/train.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "sda/error.hpp"
#include "sda/io.hpp"

namespace sda {

SigmaLaw parse_sigma_law(const std::string& s) {
  if (s == "log_normal") return SigmaLaw::log_normal;
  if (s == "log_uniform") return SigmaLaw::log_uniform;
  throw ConfigError("sigma law must be 'log_normal' or 'log_uniform', got '" + s + "'");
}

std::string to_string(SigmaLaw law) {
  return law == SigmaLaw::log_normal ? "log_normal" : "log_uniform";
}

void TrainConfig::validate() const {
  if (steps < 0 || batch < 1) throw ConfigError("train: steps must be >= 0 and batch >= 1");
  if (!(lr > 0.0) || !(eps > 0.0)) throw ConfigError("train: learning rate and eps must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("train: Adam betas must lie in [0, 1)");
  }
  if (!(p_std > 0.0)) throw ConfigError("train: p_std must be > 0");
  if (!(sigma_lo > 0.0) || !(sigma_lo < sigma_hi)) throw ConfigError("train: need 0 < sigma_lo < sigma_hi");
  if (!(final_lr_fraction > 0.0 && final_lr_fraction <= 1.0)) {
    throw ConfigError("train: final_lr_fraction must lie in (0, 1]");
  }
  if (!(divergence_factor > 1.0) || divergence_patience < 1) {
    throw ConfigError("train: divergence guard needs factor > 1 and patience >= 1");
  }
}

namespace {

TemporalContext independent_context(const GridSpec& spec,
                                    const std::function<StateField(Rng&)>& draw, Rng& rng) {
  if (spec.K == 0) return {};
  std::vector<StateField> frames;
  for (int k = 0; k < spec.K; ++k) frames.push_back(draw(rng));
  return TemporalContext(std::move(frames));
}

}  // namespace

DatasetGenerator gaussian_toy_dataset(const GridSpec& spec, double mean, double var) {
  if (!(var >= 0.0)) throw ConfigError("gaussian toy: variance must be >= 0");
  const double sd = std::sqrt(var);
  auto draw = [spec, mean, sd](Rng& rng) {
    StateField f(spec);
    for (double& v : f.values()) v = mean + sd * rng.normal();
    return f;
  };
  return [spec, draw](Rng& rng) {
    TrainingExample ex{draw(rng), {}};
    ex.ctx = independent_context(spec, draw, rng);
    return ex;
  };
}

DatasetGenerator grf_dataset(const GridSpec& spec, const GrfParams& grf, ContextMode mode,
                             const Dynamics& dyn, double model_noise) {
  validate(grf);
  auto draw = [spec, grf](Rng& rng) { return sample_grf(spec, grf, rng); };
  return [=](Rng& rng) {
    if (mode == ContextMode::independent || spec.K == 0) {
      TrainingExample ex{draw(rng), {}};
      ex.ctx = independent_context(spec, draw, rng);
      return ex;
    }
    TemporalContext ctx = evolve_context(draw(rng), spec.K, model_noise, rng, dyn);
    StateField x = advance(ctx.frames().back(), dyn, model_noise, rng);
    return TrainingExample{std::move(x), std::move(ctx)};
  };
}

DatasetGenerator constant_dataset(const GridSpec& spec, double value) {
  return [spec, value](Rng&) {
    TrainingExample ex{StateField(spec, value), {}};
    if (spec.K > 0) ex.ctx = TemporalContext(std::vector<StateField>(static_cast<std::size_t>(spec.K), ex.x));
    return ex;
  };
}

double draw_sigma(const TrainConfig& cfg, Rng& rng) {
  if (cfg.law == SigmaLaw::log_uniform) {
    const double a = std::log(cfg.sigma_lo);
    const double b = std::log(cfg.sigma_hi);
    return std::exp(a + (b - a) * rng.uniform());
  }
  const double s = std::exp(cfg.p_mean + cfg.p_std * rng.normal());
  return std::clamp(s, cfg.sigma_lo, cfg.sigma_hi);
}

TrainState TrainState::fresh(StormParams params) {
  TrainState s;
  s.adam_m.resize(params.tensors.size());
  s.adam_v.resize(params.tensors.size());
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    s.adam_m[i].assign(params.tensors[i].size(), 0.0f);
    s.adam_v[i].assign(params.tensors[i].size(), 0.0f);
  }
  s.params = std::move(params);
  return s;
}

namespace {

double loss_weight(const TrainConfig& cfg, double sigma, double sigma_data) {
  if (!cfg.edm_weighting) return 1.0;
  return (sigma * sigma + sigma_data * sigma_data) / (sigma * sigma * sigma_data * sigma_data);
}

}  // namespace

TrainResult train_denoiser(const DatasetGenerator& data, TrainState state, const TrainConfig& cfg,
                           const std::function<void(const TrainLogRow&)>& on_step) {
  cfg.validate();
  const StormConfig& mcfg = state.params.config;
  mcfg.validate();
  if (mcfg.learn_sigma_data) throw ConfigError("train: learnable sigma_data is not supported");

  StormNet<float> net(state.params);
  auto& weights = net.weights();
  if (state.adam_m.size() != weights.size() || state.adam_v.size() != weights.size()) {
    throw ShapeError("train: optimizer state does not match the parameters");
  }
  std::vector<std::vector<float>> grads(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) grads[i].assign(weights[i].size(), 0.0f);

  TrainResult result;
  int above = 0;
  const int first_step = state.step;
  const int last_step = state.step + cfg.steps;
  for (int step = first_step; step < last_step; ++step) {
    for (auto& g : grads) std::fill(g.begin(), g.end(), 0.0f);
    double loss_sum = 0.0;
    double sigma_sum = 0.0;
    for (int b = 0; b < cfg.batch; ++b) {
      Rng rng(cfg.seed, static_cast<std::uint64_t>(step) * cfg.batch + b);
      const TrainingExample ex = data(rng);
      const double sigma = draw_sigma(cfg, rng);
      sigma_sum += sigma;
      const Preconditioning pc = precondition(sigma, mcfg.sigma_data);
      StateField z = ex.x;
      for (double& v : z.values()) v += sigma * rng.normal();

      const StormInputs<float> in = make_inputs<float>(mcfg, z, sigma, ex.ctx);
      StormTape<float> tape;
      net.forward(in, tape);

      // D - x = c_out (F - target) with target = (x - c_skip z) / c_out.
      StateField target(z.spec());
      for (std::size_t i = 0; i < z.size(); ++i) target[i] = (ex.x[i] - pc.c_skip * z[i]) / pc.c_out;
      const GridSpec tok{z.spec().ny, z.spec().nx, z.spec().n_vars, mcfg.patch, z.spec().K};
      const TokenGrid tg = patchify(StateField(tok, target.vector()), tok);
      const double w = loss_weight(cfg, sigma, mcfg.sigma_data) * pc.c_out * pc.c_out;
      const double n = static_cast<double>(tg.data.size());
      Mat<float> dout(tape.out.rows, tape.out.cols);
      double sq = 0.0;
      for (std::size_t i = 0; i < tg.data.size(); ++i) {
        const double e = static_cast<double>(tape.out.data[i]) - tg.data[i];
        sq += e * e;
        dout.data[i] = static_cast<float>(2.0 * w * e / (n * cfg.batch));
      }
      loss_sum += w * sq / n;
      net.backward(in, tape, dout, &grads, nullptr);
    }
    const double loss = loss_sum / cfg.batch;
    if (!std::isfinite(loss)) {
      throw NumericalError("training produced a non-finite loss at step " + std::to_string(step));
    }
    if (step == first_step) result.initial_loss = loss;
    above = loss > cfg.divergence_factor * result.initial_loss ? above + 1 : 0;
    if (above >= cfg.divergence_patience) {
      std::ostringstream msg;
      msg << "training diverged at step " << step << ": loss " << loss << " stayed above "
          << cfg.divergence_factor << "x the initial loss " << result.initial_loss << " for "
          << cfg.divergence_patience << " steps";
      throw NumericalError(msg.str());
    }

    double gn = 0.0;
    for (const auto& g : grads) {
      for (float x : g) gn += static_cast<double>(x) * x;
    }
    gn = std::sqrt(gn);

    const int t = step + 1;
    double lr = cfg.lr;
    if (cfg.decay_steps > 0) {
      const double frac = std::min(1.0, static_cast<double>(step) / cfg.decay_steps);
      lr *= 1.0 - (1.0 - cfg.final_lr_fraction) * frac;
    }
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    const float b1 = static_cast<float>(cfg.beta1);
    const float b2 = static_cast<float>(cfg.beta2);
    for (std::size_t i = 0; i < weights.size(); ++i) {
      auto& w = weights[i];
      auto& m = state.adam_m[i];
      auto& v = state.adam_v[i];
      const auto& g = grads[i];
      for (std::size_t j = 0; j < w.size(); ++j) {
        m[j] = b1 * m[j] + (1.0f - b1) * g[j];
        v[j] = b2 * v[j] + (1.0f - b2) * g[j] * g[j];
        const double mh = m[j] / bc1;
        const double vh = v[j] / bc2;
        w[j] -= static_cast<float>(lr * mh / (std::sqrt(vh) + cfg.eps));
      }
    }
    state.step = t;
    const TrainLogRow row{step, loss, sigma_sum / cfg.batch, gn};
    result.log.push_back(row);
    if (on_step) on_step(row);
  }

  for (std::size_t i = 0; i < weights.size(); ++i) state.params.tensors[i] = weights[i];
  if (!result.log.empty()) {
    const std::size_t tail = std::max<std::size_t>(1, result.log.size() / 10);
    double acc = 0.0;
    for (std::size_t i = result.log.size() - tail; i < result.log.size(); ++i) acc += result.log[i].loss;
    result.final_smoothed_loss = acc / static_cast<double>(tail);
  }
  result.state = std::move(state);
  return result;
}

TrainResult train_denoiser(const DatasetGenerator& data, const StormConfig& model,
                           const TrainConfig& cfg) {
  Rng rng(cfg.seed, 0xC0FFEEull);
  return train_denoiser(data, TrainState::fresh(init_storm(model, rng)), cfg);
}

std::string train_log_csv(const std::vector<TrainLogRow>& log) {
  std::ostringstream ss;
  ss << "step,loss,sigma_mean,grad_norm\n" << std::setprecision(9);
  for (const auto& r : log) ss << r.step << ',' << r.loss << ',' << r.sigma_mean << ',' << r.grad_norm << '\n';
  return ss.str();
}

double gaussian_toy_baseline(const TrainConfig& cfg, double prior_var, double sigma_data,
                             int samples) {
  Rng rng(cfg.seed, 0xBA5Eull);
  double acc = 0.0;
  for (int i = 0; i < samples; ++i) {
    const double s = draw_sigma(cfg, rng);
    const double s2 = s * s;
    acc += loss_weight(cfg, s, sigma_data) * s2 * prior_var / (s2 + prior_var);
  }
  return acc / samples;
}

namespace {
constexpr char kCheckpointMagic[4] = {'S', 'D', 'C', 'K'};
}

void save_checkpoint(const std::filesystem::path& path, const TrainState& state) {
  ByteWriter w;
  w.raw(std::string(kCheckpointMagic, 4));
  w.u16(1);
  w.u32(static_cast<std::uint32_t>(state.step));
  const std::string params = encode_params(state.params);
  w.u64(params.size());
  w.raw(params);
  for (const auto* moments : {&state.adam_m, &state.adam_v}) {
    for (const auto& t : *moments) {
      for (float f : t) w.f32(f);
    }
  }
  write_text(path, w.take());
}

TrainState load_checkpoint(const std::filesystem::path& path) {
  const std::string bytes = read_text(path);
  ByteReader r(bytes);
  if (r.raw(4) != std::string(kCheckpointMagic, 4)) throw FormatError("not a training checkpoint");
  if (r.u16() != 1) throw FormatError("unsupported checkpoint version");
  const int step = static_cast<int>(r.u32());
  const std::uint64_t n = r.u64();
  TrainState state = TrainState::fresh(decode_params(r.raw(n)));
  state.step = step;
  for (auto* moments : {&state.adam_m, &state.adam_v}) {
    for (auto& t : *moments) {
      for (float& f : t) f = r.f32();
    }
  }
  if (!r.done()) throw FormatError("trailing bytes in checkpoint");
  return state;
}

}  // namespace sda

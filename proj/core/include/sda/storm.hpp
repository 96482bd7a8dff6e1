#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sda/denoiser.hpp"
#include "sda/rng.hpp"
#include "sda/tensor.hpp"

namespace sda {

struct StormConfig {
  int n_vars = 1;
  int patch = 2;
  int d_model = 32;
  int n_layers = 2;
  int n_heads = 2;
  int ffn_mult = 4;
  int noise_features = 16;
  int K = 2;  // context frames the model is trained with
  double sigma_data = 1.0;
  bool learn_sigma_data = false;

  /// Throws ConfigError.
  void validate() const;
};

/// Mixing weight of the context branch: sigma^2 / (sigma^2 + sigma_data^2).
double noise_gate(double sigma, double sigma_data);

/// EDM input/output scalings.
struct Preconditioning {
  double c_skip = 1.0;
  double c_out = 0.0;
  double c_in = 1.0;
  double c_noise = 0.0;
};
Preconditioning precondition(double sigma, double sigma_data);

/// Compressed context size for a token grid: one query per 2x2 token block.
int compressed_tokens(int token_rows, int token_cols);

/// Named parameter tensors in a fixed order derived from the config.
class StormLayout {
 public:
  struct Entry {
    std::string name;
    std::vector<int> shape;
    std::size_t size() const;
  };
  struct Layer {
    int ln1_g, ln1_b;
    int self_wq, self_wk, self_wv, self_wo;
    int cross_wq, cross_wk, cross_wv, cross_wo;
    int ln2_g, ln2_b;
    int ffn_w1, ffn_b1, ffn_w2, ffn_b2;
  };

  explicit StormLayout(const StormConfig& cfg);

  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t parameter_count() const;
  int find(const std::string& name) const;  // -1 if absent

  int cur_w, cur_b, cur_q, cur_wk, cur_wv;
  int ctx_w, ctx_b, var_q, var_wk, var_wv;
  int time_q, time_wk, time_wv;
  int comp_wq, comp_q0, comp_wk, comp_wv;
  int noise_w, noise_b;
  int out_ln_g, out_ln_b, out_w, out_b;
  std::vector<Layer> layers;

 private:
  int add(std::string name, std::vector<int> shape);
  std::vector<Entry> entries_;
};

/// Serializable network parameters (float storage).
struct StormParams {
  StormConfig config;
  std::vector<std::vector<float>> tensors;
};

/// Random init. With `zero_residual` the decode head, attention output
/// projections and second FFN matrix start at zero, so a fresh model returns
/// c_skip(sigma) z exactly.
StormParams init_storm(const StormConfig& cfg, Rng& rng, bool zero_residual = true);

/// "SDNP" container: u16 version, u32 tensor count, then per tensor
/// u16 name length, name, u8 rank, u32 dims, f32 payload. The config is
/// stored as rank-1 tensors under "config.*".
std::string encode_params(const StormParams& params);
StormParams decode_params(const std::string& bytes);
void save_params(const std::filesystem::path& path, const StormParams& params);
StormParams load_params(const std::filesystem::path& path);

/// Token-level network inputs for one state (N tokens, M compressed tokens).
template <class T>
struct StormInputs {
  Mat<T> current;               // N x token_width, already scaled by c_in
  std::vector<Mat<T>> frames;   // K x (N x token_width)
  std::vector<T> calendar;      // K
  std::vector<std::uint8_t> mask;  // K, 1 = active
  Mat<T> pos;                   // N x d positional embedding
  Mat<T> coarse_pos;            // M x d compression query positions
  T c_noise = 0;
  T gate = 0;
};

template <class T>
struct AggCache {
  std::vector<Mat<T>> keys;
  std::vector<Mat<T>> values;
  Mat<T> weights;  // N x J
};

template <class T>
struct LayerTape {
  Mat<T> u_in;
  LayerNormCache<T> ln1;
  Mat<T> h1, qs, ks, vs, ps, s;
  Mat<T> qx, kx, vx, px, x;
  Mat<T> u1;
  LayerNormCache<T> ln2;
  Mat<T> h2, f1, act;
};

/// Intermediate activations kept for the reverse pass.
template <class T>
struct StormTape {
  std::vector<Mat<T>> cur_in, cur_embed;  // per variable
  AggCache<T> cur_agg;
  std::vector<std::vector<Mat<T>>> ctx_in, ctx_embed;  // [frame][var]
  std::vector<AggCache<T>> ctx_agg;                    // per frame
  std::vector<Mat<T>> frame_tokens;                    // per frame, N x d
  AggCache<T> time_agg;
  Mat<T> context;  // N x d, after temporal aggregation
  Mat<T> cq, ck, cv, cp, compressed;  // compression
  std::vector<T> noise_feat;
  std::vector<LayerTape<T>> layers;
  Mat<T> u_out;
  LayerNormCache<T> ln_out;
  Mat<T> h_out;
  Mat<T> out;  // N x token_width
  /// Wall time of the last forward spent on context embedding and on the layer stack.
  double context_seconds = 0.0;
  double layer_seconds = 0.0;
};

/// The network body between preconditioning and unpatchify.
template <class T>
class StormNet {
 public:
  explicit StormNet(const StormParams& params);

  const StormConfig& config() const { return cfg_; }
  const StormLayout& layout() const { return layout_; }
  std::vector<std::vector<T>>& weights() { return w_; }
  const std::vector<std::vector<T>>& weights() const { return w_; }

  /// Throws NumericalError naming the layer on non-finite activations.
  void forward(const StormInputs<T>& in, StormTape<T>& tape) const;

  /// Reverse pass from d(out). Parameter gradients are accumulated into
  /// `grads` (same layout as weights) when given; the gradient with respect to
  /// the current tokens is written to `d_current` when given. The context
  /// branch is skipped when no parameter gradients are requested.
  void backward(const StormInputs<T>& in, const StormTape<T>& tape, const Mat<T>& d_out,
                std::vector<std::vector<T>>* grads, Mat<T>* d_current) const;

  /// Compressed context only (M x d).
  Mat<T> compress_context(const StormInputs<T>& in) const;

 private:
  const T* p(int idx) const { return w_[static_cast<std::size_t>(idx)].data(); }
  void embed_context(const StormInputs<T>& in, StormTape<T>& tape) const;

  StormConfig cfg_;
  StormLayout layout_;
  std::vector<std::vector<T>> w_;
};

extern template class StormNet<float>;
extern template class StormNet<double>;

/// Sinusoidal tables shared by every caller (tile-local coordinates).
template <class T>
Mat<T> position_table(int token_rows, int token_cols, int patch, int d);
template <class T>
Mat<T> coarse_position_table(int token_rows, int token_cols, int patch, int d);

/// Builds network inputs from a noisy crop and its context.
template <class T>
StormInputs<T> make_inputs(const StormConfig& cfg, const StateField& z, double sigma,
                           const TemporalContext& ctx);

/// STORM as a pluggable denoiser, evaluated in double precision.
class StormDenoiser final : public Denoiser {
 public:
  explicit StormDenoiser(StormParams params);

  const StormParams& params() const { return params_; }

  StateField evaluate_region(const StateField& z, double sigma, const TemporalContext& ctx,
                             const Region& region) const override;
  StateField vjp_region(const StateField& z, double sigma, const TemporalContext& ctx,
                        const StateField& cotangent, const Region& region) const override;
  bool has_vjp() const override { return true; }
  std::string name() const override { return "storm"; }

 private:
  void check(const StateField& z, const TemporalContext& ctx) const;

  StormParams params_;
  StormNet<double> net_;
};

}  // namespace sda

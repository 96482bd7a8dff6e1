#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <new>
#include <vector>

namespace sda {

// ---------------------------------------------------------------------------
// Instrumentation: tracked working-set bytes and counted flops.
// ---------------------------------------------------------------------------
namespace memtrack {
void add(std::size_t bytes);
void sub(std::size_t bytes);
std::size_t current();
std::size_t peak();
/// Sets the peak to the current tracked size.
void reset_peak();
}  // namespace memtrack

/// Allocator used by the tensor layer so peak working memory is measurable.
template <class T>
struct TrackingAllocator {
  using value_type = T;
  TrackingAllocator() = default;
  template <class U>
  TrackingAllocator(const TrackingAllocator<U>&) {}

  T* allocate(std::size_t n) {
    memtrack::add(n * sizeof(T));
    return static_cast<T*>(::operator new(n * sizeof(T)));
  }
  void deallocate(T* p, std::size_t n) {
    memtrack::sub(n * sizeof(T));
    ::operator delete(p);
  }
  template <class U>
  bool operator==(const TrackingAllocator<U>&) const { return true; }
};

/// Flop categories. 1 multiply-add = 2 flops.
/// layer_attention counts only the per-layer query-key score products, which
/// is the quantity the analytic cost model compares across attention layouts.
enum class FlopTag { layer_attention, context_attention, attention_apply, dense, count };

namespace flops {
void add(FlopTag tag, std::uint64_t n);
std::uint64_t get(FlopTag tag);
std::uint64_t total();
void reset();
}  // namespace flops

// ---------------------------------------------------------------------------
// Row-major matrix
// ---------------------------------------------------------------------------
template <class T>
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<T, TrackingAllocator<T>> data;

  Mat() = default;
  Mat(int r, int c, T fill = T(0)) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}

  void resize(int r, int c) {
    rows = r;
    cols = c;
    data.assign(static_cast<std::size_t>(r) * c, T(0));
  }
  void zero() { std::fill(data.begin(), data.end(), T(0)); }
  T* row(int i) { return data.data() + static_cast<std::size_t>(i) * cols; }
  const T* row(int i) const { return data.data() + static_cast<std::size_t>(i) * cols; }
  T& operator()(int i, int j) { return data[static_cast<std::size_t>(i) * cols + j]; }
  T operator()(int i, int j) const { return data[static_cast<std::size_t>(i) * cols + j]; }
  std::size_t size() const { return data.size(); }
};

// ---------------------------------------------------------------------------
// Dense kernels (raw pointers so head slices and parameter buffers share them)
// ---------------------------------------------------------------------------

/// C[m x n] (+)= A[m x k] * B[k x n]
template <class T>
void gemm_nn(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc,
             bool accumulate, FlopTag tag = FlopTag::dense) {
  for (int i = 0; i < m; ++i) {
    T* crow = c + static_cast<std::size_t>(i) * ldc;
    if (!accumulate) std::fill(crow, crow + n, T(0));
    const T* arow = a + static_cast<std::size_t>(i) * lda;
    for (int p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b + static_cast<std::size_t>(p) * ldb;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  flops::add(tag, 2ull * m * n * k);
}

/// C[m x n] += A^T * B with A[k x m], B[k x n] (weight gradients).
template <class T>
void gemm_tn_acc(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc) {
  for (int p = 0; p < k; ++p) {
    const T* arow = a + static_cast<std::size_t>(p) * lda;
    const T* brow = b + static_cast<std::size_t>(p) * ldb;
    for (int i = 0; i < m; ++i) {
      const T av = arow[i];
      if (av == T(0)) continue;
      T* crow = c + static_cast<std::size_t>(i) * ldc;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  flops::add(FlopTag::dense, 2ull * m * n * k);
}

/// C[m x n] (+)= A[m x k] * B^T with B[n x k]; B is transposed into scratch
/// so the inner loop stays a contiguous axpy.
template <class T>
void gemm_nt(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc,
             bool accumulate) {
  std::vector<T, TrackingAllocator<T>> bt(static_cast<std::size_t>(k) * n);
  for (int j = 0; j < n; ++j) {
    for (int p = 0; p < k; ++p) bt[static_cast<std::size_t>(p) * n + j] = b[static_cast<std::size_t>(j) * ldb + p];
  }
  gemm_nn(m, n, k, a, lda, bt.data(), n, c, ldc, accumulate);
}

/// Y = X W (+ bias). X[rows x in], W[in x out].
template <class T>
void linear(const Mat<T>& x, const T* w, const T* bias, int out, Mat<T>& y) {
  y.resize(x.rows, out);
  gemm_nn(x.rows, out, x.cols, x.data.data(), x.cols, w, out, y.data.data(), out, false);
  if (bias != nullptr) {
    for (int i = 0; i < y.rows; ++i) {
      T* r = y.row(i);
      for (int j = 0; j < out; ++j) r[j] += bias[j];
    }
  }
}

/// Backward of linear: dW += X^T dY, db += colsum(dY), dX (+)= dY W^T.
template <class T>
void linear_backward(const Mat<T>& x, const T* w, const Mat<T>& dy, T* dw, T* dbias, Mat<T>* dx,
                     bool accumulate_dx) {
  const int in = x.cols;
  const int out = dy.cols;
  if (dw != nullptr) gemm_tn_acc(in, out, x.rows, x.data.data(), in, dy.data.data(), out, dw, out);
  if (dbias != nullptr) {
    for (int i = 0; i < dy.rows; ++i) {
      const T* r = dy.row(i);
      for (int j = 0; j < out; ++j) dbias[j] += r[j];
    }
  }
  if (dx != nullptr) {
    if (!accumulate_dx) dx->resize(x.rows, in);
    gemm_nt(dy.rows, in, out, dy.data.data(), out, w, out, dx->data.data(), in, accumulate_dx);
  }
}

template <class T>
void softmax_inplace(T* v, int n) {
  T mx = -std::numeric_limits<T>::infinity();
  for (int j = 0; j < n; ++j) mx = std::max(mx, v[j]);
  if (mx == -std::numeric_limits<T>::infinity()) {
    std::fill(v, v + n, T(0));
    return;
  }
  T sum = 0;
  for (int j = 0; j < n; ++j) {
    v[j] = std::exp(v[j] - mx);
    sum += v[j];
  }
  const T inv = T(1) / sum;
  for (int j = 0; j < n; ++j) v[j] *= inv;
}

/// Multi-head scaled dot-product attention.
///
/// q[nq x d], k[nk x d], v[nk x d] -> out[nq x d]; heads split the d columns.
/// `probs`, when given, receives the materialized probabilities
/// [heads * nq x nk] (needed for the backward pass); otherwise rows are
/// streamed through a single scratch row.
template <class T>
void attention_forward(const Mat<T>& q, const Mat<T>& k, const Mat<T>& v, int heads, Mat<T>& out,
                       Mat<T>* probs, FlopTag tag) {
  const int nq = q.rows;
  const int nk = k.rows;
  const int d = q.cols;
  const int dh = d / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  out.resize(nq, d);
  if (probs != nullptr) probs->resize(heads * nq, nk);
  Mat<T> kt(dh, nk);
  Mat<T> scratch(probs != nullptr ? 0 : 1, nk);
  for (int h = 0; h < heads; ++h) {
    const int c0 = h * dh;
    for (int j = 0; j < nk; ++j) {
      const T* kr = k.row(j) + c0;
      for (int c = 0; c < dh; ++c) kt(c, j) = kr[c];
    }
    for (int i = 0; i < nq; ++i) {
      T* s = probs != nullptr ? probs->row(h * nq + i) : scratch.row(0);
      std::fill(s, s + nk, T(0));
      const T* qr = q.row(i) + c0;
      for (int c = 0; c < dh; ++c) {
        const T qc = qr[c] * scale;
        const T* ktr = kt.row(c);
        for (int j = 0; j < nk; ++j) s[j] += qc * ktr[j];
      }
      softmax_inplace(s, nk);
      T* o = out.row(i) + c0;
      for (int j = 0; j < nk; ++j) {
        const T p = s[j];
        const T* vr = v.row(j) + c0;
        for (int c = 0; c < dh; ++c) o[c] += p * vr[c];
      }
    }
  }
  flops::add(tag, 2ull * nq * nk * d);
  flops::add(FlopTag::attention_apply, 2ull * nq * nk * d);
}

/// Backward of attention_forward given the materialized probabilities.
/// Accumulates into dq, dk, dv (which must be sized like q, k, v).
template <class T>
void attention_backward(const Mat<T>& q, const Mat<T>& k, const Mat<T>& v, int heads,
                        const Mat<T>& probs, const Mat<T>& dout, Mat<T>& dq, Mat<T>& dk,
                        Mat<T>& dv) {
  const int nq = q.rows;
  const int nk = k.rows;
  const int d = q.cols;
  const int dh = d / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  Mat<T> vt(dh, nk);
  std::vector<T, TrackingAllocator<T>> dp(static_cast<std::size_t>(nk));
  for (int h = 0; h < heads; ++h) {
    const int c0 = h * dh;
    for (int j = 0; j < nk; ++j) {
      const T* vr = v.row(j) + c0;
      for (int c = 0; c < dh; ++c) vt(c, j) = vr[c];
    }
    for (int i = 0; i < nq; ++i) {
      const T* p = probs.row(h * nq + i);
      const T* go = dout.row(i) + c0;
      // dV_j += p_ij dOut_i ; dP_ij = dOut_i . V_j
      std::fill(dp.begin(), dp.end(), T(0));
      for (int c = 0; c < dh; ++c) {
        const T g = go[c];
        const T* vtr = vt.row(c);
        for (int j = 0; j < nk; ++j) dp[j] += g * vtr[j];
      }
      for (int j = 0; j < nk; ++j) {
        const T pj = p[j];
        if (pj == T(0)) continue;
        T* dvr = dv.row(j) + c0;
        for (int c = 0; c < dh; ++c) dvr[c] += pj * go[c];
      }
      T dot = 0;
      for (int j = 0; j < nk; ++j) dot += p[j] * dp[j];
      T* dqr = dq.row(i) + c0;
      const T* qr = q.row(i) + c0;
      for (int j = 0; j < nk; ++j) {
        const T ds = p[j] * (dp[j] - dot) * scale;
        if (ds == T(0)) continue;
        const T* kr = k.row(j) + c0;
        T* dkr = dk.row(j) + c0;
        for (int c = 0; c < dh; ++c) {
          dqr[c] += ds * kr[c];
          dkr[c] += ds * qr[c];
        }
      }
    }
  }
}

/// Row-wise layer norm with affine gain/bias; caches normalized rows and 1/std.
template <class T>
struct LayerNormCache {
  Mat<T> xhat;
  std::vector<T> rstd;
};

template <class T>
void layernorm_forward(const Mat<T>& x, const T* gain, const T* bias, Mat<T>& y,
                       LayerNormCache<T>& cache, T eps = T(1e-5)) {
  const int n = x.rows;
  const int d = x.cols;
  y.resize(n, d);
  cache.xhat.resize(n, d);
  cache.rstd.assign(static_cast<std::size_t>(n), T(0));
  for (int i = 0; i < n; ++i) {
    const T* r = x.row(i);
    T mean = 0;
    for (int j = 0; j < d; ++j) mean += r[j];
    mean /= d;
    T var = 0;
    for (int j = 0; j < d; ++j) var += (r[j] - mean) * (r[j] - mean);
    var /= d;
    const T rs = T(1) / std::sqrt(var + eps);
    cache.rstd[static_cast<std::size_t>(i)] = rs;
    T* xh = cache.xhat.row(i);
    T* yr = y.row(i);
    for (int j = 0; j < d; ++j) {
      xh[j] = (r[j] - mean) * rs;
      yr[j] = xh[j] * gain[j] + bias[j];
    }
  }
}

/// dx += LN'(x)^T dy; dgain/dbias accumulate.
template <class T>
void layernorm_backward(const LayerNormCache<T>& cache, const T* gain, const Mat<T>& dy, T* dgain,
                        T* dbias, Mat<T>& dx) {
  const int n = dy.rows;
  const int d = dy.cols;
  std::vector<T> g(static_cast<std::size_t>(d));
  for (int i = 0; i < n; ++i) {
    const T* xh = cache.xhat.row(i);
    const T* dyr = dy.row(i);
    T mg = 0;
    T mgx = 0;
    for (int j = 0; j < d; ++j) {
      if (dgain != nullptr) dgain[j] += dyr[j] * xh[j];
      if (dbias != nullptr) dbias[j] += dyr[j];
      g[static_cast<std::size_t>(j)] = dyr[j] * gain[j];
      mg += g[static_cast<std::size_t>(j)];
      mgx += g[static_cast<std::size_t>(j)] * xh[j];
    }
    mg /= d;
    mgx /= d;
    const T rs = cache.rstd[static_cast<std::size_t>(i)];
    T* dxr = dx.row(i);
    for (int j = 0; j < d; ++j) dxr[j] += rs * (g[static_cast<std::size_t>(j)] - mg - xh[j] * mgx);
  }
}

/// tanh-approximated GELU.
template <class T>
inline T gelu(T x) {
  const T c = T(0.7978845608028654);  // sqrt(2/pi)
  return T(0.5) * x * (T(1) + std::tanh(c * (x + T(0.044715) * x * x * x)));
}

template <class T>
inline T gelu_grad(T x) {
  const T c = T(0.7978845608028654);
  const T u = c * (x + T(0.044715) * x * x * x);
  const T t = std::tanh(u);
  const T du = c * (T(1) + T(3) * T(0.044715) * x * x);
  return T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t * t) * du;
}

template <class T>
bool all_finite(const Mat<T>& m) {
  return std::all_of(m.data.begin(), m.data.end(), [](T v) { return std::isfinite(v); });
}

}  // namespace sda

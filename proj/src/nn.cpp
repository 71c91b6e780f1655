#include "mixitkit/nn.hpp"

#include <omp.h>

#include <atomic>
#include <cmath>
#include <vector>

namespace mixitkit::nn {

namespace {

std::atomic<bool> g_parallel{true};

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr long kParallelWork = 1L << 16;

bool use_parallel(long work) { return g_parallel.load() && work >= kParallelWork && !omp_in_parallel(); }

// Shared loop bodies so the serial and OpenMP variants perform identical
// arithmetic in identical order; only the distribution of outer iterations
// differs.
template <typename Real>
inline void dense_row(const Real* xr, int in, const Real* w, const Real* b, int out, Real* yr) {
  for (int o = 0; o < out; ++o) yr[o] = b ? b[o] : Real(0);
  for (int i = 0; i < in; ++i) {
    const Real xi = xr[i];
    const Real* wi = w + static_cast<std::size_t>(i) * out;
    for (int o = 0; o < out; ++o) yr[o] += xi * wi[o];
  }
}

// dx for one row from the transposed weight (out x in). Each dx entry still
// sums its terms in ascending o, but the inner loop runs over contiguous i.
template <typename Real>
inline void dense_dx_row(const Real* dyr, int in, const Real* wt, int out, Real* dxr, Real* acc) {
  for (int i = 0; i < in; ++i) acc[i] = Real(0);
  for (int o = 0; o < out; ++o) {
    const Real g = dyr[o];
    const Real* wo = wt + static_cast<std::size_t>(o) * in;
    for (int i = 0; i < in; ++i) acc[i] += g * wo[i];
  }
  for (int i = 0; i < in; ++i) dxr[i] += acc[i];
}

template <typename Real>
std::vector<Real> transpose(const Real* w, int in, int out) {
  std::vector<Real> t(static_cast<std::size_t>(in) * out);
  for (int i = 0; i < in; ++i)
    for (int o = 0; o < out; ++o) t[static_cast<std::size_t>(o) * in + i] = w[static_cast<std::size_t>(i) * out + o];
  return t;
}

// dw row i, accumulated over r in ascending order.
template <typename Real>
inline void dense_dw_row(const Real* x, int rows, int in, int i, int out, const Real* dy, Real* dwi) {
  for (int r = 0; r < rows; ++r) {
    const Real xi = x[static_cast<std::size_t>(r) * in + i];
    const Real* dyr = dy + static_cast<std::size_t>(r) * out;
    for (int o = 0; o < out; ++o) dwi[o] += xi * dyr[o];
  }
}

template <typename Real>
void dense_db(int rows, int out, const Real* dy, Real* db) {
  for (int r = 0; r < rows; ++r)
    for (int o = 0; o < out; ++o) db[o] += dy[static_cast<std::size_t>(r) * out + o];
}

template <typename Real>
inline void conv2d_out_row(const Conv2dShape& s, const Real* x, const Real* w, const Real* b, Real* y, int ho) {
  const int wo_n = s.out_width(), ci_n = s.in_channels, co_n = s.out_channels;
  for (int wo = 0; wo < wo_n; ++wo) {
    Real* yp = y + (static_cast<std::size_t>(ho) * wo_n + wo) * co_n;
    for (int co = 0; co < co_n; ++co) {
      Real acc = b ? b[co] : Real(0);
      const Real* wc = w + static_cast<std::size_t>(co) * 9 * ci_n;
      for (int kh = 0; kh < 3; ++kh) {
        const int hi = ho * s.stride + kh - 1;
        if (hi < 0 || hi >= s.height) continue;
        for (int kw = 0; kw < 3; ++kw) {
          const int wi = wo * s.stride + kw - 1;
          if (wi < 0 || wi >= s.width) continue;
          const Real* xp = x + (static_cast<std::size_t>(hi) * s.width + wi) * ci_n;
          const Real* wk = wc + (kh * 3 + kw) * ci_n;
          for (int ci = 0; ci < ci_n; ++ci) acc += xp[ci] * wk[ci];
        }
      }
      yp[co] = acc;
    }
  }
}

template <typename Real>
inline void conv2d_dw_channel(const Conv2dShape& s, const Real* x, const Real* dy, Real* dw, Real* db, int co) {
  const int ho_n = s.out_height(), wo_n = s.out_width(), ci_n = s.in_channels, co_n = s.out_channels;
  Real* wc = dw + static_cast<std::size_t>(co) * 9 * ci_n;
  Real bias_acc = 0;
  for (int ho = 0; ho < ho_n; ++ho)
    for (int wo = 0; wo < wo_n; ++wo) {
      const Real g = dy[(static_cast<std::size_t>(ho) * wo_n + wo) * co_n + co];
      bias_acc += g;
      if (g == Real(0)) continue;
      for (int kh = 0; kh < 3; ++kh) {
        const int hi = ho * s.stride + kh - 1;
        if (hi < 0 || hi >= s.height) continue;
        for (int kw = 0; kw < 3; ++kw) {
          const int wi = wo * s.stride + kw - 1;
          if (wi < 0 || wi >= s.width) continue;
          const Real* xp = x + (static_cast<std::size_t>(hi) * s.width + wi) * ci_n;
          Real* wk = wc + (kh * 3 + kw) * ci_n;
          for (int ci = 0; ci < ci_n; ++ci) wk[ci] += g * xp[ci];
        }
      }
    }
  if (db) db[co] += bias_acc;
}

// dx for one input row hi, gathering every output position that reads it.
template <typename Real>
inline void conv2d_dx_row(const Conv2dShape& s, const Real* w, const Real* dy, Real* dx, int hi) {
  const int ho_n = s.out_height(), wo_n = s.out_width(), ci_n = s.in_channels, co_n = s.out_channels;
  for (int wi = 0; wi < s.width; ++wi) {
    Real* dxp = dx + (static_cast<std::size_t>(hi) * s.width + wi) * ci_n;
    for (int kh = 0; kh < 3; ++kh) {
      const int num_h = hi + 1 - kh;
      if (num_h < 0 || num_h % s.stride != 0) continue;
      const int ho = num_h / s.stride;
      if (ho >= ho_n) continue;
      for (int kw = 0; kw < 3; ++kw) {
        const int num_w = wi + 1 - kw;
        if (num_w < 0 || num_w % s.stride != 0) continue;
        const int wo = num_w / s.stride;
        if (wo >= wo_n) continue;
        const Real* g = dy + (static_cast<std::size_t>(ho) * wo_n + wo) * co_n;
        for (int co = 0; co < co_n; ++co) {
          if (g[co] == Real(0)) continue;
          const Real* wk = w + (static_cast<std::size_t>(co) * 9 + kh * 3 + kw) * ci_n;
          for (int ci = 0; ci < ci_n; ++ci) dxp[ci] += g[co] * wk[ci];
        }
      }
    }
  }
}

}  // namespace

void set_parallel_kernels(bool enabled) { g_parallel.store(enabled); }
bool parallel_kernels_enabled() { return g_parallel.load(); }

template <typename Real>
void dense_forward_serial(const Real* x, int rows, int in, const Real* w, const Real* b, int out, Real* y) {
  for (int r = 0; r < rows; ++r)
    dense_row(x + static_cast<std::size_t>(r) * in, in, w, b, out, y + static_cast<std::size_t>(r) * out);
}

template <typename Real>
void dense_forward_omp(const Real* x, int rows, int in, const Real* w, const Real* b, int out, Real* y) {
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r)
    dense_row(x + static_cast<std::size_t>(r) * in, in, w, b, out, y + static_cast<std::size_t>(r) * out);
}

template <typename Real>
void dense_forward(const Real* x, int rows, int in, const Real* w, const Real* b, int out, Real* y) {
  if (use_parallel(static_cast<long>(rows) * in * out))
    dense_forward_omp(x, rows, in, w, b, out, y);
  else
    dense_forward_serial(x, rows, in, w, b, out, y);
}

template <typename Real>
void dense_backward_serial(const Real* x, int rows, int in, const Real* w, int out, const Real* dy, Real* dx,
                           Real* dw, Real* db) {
  if (dx) {
    const std::vector<Real> wt = transpose(w, in, out);
    std::vector<Real> acc(in);
    for (int r = 0; r < rows; ++r)
      dense_dx_row(dy + static_cast<std::size_t>(r) * out, in, wt.data(), out, dx + static_cast<std::size_t>(r) * in,
                   acc.data());
  }
  // Row-major sweep; every dw[i][o] still sums over r in ascending order.
  if (dw)
    for (int r = 0; r < rows; ++r) {
      const Real* xr = x + static_cast<std::size_t>(r) * in;
      const Real* dyr = dy + static_cast<std::size_t>(r) * out;
      for (int i = 0; i < in; ++i) {
        const Real xi = xr[i];
        Real* dwi = dw + static_cast<std::size_t>(i) * out;
        for (int o = 0; o < out; ++o) dwi[o] += xi * dyr[o];
      }
    }
  if (db) dense_db(rows, out, dy, db);
}

template <typename Real>
void dense_backward_omp(const Real* x, int rows, int in, const Real* w, int out, const Real* dy, Real* dx, Real* dw,
                        Real* db) {
  if (dx) {
    const std::vector<Real> wt = transpose(w, in, out);
#pragma omp parallel
    {
      std::vector<Real> acc(in);
#pragma omp for schedule(static)
      for (int r = 0; r < rows; ++r)
        dense_dx_row(dy + static_cast<std::size_t>(r) * out, in, wt.data(), out,
                     dx + static_cast<std::size_t>(r) * in, acc.data());
    }
  }
  if (dw) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < in; ++i) dense_dw_row(x, rows, in, i, out, dy, dw + static_cast<std::size_t>(i) * out);
  }
  if (db) dense_db(rows, out, dy, db);
}

template <typename Real>
void dense_backward(const Real* x, int rows, int in, const Real* w, int out, const Real* dy, Real* dx, Real* dw,
                    Real* db) {
  if (use_parallel(static_cast<long>(rows) * in * out))
    dense_backward_omp(x, rows, in, w, out, dy, dx, dw, db);
  else
    dense_backward_serial(x, rows, in, w, out, dy, dx, dw, db);
}

template <typename Real>
void conv2d_forward_serial(const Conv2dShape& s, const Real* x, const Real* w, const Real* b, Real* y) {
  for (int ho = 0; ho < s.out_height(); ++ho) conv2d_out_row(s, x, w, b, y, ho);
}

template <typename Real>
void conv2d_forward_omp(const Conv2dShape& s, const Real* x, const Real* w, const Real* b, Real* y) {
  const int ho_n = s.out_height();
#pragma omp parallel for schedule(static)
  for (int ho = 0; ho < ho_n; ++ho) conv2d_out_row(s, x, w, b, y, ho);
}

template <typename Real>
void conv2d_forward(const Conv2dShape& s, const Real* x, const Real* w, const Real* b, Real* y) {
  const long work = 9L * s.out_height() * s.out_width() * s.in_channels * s.out_channels;
  if (use_parallel(work))
    conv2d_forward_omp(s, x, w, b, y);
  else
    conv2d_forward_serial(s, x, w, b, y);
}

template <typename Real>
void conv2d_backward_serial(const Conv2dShape& s, const Real* x, const Real* w, const Real* dy, Real* dx, Real* dw,
                            Real* db) {
  if (dw)
    for (int co = 0; co < s.out_channels; ++co) conv2d_dw_channel(s, x, dy, dw, db, co);
  if (dx)
    for (int hi = 0; hi < s.height; ++hi) conv2d_dx_row(s, w, dy, dx, hi);
}

template <typename Real>
void conv2d_backward_omp(const Conv2dShape& s, const Real* x, const Real* w, const Real* dy, Real* dx, Real* dw,
                         Real* db) {
  if (dw) {
#pragma omp parallel for schedule(static)
    for (int co = 0; co < s.out_channels; ++co) conv2d_dw_channel(s, x, dy, dw, db, co);
  }
  if (dx) {
#pragma omp parallel for schedule(static)
    for (int hi = 0; hi < s.height; ++hi) conv2d_dx_row(s, w, dy, dx, hi);
  }
}

template <typename Real>
void conv2d_backward(const Conv2dShape& s, const Real* x, const Real* w, const Real* dy, Real* dx, Real* dw,
                     Real* db) {
  const long work = 9L * s.out_height() * s.out_width() * s.in_channels * s.out_channels;
  if (use_parallel(work))
    conv2d_backward_omp(s, x, w, dy, dx, dw, db);
  else
    conv2d_backward_serial(s, x, w, dy, dx, dw, db);
}

template <typename Real>
void depthwise_forward(const Real* x, int frames, int channels, const Real* w, const Real* b, int dilation, Real* y) {
  for (int f = 0; f < frames; ++f) {
    Real* yf = y + static_cast<std::size_t>(f) * channels;
    for (int c = 0; c < channels; ++c) yf[c] = b[c];
    for (int k = 0; k < 3; ++k) {
      const int src = f + (k - 1) * dilation;
      if (src < 0 || src >= frames) continue;
      const Real* xs = x + static_cast<std::size_t>(src) * channels;
      for (int c = 0; c < channels; ++c) yf[c] += w[c * 3 + k] * xs[c];
    }
  }
}

template <typename Real>
void depthwise_backward(const Real* x, int frames, int channels, const Real* w, int dilation, const Real* dy,
                        Real* dx, Real* dw, Real* db) {
  for (int f = 0; f < frames; ++f) {
    const Real* g = dy + static_cast<std::size_t>(f) * channels;
    if (db)
      for (int c = 0; c < channels; ++c) db[c] += g[c];
    for (int k = 0; k < 3; ++k) {
      const int src = f + (k - 1) * dilation;
      if (src < 0 || src >= frames) continue;
      const Real* xs = x + static_cast<std::size_t>(src) * channels;
      Real* dxs = dx ? dx + static_cast<std::size_t>(src) * channels : nullptr;
      for (int c = 0; c < channels; ++c) {
        if (dw) dw[c * 3 + k] += g[c] * xs[c];
        if (dxs) dxs[c] += g[c] * w[c * 3 + k];
      }
    }
  }
}

template <typename Real>
void prelu_forward(const Real* x, std::size_t n, Real slope, Real* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > Real(0) ? x[i] : slope * x[i];
}

template <typename Real>
void prelu_backward(const Real* x, std::size_t n, Real slope, const Real* dy, Real* dx, Real* dslope) {
  Real ds = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (x[i] > Real(0)) {
      if (dx) dx[i] += dy[i];
    } else {
      if (dx) dx[i] += slope * dy[i];
      ds += dy[i] * x[i];
    }
  }
  if (dslope) *dslope += ds;
}

template <typename Real>
void instance_norm_forward(const Real* x, int frames, int channels, const Real* gain, const Real* bias, Real* y,
                           Real* xhat, Real* inv_std) {
  for (int c = 0; c < channels; ++c) {
    double mean = 0.0;
    for (int f = 0; f < frames; ++f) mean += x[static_cast<std::size_t>(f) * channels + c];
    mean /= frames;
    double var = 0.0;
    for (int f = 0; f < frames; ++f) {
      const double d = x[static_cast<std::size_t>(f) * channels + c] - mean;
      var += d * d;
    }
    var /= frames;
    const double is = 1.0 / std::sqrt(var + kInstanceNormEps);
    inv_std[c] = static_cast<Real>(is);
    for (int f = 0; f < frames; ++f) {
      const std::size_t i = static_cast<std::size_t>(f) * channels + c;
      const Real h = static_cast<Real>((x[i] - mean) * is);
      xhat[i] = h;
      y[i] = gain[c] * h + bias[c];
    }
  }
}

template <typename Real>
void instance_norm_backward(const Real* xhat, const Real* inv_std, int frames, int channels, const Real* gain,
                            const Real* dy, Real* dx, Real* dgain, Real* dbias) {
  for (int c = 0; c < channels; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int f = 0; f < frames; ++f) {
      const std::size_t i = static_cast<std::size_t>(f) * channels + c;
      sum_dy += dy[i];
      sum_dy_xhat += dy[i] * xhat[i];
    }
    if (dgain) dgain[c] += static_cast<Real>(sum_dy_xhat);
    if (dbias) dbias[c] += static_cast<Real>(sum_dy);
    if (!dx) continue;
    const double mean_g = sum_dy / frames, mean_gx = sum_dy_xhat / frames;
    const double scale = static_cast<double>(gain[c]) * inv_std[c];
    for (int f = 0; f < frames; ++f) {
      const std::size_t i = static_cast<std::size_t>(f) * channels + c;
      dx[i] += static_cast<Real>(scale * (dy[i] - mean_g - xhat[i] * mean_gx));
    }
  }
}

template <typename Real>
Real sigmoid(Real v) {
  if (v >= Real(0)) return Real(1) / (Real(1) + std::exp(-v));
  const Real e = std::exp(v);
  return e / (Real(1) + e);
}

#define MIXITKIT_NN_INSTANTIATE(Real)                                                                              \
  template void dense_forward_serial<Real>(const Real*, int, int, const Real*, const Real*, int, Real*);           \
  template void dense_forward_omp<Real>(const Real*, int, int, const Real*, const Real*, int, Real*);              \
  template void dense_forward<Real>(const Real*, int, int, const Real*, const Real*, int, Real*);                  \
  template void dense_backward_serial<Real>(const Real*, int, int, const Real*, int, const Real*, Real*, Real*,    \
                                            Real*);                                                                \
  template void dense_backward_omp<Real>(const Real*, int, int, const Real*, int, const Real*, Real*, Real*,       \
                                         Real*);                                                                   \
  template void dense_backward<Real>(const Real*, int, int, const Real*, int, const Real*, Real*, Real*, Real*);   \
  template void conv2d_forward_serial<Real>(const Conv2dShape&, const Real*, const Real*, const Real*, Real*);     \
  template void conv2d_forward_omp<Real>(const Conv2dShape&, const Real*, const Real*, const Real*, Real*);        \
  template void conv2d_forward<Real>(const Conv2dShape&, const Real*, const Real*, const Real*, Real*);            \
  template void conv2d_backward_serial<Real>(const Conv2dShape&, const Real*, const Real*, const Real*, Real*,     \
                                             Real*, Real*);                                                        \
  template void conv2d_backward_omp<Real>(const Conv2dShape&, const Real*, const Real*, const Real*, Real*, Real*, \
                                          Real*);                                                                  \
  template void conv2d_backward<Real>(const Conv2dShape&, const Real*, const Real*, const Real*, Real*, Real*,     \
                                      Real*);                                                                      \
  template void depthwise_forward<Real>(const Real*, int, int, const Real*, const Real*, int, Real*);              \
  template void depthwise_backward<Real>(const Real*, int, int, const Real*, int, const Real*, Real*, Real*,       \
                                         Real*);                                                                   \
  template void prelu_forward<Real>(const Real*, std::size_t, Real, Real*);                                        \
  template void prelu_backward<Real>(const Real*, std::size_t, Real, const Real*, Real*, Real*);                   \
  template void instance_norm_forward<Real>(const Real*, int, int, const Real*, const Real*, Real*, Real*, Real*); \
  template void instance_norm_backward<Real>(const Real*, const Real*, int, int, const Real*, const Real*, Real*,  \
                                             Real*, Real*);                                                        \
  template Real sigmoid<Real>(Real);

MIXITKIT_NN_INSTANTIATE(float)
MIXITKIT_NN_INSTANTIATE(double)

}  // namespace mixitkit::nn

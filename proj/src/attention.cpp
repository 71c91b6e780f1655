#include "mixitkit/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "mixitkit/error.hpp"
#include "mixitkit/nn.hpp"

namespace mixitkit {

template <typename Real>
void attend_forward(const AttentionRef<Real>& p, const Real* q, const Real* keys, const Real* values, int rows,
                    Real* out, AttendCache<Real>& cache) {
  const int h = p.hidden(), o = p.output();
  cache.rows = rows;
  cache.tq.resize(h);
  cache.tk.resize(static_cast<std::size_t>(rows) * h);
  cache.vh.resize(static_cast<std::size_t>(rows) * o);
  cache.alpha.resize(rows);

  nn::dense_forward(q, 1, p.q.in, p.q.w, p.q.b, h, cache.tq.data());
  for (auto& v : cache.tq) v = std::tanh(v);
  nn::dense_forward(keys, rows, p.k.in, p.k.w, p.k.b, h, cache.tk.data());
  for (auto& v : cache.tk) v = std::tanh(v);
  nn::dense_forward(values, rows, p.v.in, p.v.w, p.v.b, o, cache.vh.data());

  Real peak = -std::numeric_limits<Real>::infinity();
  for (int r = 0; r < rows; ++r) {
    Real e = 0;
    const Real* tk = cache.tk.data() + static_cast<std::size_t>(r) * h;
    for (int j = 0; j < h; ++j) e += tk[j] * cache.tq[j];
    cache.alpha[r] = e;
    peak = std::max(peak, e);
  }
  Real total = 0;
  for (auto& a : cache.alpha) {
    a = std::exp(a - peak);
    total += a;
  }
  for (auto& a : cache.alpha) a /= total;

  std::fill(out, out + o, Real(0));
  for (int r = 0; r < rows; ++r) {
    const Real* vh = cache.vh.data() + static_cast<std::size_t>(r) * o;
    for (int j = 0; j < o; ++j) out[j] += cache.alpha[r] * vh[j];
  }
}

template <typename Real>
void attend_backward(const AttentionRef<Real>& p, const Real* q, const Real* keys, const Real* values, int rows,
                     const AttendCache<Real>& cache, const Real* dout, Real* dq, Real* dkeys, Real* dvalues,
                     const AttentionGradRef<Real>& grads) {
  const int h = p.hidden(), o = p.output();
  std::vector<Real> dalpha(rows), dvh(static_cast<std::size_t>(rows) * o);
  Real weighted = 0;
  for (int r = 0; r < rows; ++r) {
    const Real* vh = cache.vh.data() + static_cast<std::size_t>(r) * o;
    Real d = 0;
    for (int j = 0; j < o; ++j) {
      d += vh[j] * dout[j];
      dvh[static_cast<std::size_t>(r) * o + j] = cache.alpha[r] * dout[j];
    }
    dalpha[r] = d;
    weighted += cache.alpha[r] * d;
  }
  // Softmax, then the tanh-bilinear logits.
  std::vector<Real> dkh(static_cast<std::size_t>(rows) * h), dqh(h, Real(0));
  for (int r = 0; r < rows; ++r) {
    const Real de = cache.alpha[r] * (dalpha[r] - weighted);
    const Real* tk = cache.tk.data() + static_cast<std::size_t>(r) * h;
    Real* dk = dkh.data() + static_cast<std::size_t>(r) * h;
    for (int j = 0; j < h; ++j) {
      dk[j] = de * cache.tq[j] * (Real(1) - tk[j] * tk[j]);
      dqh[j] += de * tk[j];
    }
  }
  for (int j = 0; j < h; ++j) dqh[j] *= Real(1) - cache.tq[j] * cache.tq[j];

  nn::dense_backward(values, rows, p.v.in, p.v.w, o, dvh.data(), dvalues, grads.v.w, grads.v.b);
  nn::dense_backward(keys, rows, p.k.in, p.k.w, h, dkh.data(), dkeys, grads.k.w, grads.k.b);
  nn::dense_backward(q, 1, p.q.in, p.q.w, h, dqh.data(), dq, grads.q.w, grads.q.b);
}

template <typename Real>
void mean_pool_forward(const Real* z, int rows, int cols, Real* out) {
  std::fill(out, out + cols, Real(0));
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) out[c] += z[static_cast<std::size_t>(r) * cols + c];
  for (int c = 0; c < cols; ++c) out[c] /= static_cast<Real>(rows);
}

template <typename Real>
void mean_pool_backward(int rows, int cols, const Real* dout, Real* dz) {
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) dz[static_cast<std::size_t>(r) * cols + c] += dout[c] / static_cast<Real>(rows);
}

template <typename Real>
void pool_forward(const AttentionRef<Real>& p, const Real* z, int rows, Real* out, std::vector<Real>& query,
                  AttendCache<Real>& cache) {
  query.resize(p.q.in);
  mean_pool_forward(z, rows, p.q.in, query.data());
  attend_forward(p, query.data(), z, z, rows, out, cache);
}

template <typename Real>
void pool_backward(const AttentionRef<Real>& p, const Real* z, int rows, const std::vector<Real>& query,
                   const AttendCache<Real>& cache, const Real* dout, Real* dz, const AttentionGradRef<Real>& grads) {
  std::vector<Real> dq(p.q.in, Real(0));
  attend_backward(p, query.data(), z, z, rows, cache, dout, dq.data(), dz, dz, grads);
  if (dz) mean_pool_backward(rows, p.q.in, dq.data(), dz);
}

#define MIXITKIT_ATTENTION_INSTANTIATE(Real)                                                                       \
  template void attend_forward<Real>(const AttentionRef<Real>&, const Real*, const Real*, const Real*, int, Real*, \
                                     AttendCache<Real>&);                                                          \
  template void attend_backward<Real>(const AttentionRef<Real>&, const Real*, const Real*, const Real*, int,       \
                                      const AttendCache<Real>&, const Real*, Real*, Real*, Real*,                  \
                                      const AttentionGradRef<Real>&);                                              \
  template void pool_forward<Real>(const AttentionRef<Real>&, const Real*, int, Real*, std::vector<Real>&,         \
                                   AttendCache<Real>&);                                                            \
  template void pool_backward<Real>(const AttentionRef<Real>&, const Real*, int, const std::vector<Real>&,         \
                                    const AttendCache<Real>&, const Real*, Real*, const AttentionGradRef<Real>&);  \
  template void mean_pool_forward<Real>(const Real*, int, int, Real*);                                             \
  template void mean_pool_backward<Real>(int, int, const Real*, Real*);

MIXITKIT_ATTENTION_INSTANTIATE(float)
MIXITKIT_ATTENTION_INSTANTIATE(double)

namespace {

std::vector<double> uniform_init(Rng& rng, std::size_t n, int fan_in) {
  const double lim = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-lim, lim);
  return v;
}

void check_dims(const AttentionParams& p, int q_cols, int k_cols, int v_cols) {
  if (q_cols != p.query_dim || k_cols != p.key_dim || v_cols != p.value_dim)
    throw InvalidInput("attend: embedding widths (" + std::to_string(q_cols) + ", " + std::to_string(k_cols) + ", " +
                       std::to_string(v_cols) + ") do not match attention params (" + std::to_string(p.query_dim) +
                       ", " + std::to_string(p.key_dim) + ", " + std::to_string(p.value_dim) + ")");
}

}  // namespace

AttentionParams AttentionParams::init(int query_dim, int key_dim, int value_dim, int hidden_dim, int output_dim,
                                      Rng& rng) {
  AttentionParams p;
  p.query_dim = query_dim;
  p.key_dim = key_dim;
  p.value_dim = value_dim;
  p.hidden_dim = hidden_dim;
  p.output_dim = output_dim;
  p.wq = uniform_init(rng, static_cast<std::size_t>(query_dim) * hidden_dim, query_dim);
  p.bq = uniform_init(rng, hidden_dim, query_dim);
  p.wk = uniform_init(rng, static_cast<std::size_t>(key_dim) * hidden_dim, key_dim);
  p.bk = uniform_init(rng, hidden_dim, key_dim);
  p.wv = uniform_init(rng, static_cast<std::size_t>(value_dim) * output_dim, value_dim);
  p.bv = uniform_init(rng, output_dim, value_dim);
  return p;
}

AttentionRef<double> AttentionParams::ref() const {
  AttentionRef<double> r;
  r.q = {wq.data(), bq.data(), query_dim, hidden_dim};
  r.k = {wk.data(), bk.data(), key_dim, hidden_dim};
  r.v = {wv.data(), bv.data(), value_dim, output_dim};
  return r;
}

AttentionGrads::AttentionGrads(const AttentionParams& p)
    : wq(p.wq.size(), 0.0), bq(p.bq.size(), 0.0), wk(p.wk.size(), 0.0), bk(p.bk.size(), 0.0),
      wv(p.wv.size(), 0.0), bv(p.bv.size(), 0.0) {}

AttentionGradRef<double> AttentionGrads::ref() {
  return {{wq.data(), bq.data()}, {wk.data(), bk.data()}, {wv.data(), bv.data()}};
}

AttentionOutput attend(std::span<const double> q, const EmbeddingMatrix& keys, const EmbeddingMatrix& values,
                       const AttentionParams& params) {
  if (keys.rows != values.rows)
    throw InvalidInput("attend: key rows (" + std::to_string(keys.rows) + ") != value rows (" +
                       std::to_string(values.rows) + ")");
  if (keys.rows < 1) throw InvalidInput("attend: empty key/value matrix");
  check_dims(params, static_cast<int>(q.size()), keys.cols, values.cols);
  AttentionOutput out;
  out.output.resize(params.output_dim);
  AttendCache<double> cache;
  attend_forward(params.ref(), q.data(), keys.data.data(), values.data.data(), keys.rows, out.output.data(), cache);
  out.alpha = cache.alpha;
  return out;
}

AttentionOutput pool_sequence(const EmbeddingMatrix& z, const AttentionParams& params) {
  if (z.rows < 1) throw InvalidInput("pool_sequence: empty embedding matrix");
  return attend(mean_pool(z), z, z, params);
}

SpatioTemporalAttention spatio_temporal_attend(std::span<const double> z_a, const EmbeddingMatrix& z_vl, int grid,
                                               const AttentionParams& params) {
  if (grid < 1) throw InvalidInput("spatio_temporal_attend: grid must be >= 1");
  const int cells = grid * grid;
  if (z_vl.rows < 1 || z_vl.rows % cells != 0)
    throw InvalidInput("spatio_temporal_attend: " + std::to_string(z_vl.rows) + " rows is not a multiple of grid^2 = " +
                       std::to_string(cells));
  AttentionOutput a = attend(z_a, z_vl, z_vl, params);
  SpatioTemporalAttention out;
  out.output = std::move(a.output);
  out.alpha = std::move(a.alpha);
  out.frames = z_vl.rows / cells;
  out.grid = grid;
  return out;
}

std::vector<double> mean_pool(const EmbeddingMatrix& z) {
  if (z.rows < 1) throw InvalidInput("mean_pool: empty embedding matrix");
  std::vector<double> out(z.cols);
  mean_pool_forward(z.data.data(), z.rows, z.cols, out.data());
  return out;
}

}  // namespace mixitkit

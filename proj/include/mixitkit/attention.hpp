#pragma once

#include <span>
#include <vector>

#include "mixitkit/rng.hpp"

namespace mixitkit {

/// Row-major matrix; one embedding per row.
template <typename Real>
struct MatrixT {
  int rows = 0;
  int cols = 0;
  std::vector<Real> data;

  MatrixT() = default;
  MatrixT(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, Real(0)) {}
  MatrixT(int r, int c, std::vector<Real> d) : rows(r), cols(c), data(std::move(d)) {}

  Real& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  Real at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
  std::span<const Real> row(int r) const { return {data.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)}; }
};

using EmbeddingMatrix = MatrixT<double>;

/// Non-owning view of a dense layer y = x W + b with W stored in x out.
template <typename Real>
struct DenseRef {
  const Real* w = nullptr;
  const Real* b = nullptr;
  int in = 0;
  int out = 0;
};

template <typename Real>
struct DenseGradRef {
  Real* w = nullptr;
  Real* b = nullptr;
};

/// f_q, f_K (into the hidden space) and f_V (into the output space).
template <typename Real>
struct AttentionRef {
  DenseRef<Real> q, k, v;
  int hidden() const { return q.out; }
  int output() const { return v.out; }
};

template <typename Real>
struct AttentionGradRef {
  DenseGradRef<Real> q, k, v;
};

/// Intermediates of one attend() call.
template <typename Real>
struct AttendCache {
  int rows = 0;
  std::vector<Real> tq;     // tanh(f_q(q)), hidden
  std::vector<Real> tk;     // tanh(f_K(K)), rows x hidden
  std::vector<Real> vh;     // f_V(V), rows x output
  std::vector<Real> alpha;  // rows
};

/// alpha = softmax(tanh(f_K(K)) tanh(f_q(q))^T), out = alpha^T f_V(V).
template <typename Real>
void attend_forward(const AttentionRef<Real>& p, const Real* q, const Real* keys, const Real* values, int rows,
                    Real* out, AttendCache<Real>& cache);

/// Accumulates gradients for q, K, V (any may be null; K and V may alias) and
/// for the layer parameters (null pointers skipped).
template <typename Real>
void attend_backward(const AttentionRef<Real>& p, const Real* q, const Real* keys, const Real* values, int rows,
                     const AttendCache<Real>& cache, const Real* dout, Real* dq, Real* dkeys, Real* dvalues,
                     const AttentionGradRef<Real>& grads);

/// attend(mean row of Z, Z, Z); `query` receives the mean row.
template <typename Real>
void pool_forward(const AttentionRef<Real>& p, const Real* z, int rows, Real* out, std::vector<Real>& query,
                  AttendCache<Real>& cache);
template <typename Real>
void pool_backward(const AttentionRef<Real>& p, const Real* z, int rows, const std::vector<Real>& query,
                   const AttendCache<Real>& cache, const Real* dout, Real* dz, const AttentionGradRef<Real>& grads);

/// Owning float64 attention parameters.
struct AttentionParams {
  int query_dim = 0;
  int key_dim = 0;
  int value_dim = 0;
  int hidden_dim = 0;
  int output_dim = 0;
  std::vector<double> wq, bq, wk, bk, wv, bv;

  /// Uniform +-1/sqrt(fan_in) weights and biases.
  static AttentionParams init(int query_dim, int key_dim, int value_dim, int hidden_dim, int output_dim, Rng& rng);
  AttentionRef<double> ref() const;
};

struct AttentionGrads {
  std::vector<double> wq, bq, wk, bk, wv, bv;
  explicit AttentionGrads(const AttentionParams& p);
  AttentionGradRef<double> ref();
};

struct AttentionOutput {
  std::vector<double> output;
  std::vector<double> alpha;
};

AttentionOutput attend(std::span<const double> q, const EmbeddingMatrix& keys, const EmbeddingMatrix& values,
                       const AttentionParams& params);

AttentionOutput pool_sequence(const EmbeddingMatrix& z, const AttentionParams& params);

/// Audio-queried attention over a flattened (frames x grid x grid) local map.
struct SpatioTemporalAttention {
  std::vector<double> output;
  std::vector<double> alpha;  // frames x grid x grid
  int frames = 0;
  int grid = 0;
};

SpatioTemporalAttention spatio_temporal_attend(std::span<const double> z_a, const EmbeddingMatrix& z_vl, int grid,
                                               const AttentionParams& params);

std::vector<double> mean_pool(const EmbeddingMatrix& z);

template <typename Real>
void mean_pool_forward(const Real* z, int rows, int cols, Real* out);
template <typename Real>
void mean_pool_backward(int rows, int cols, const Real* dout, Real* dz);

}  // namespace mixitkit

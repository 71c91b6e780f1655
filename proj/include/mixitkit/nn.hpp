#pragma once

#include <cstddef>

namespace mixitkit::nn {

// Row-major conventions used by every kernel:
//   dense:  X is R x in, W is in x out, Y is R x out.
//   conv2d: images are H x W x C (channel fastest), weights Cout x 3 x 3 x Cin.
//   conv1d sequences are F x C (channel fastest).
// Backward kernels accumulate into their gradient outputs; null outputs are skipped.

/// Whether the dispatching kernels may open OpenMP regions. Kernels never
/// nest: inside an active parallel region they run serially.
void set_parallel_kernels(bool enabled);
bool parallel_kernels_enabled();

template <typename Real>
void dense_forward_serial(const Real* x, int rows, int in, const Real* w, const Real* b, int out, Real* y);
template <typename Real>
void dense_forward_omp(const Real* x, int rows, int in, const Real* w, const Real* b, int out, Real* y);
template <typename Real>
void dense_forward(const Real* x, int rows, int in, const Real* w, const Real* b, int out, Real* y);

template <typename Real>
void dense_backward_serial(const Real* x, int rows, int in, const Real* w, int out, const Real* dy, Real* dx,
                           Real* dw, Real* db);
template <typename Real>
void dense_backward_omp(const Real* x, int rows, int in, const Real* w, int out, const Real* dy, Real* dx,
                        Real* dw, Real* db);
template <typename Real>
void dense_backward(const Real* x, int rows, int in, const Real* w, int out, const Real* dy, Real* dx, Real* dw,
                    Real* db);

/// 3x3 convolution with zero padding 1.
struct Conv2dShape {
  int height, width, in_channels, out_channels, stride;
  int out_height() const { return (height - 1) / stride + 1; }
  int out_width() const { return (width - 1) / stride + 1; }
};

template <typename Real>
void conv2d_forward_serial(const Conv2dShape& s, const Real* x, const Real* w, const Real* b, Real* y);
template <typename Real>
void conv2d_forward_omp(const Conv2dShape& s, const Real* x, const Real* w, const Real* b, Real* y);
template <typename Real>
void conv2d_forward(const Conv2dShape& s, const Real* x, const Real* w, const Real* b, Real* y);

template <typename Real>
void conv2d_backward_serial(const Conv2dShape& s, const Real* x, const Real* w, const Real* dy, Real* dx, Real* dw,
                            Real* db);
template <typename Real>
void conv2d_backward_omp(const Conv2dShape& s, const Real* x, const Real* w, const Real* dy, Real* dx, Real* dw,
                         Real* db);
template <typename Real>
void conv2d_backward(const Conv2dShape& s, const Real* x, const Real* w, const Real* dy, Real* dx, Real* dw,
                     Real* db);

/// Depthwise dilated conv over time, kernel 3, 'same' zero padding.
template <typename Real>
void depthwise_forward(const Real* x, int frames, int channels, const Real* w, const Real* b, int dilation, Real* y);
template <typename Real>
void depthwise_backward(const Real* x, int frames, int channels, const Real* w, int dilation, const Real* dy,
                        Real* dx, Real* dw, Real* db);

/// PReLU with one shared slope.
template <typename Real>
void prelu_forward(const Real* x, std::size_t n, Real slope, Real* y);
template <typename Real>
void prelu_backward(const Real* x, std::size_t n, Real slope, const Real* dy, Real* dx, Real* dslope);

/// Per-channel normalisation over the frame axis with learned gain and bias.
/// `xhat` and `inv_std` (length channels) are saved for the backward pass.
constexpr double kInstanceNormEps = 1e-5;
template <typename Real>
void instance_norm_forward(const Real* x, int frames, int channels, const Real* gain, const Real* bias, Real* y,
                           Real* xhat, Real* inv_std);
template <typename Real>
void instance_norm_backward(const Real* xhat, const Real* inv_std, int frames, int channels, const Real* gain,
                            const Real* dy, Real* dx, Real* dgain, Real* dbias);

template <typename Real>
Real sigmoid(Real v);

}  // namespace mixitkit::nn

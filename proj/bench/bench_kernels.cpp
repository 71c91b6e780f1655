// Serial vs OpenMP kernels. On a single core the OpenMP variants only show
// their scheduling overhead; run with more cores to see the speed-up.

#include <benchmark/benchmark.h>

#include <vector>

#include "mixitkit/mixit.hpp"
#include "mixitkit/nn.hpp"
#include "mixitkit/rng.hpp"
#include "mixitkit/synth.hpp"
#include "mixitkit/training.hpp"

using namespace mixitkit;

namespace {

std::vector<double> randn(std::size_t n, uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

// Args: rows (frames), in, out.
template <bool kOmp>
void BM_DenseForward(benchmark::State& st) {
  const int rows = static_cast<int>(st.range(0)), in = static_cast<int>(st.range(1)),
            out = static_cast<int>(st.range(2));
  const auto x = randn(static_cast<std::size_t>(rows) * in, 1), w = randn(static_cast<std::size_t>(in) * out, 2),
             b = randn(out, 3);
  std::vector<double> y(static_cast<std::size_t>(rows) * out);
  for (auto _ : st) {
    if constexpr (kOmp)
      nn::dense_forward_omp(x.data(), rows, in, w.data(), b.data(), out, y.data());
    else
      nn::dense_forward_serial(x.data(), rows, in, w.data(), b.data(), out, y.data());
    benchmark::DoNotOptimize(y.data());
  }
  st.SetItemsProcessed(st.iterations() * rows * in * out);
}

template <bool kOmp>
void BM_DenseBackward(benchmark::State& st) {
  const int rows = static_cast<int>(st.range(0)), in = static_cast<int>(st.range(1)),
            out = static_cast<int>(st.range(2));
  const auto x = randn(static_cast<std::size_t>(rows) * in, 1), w = randn(static_cast<std::size_t>(in) * out, 2),
             dy = randn(static_cast<std::size_t>(rows) * out, 3);
  std::vector<double> dx(x.size()), dw(w.size()), db(out);
  for (auto _ : st) {
    if constexpr (kOmp)
      nn::dense_backward_omp(x.data(), rows, in, w.data(), out, dy.data(), dx.data(), dw.data(), db.data());
    else
      nn::dense_backward_serial(x.data(), rows, in, w.data(), out, dy.data(), dx.data(), dw.data(), db.data());
    benchmark::DoNotOptimize(dw.data());
  }
  st.SetItemsProcessed(st.iterations() * 2 * rows * in * out);
}

// Args: grid, in channels, out channels.
template <bool kOmp>
void BM_Conv2dForward(benchmark::State& st) {
  const nn::Conv2dShape s{static_cast<int>(st.range(0)), static_cast<int>(st.range(0)), static_cast<int>(st.range(1)),
                          static_cast<int>(st.range(2)), 1};
  const auto x = randn(static_cast<std::size_t>(s.height) * s.width * s.in_channels, 1);
  const auto w = randn(static_cast<std::size_t>(s.out_channels) * 9 * s.in_channels, 2);
  const auto b = randn(s.out_channels, 3);
  std::vector<double> y(static_cast<std::size_t>(s.out_height()) * s.out_width() * s.out_channels);
  for (auto _ : st) {
    if constexpr (kOmp)
      nn::conv2d_forward_omp(s, x.data(), w.data(), b.data(), y.data());
    else
      nn::conv2d_forward_serial(s, x.data(), w.data(), b.data(), y.data());
    benchmark::DoNotOptimize(y.data());
  }
}

// Args: M, T.
template <bool kOmp>
void BM_MixitAssignments(benchmark::State& st) {
  const int m = static_cast<int>(st.range(0));
  const std::size_t t = static_cast<std::size_t>(st.range(1));
  const auto x1 = randn(t, 1), x2 = randn(t, 2), s = randn(m * t, 3);
  for (auto _ : st) {
    auto l = kOmp ? mixit_assignment_losses_omp(x1, x2, s, m) : mixit_assignment_losses_serial(x1, x2, s, m);
    benchmark::DoNotOptimize(l.data());
  }
  st.SetItemsProcessed(st.iterations() * (int64_t{1} << m));
}

// One minibatch gradient of the default toy model; Arg: clip samples.
template <bool kOmp>
void BM_BatchLossGrad(benchmark::State& st) {
  ModelConfig mc;
  SynthConfig sc;
  mc.num_samples = sc.num_samples = static_cast<int>(st.range(0));
  const ModelT<float> model(mc);
  const auto params = to_float(initial_params(mc, model.layout(), 1));
  Rng rng(7);
  const auto batch = compose_minibatch(rng, MinibatchSpec{}, sc);
  const LossConfig loss;
  for (auto _ : st) {
    auto r = kOmp ? batch_loss_grad_omp<float>(model, params, batch, loss)
                  : batch_loss_grad_serial<float>(model, params, batch, loss);
    benchmark::DoNotOptimize(r.grad.data());
  }
  st.SetItemsProcessed(st.iterations() * static_cast<int64_t>(batch.size()));
}

}  // namespace

BENCHMARK(BM_DenseForward<false>)->Args({2000, 32, 32})->Args({500, 128, 64});
BENCHMARK(BM_DenseForward<true>)->Args({2000, 32, 32})->Args({500, 128, 64});
BENCHMARK(BM_DenseBackward<false>)->Args({2000, 32, 32})->Args({500, 128, 64});
BENCHMARK(BM_DenseBackward<true>)->Args({2000, 32, 32})->Args({500, 128, 64});
BENCHMARK(BM_Conv2dForward<false>)->Args({32, 8, 16})->Args({8, 16, 16});
BENCHMARK(BM_Conv2dForward<true>)->Args({32, 8, 16})->Args({8, 16, 16});
BENCHMARK(BM_MixitAssignments<false>)->Args({4, 16000})->Args({8, 16000});
BENCHMARK(BM_MixitAssignments<true>)->Args({4, 16000})->Args({8, 16000});
BENCHMARK(BM_BatchLossGrad<false>)->Arg(8000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BatchLossGrad<true>)->Arg(8000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();

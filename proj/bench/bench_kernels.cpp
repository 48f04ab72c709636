// Serial reference kernels against their OpenMP versions.
//   bench_kernels --benchmark_filter=conv

#include <benchmark/benchmark.h>

#include <random>

#include "qwgan/kernels.hpp"

using namespace qwgan;
namespace ks = qwgan::kernels;

namespace {

QTensor random_tensor(Shape s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  QTensor t(std::move(s));
  for (auto& a : t.c)
    for (double& v : a) v = n(rng);
  return t;
}

template <auto Fn>
void BM_qlinear_forward(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  const QTensor W = random_tensor({n, n}, 1), x = random_tensor({64, n}, 2);
  QTensor y;
  for (auto _ : st) {
    Fn(W, x, y);
    benchmark::DoNotOptimize(y.c[0].data());
  }
  st.SetItemsProcessed(st.iterations() * 64 * static_cast<std::int64_t>(n * n));
}

template <auto Fn>
void BM_qlinear_backward(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  const QTensor W = random_tensor({n, n}, 1), x = random_tensor({64, n}, 2), dy = random_tensor({64, n}, 3);
  QTensor dx({64, n}), dW({n, n});
  for (auto _ : st) {
    Fn(W, x, dy, &dx, &dW);
    benchmark::DoNotOptimize(dW.c[0].data());
  }
}

// Swatch-sized images: 16 x 16 pixels, batch 16.
constexpr std::size_t kB = 16, kH = 16;

template <auto Fn>
void BM_conv_apply(benchmark::State& st) {
  const auto c = static_cast<std::size_t>(st.range(0));
  const ks::ConvGeom g{4, 2, 1};
  const std::size_t ho = ks::conv_out(kH, g);
  const QTensor K = random_tensor({c, c, 4, 4}, 1), x = random_tensor({kB, c, kH, kH}, 2);
  QTensor y({kB, c, ho, ho});
  for (auto _ : st) {
    Fn(K, x, g, y);
    benchmark::DoNotOptimize(y.c[0].data());
  }
}

template <auto Fn>
void BM_conv_adjoint(benchmark::State& st) {
  const auto c = static_cast<std::size_t>(st.range(0));
  const ks::ConvGeom g{4, 2, 1};
  const std::size_t ho = ks::conv_out(kH, g);
  const QTensor K = random_tensor({c, c, 4, 4}, 1), y = random_tensor({kB, c, ho, ho}, 2);
  QTensor x({kB, c, kH, kH});
  for (auto _ : st) {
    Fn(K, y, g, x);
    benchmark::DoNotOptimize(x.c[0].data());
  }
}

template <auto Fn>
void BM_conv_weight_grad(benchmark::State& st) {
  const auto c = static_cast<std::size_t>(st.range(0));
  const ks::ConvGeom g{4, 2, 1};
  const std::size_t ho = ks::conv_out(kH, g);
  const QTensor x = random_tensor({kB, c, kH, kH}, 1), dy = random_tensor({kB, c, ho, ho}, 2);
  QTensor dK({c, c, 4, 4});
  for (auto _ : st) {
    Fn(x, dy, g, dK);
    benchmark::DoNotOptimize(dK.c[0].data());
  }
}

}  // namespace

BENCHMARK(BM_qlinear_forward<ks::serial::qlinear_forward>)->Name("qlinear_forward/serial")->Arg(16)->Arg(64)->Arg(256);
BENCHMARK(BM_qlinear_forward<ks::parallel::qlinear_forward>)->Name("qlinear_forward/parallel")->Arg(16)->Arg(64)->Arg(256);
BENCHMARK(BM_qlinear_backward<ks::serial::qlinear_backward>)->Name("qlinear_backward/serial")->Arg(16)->Arg(64)->Arg(256);
BENCHMARK(BM_qlinear_backward<ks::parallel::qlinear_backward>)->Name("qlinear_backward/parallel")->Arg(16)->Arg(64)->Arg(256);
BENCHMARK(BM_conv_apply<ks::serial::conv_apply>)->Name("conv_apply/serial")->Arg(2)->Arg(8);
BENCHMARK(BM_conv_apply<ks::parallel::conv_apply>)->Name("conv_apply/parallel")->Arg(2)->Arg(8);
BENCHMARK(BM_conv_adjoint<ks::serial::conv_apply_adjoint>)->Name("conv_adjoint/serial")->Arg(2)->Arg(8);
BENCHMARK(BM_conv_adjoint<ks::parallel::conv_apply_adjoint>)->Name("conv_adjoint/parallel")->Arg(2)->Arg(8);
BENCHMARK(BM_conv_weight_grad<ks::serial::conv_weight_grad>)->Name("conv_weight_grad/serial")->Arg(2)->Arg(8);
BENCHMARK(BM_conv_weight_grad<ks::parallel::conv_weight_grad>)->Name("conv_weight_grad/parallel")->Arg(2)->Arg(8);

BENCHMARK_MAIN();

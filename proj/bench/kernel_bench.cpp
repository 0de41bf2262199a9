// Serial reference kernels against the OpenMP kernels on GAT-layer shapes:
// N nodes on a 2-D grid (4 neighbours plus a self loop), 64 channels,
// 4 heads of 16.

#include <benchmark/benchmark.h>

#include <cstddef>
#include <utility>
#include <vector>

#include "meshtime/common.hpp"
#include "meshtime/kernels.hpp"

namespace {

using namespace meshtime;

constexpr std::size_t kWidth = 64, kHeads = 4, kDim = 16;

struct Serial {
  template <typename T, typename... A>
  static void gemm_nn(A... a) { kernels::serial::gemm_nn<T>(a...); }
  template <typename T, typename... A>
  static void gemm_tn(A... a) { kernels::serial::gemm_tn<T>(a...); }
  template <typename T, typename... A>
  static void head_dot(A... a) { kernels::serial::head_dot<T>(a...); }
  template <typename T>
  static void softmax(const std::vector<std::size_t>& o, std::size_t c, const T* in, T* out) {
    kernels::serial::segment_softmax<T>(o, c, in, out);
  }
  template <typename T>
  static void aggregate(const kernels::EdgeIndex& ix, const T* alpha, const T* x, T* out) {
    kernels::serial::attention_aggregate<T>(ix, kHeads, kDim, alpha, x, out);
  }
  template <typename T>
  static void aggregate_backward(const kernels::EdgeIndex& ix, const T* alpha, const T* x, const T* dout, T* da,
                                 T* dx) {
    kernels::serial::attention_aggregate_backward<T>(ix, kHeads, kDim, alpha, x, dout, da, dx);
  }
};

struct Omp {
  template <typename T, typename... A>
  static void gemm_nn(A... a) { kernels::omp::gemm_nn<T>(a...); }
  template <typename T, typename... A>
  static void gemm_tn(A... a) { kernels::omp::gemm_tn<T>(a...); }
  template <typename T, typename... A>
  static void head_dot(A... a) { kernels::omp::head_dot<T>(a...); }
  template <typename T>
  static void softmax(const std::vector<std::size_t>& o, std::size_t c, const T* in, T* out) {
    kernels::omp::segment_softmax<T>(o, c, in, out);
  }
  template <typename T>
  static void aggregate(const kernels::EdgeIndex& ix, const T* alpha, const T* x, T* out) {
    kernels::omp::attention_aggregate<T>(ix, kHeads, kDim, alpha, x, out);
  }
  template <typename T>
  static void aggregate_backward(const kernels::EdgeIndex& ix, const T* alpha, const T* x, const T* dout, T* da,
                                 T* dx) {
    kernels::omp::attention_aggregate_backward<T>(ix, kHeads, kDim, alpha, x, dout, da, dx);
  }
};

template <typename T>
std::vector<T> random_values(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(rng.uniform(-1.0, 1.0));
  return v;
}

kernels::EdgeIndex grid_edges(std::size_t n) {
  std::size_t side = 1;
  while (side * side < n) ++side;
  std::vector<std::pair<int, int>> pairs;
  for (std::size_t i = 0; i < n; ++i) {
    const int v = static_cast<int>(i);
    pairs.emplace_back(v, v);
    const std::size_t x = i % side;
    if (x + 1 < side && i + 1 < n) {
      pairs.emplace_back(v, v + 1);
      pairs.emplace_back(v + 1, v);
    }
    if (i + side < n) {
      pairs.emplace_back(v, static_cast<int>(i + side));
      pairs.emplace_back(static_cast<int>(i + side), v);
    }
  }
  return kernels::EdgeIndex::from_pairs(n, std::move(pairs));
}

template <typename K, typename T>
void BM_gemm_nn(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  const auto x = random_values<T>(n * kWidth, 1), w = random_values<T>(kWidth * kWidth, 2);
  std::vector<T> out(n * kWidth);
  for (auto _ : st) {
    K::template gemm_nn<T>(n, kWidth, kWidth, x.data(), w.data(), out.data());
    benchmark::DoNotOptimize(out.data());
  }
  st.SetItemsProcessed(static_cast<int64_t>(st.iterations() * n));
}

template <typename K, typename T>
void BM_gemm_tn(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  const auto x = random_values<T>(n * kWidth, 1), g = random_values<T>(n * kWidth, 2);
  std::vector<T> out(kWidth * kWidth);
  for (auto _ : st) {
    K::template gemm_tn<T>(kWidth, n, kWidth, x.data(), g.data(), out.data());
    benchmark::DoNotOptimize(out.data());
  }
  st.SetItemsProcessed(static_cast<int64_t>(st.iterations() * n));
}

template <typename K, typename T>
void BM_head_dot(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  const auto x = random_values<T>(n * kWidth, 1), a = random_values<T>(kWidth, 2);
  std::vector<T> out(n * kHeads);
  for (auto _ : st) {
    K::template head_dot<T>(n, kHeads, kDim, x.data(), a.data(), out.data());
    benchmark::DoNotOptimize(out.data());
  }
  st.SetItemsProcessed(static_cast<int64_t>(st.iterations() * n));
}

template <typename K, typename T>
void BM_segment_softmax(benchmark::State& st) {
  const auto ix = grid_edges(static_cast<std::size_t>(st.range(0)));
  const auto e = random_values<T>(ix.num_edges() * kHeads, 1);
  std::vector<T> out(e.size());
  for (auto _ : st) {
    K::template softmax<T>(ix.dst_offsets, kHeads, e.data(), out.data());
    benchmark::DoNotOptimize(out.data());
  }
  st.SetItemsProcessed(static_cast<int64_t>(st.iterations() * ix.num_edges()));
}

template <typename K, typename T>
void BM_attention_aggregate(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  const auto ix = grid_edges(n);
  const auto alpha = random_values<T>(ix.num_edges() * kHeads, 1), x = random_values<T>(n * kWidth, 2);
  std::vector<T> out(n * kWidth);
  for (auto _ : st) {
    K::template aggregate<T>(ix, alpha.data(), x.data(), out.data());
    benchmark::DoNotOptimize(out.data());
  }
  st.SetItemsProcessed(static_cast<int64_t>(st.iterations() * ix.num_edges()));
}

template <typename K, typename T>
void BM_attention_aggregate_backward(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  const auto ix = grid_edges(n);
  const auto alpha = random_values<T>(ix.num_edges() * kHeads, 1), x = random_values<T>(n * kWidth, 2);
  const auto dout = random_values<T>(n * kWidth, 3);
  std::vector<T> da(alpha.size()), dx(x.size());
  for (auto _ : st) {
    K::template aggregate_backward<T>(ix, alpha.data(), x.data(), dout.data(), da.data(), dx.data());
    benchmark::DoNotOptimize(dx.data());
  }
  st.SetItemsProcessed(static_cast<int64_t>(st.iterations() * ix.num_edges()));
}

#define MESHTIME_KERNEL_BENCH(fn)                                                                  \
  BENCHMARK_TEMPLATE(fn, Serial, double)->RangeMultiplier(8)->Range(512, 32768);                  \
  BENCHMARK_TEMPLATE(fn, Omp, double)->RangeMultiplier(8)->Range(512, 32768);                     \
  BENCHMARK_TEMPLATE(fn, Serial, float)->RangeMultiplier(8)->Range(512, 32768);                   \
  BENCHMARK_TEMPLATE(fn, Omp, float)->RangeMultiplier(8)->Range(512, 32768)

MESHTIME_KERNEL_BENCH(BM_gemm_nn);
MESHTIME_KERNEL_BENCH(BM_gemm_tn);
MESHTIME_KERNEL_BENCH(BM_head_dot);
MESHTIME_KERNEL_BENCH(BM_segment_softmax);
MESHTIME_KERNEL_BENCH(BM_attention_aggregate);
MESHTIME_KERNEL_BENCH(BM_attention_aggregate_backward);

}  // namespace

BENCHMARK_MAIN();

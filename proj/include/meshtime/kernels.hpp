#pragma once

// Dense and segment kernels behind the autodiff engine and the inference
// path. Two implementations with identical signatures:
//
//   kernels::serial  plain reference loops, kept for testing
//   kernels::omp     OpenMP-parallel, cache-friendlier loop orders
//
// All matrices are row-major. The OpenMP versions only partition over
// output rows and keep a fixed reduction order inside each row, so results
// do not depend on the thread count.

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace meshtime::kernels {

// Edges grouped by destination (CSR) plus a by-source view for the
// scatter-free backward pass.
struct EdgeIndex {
  std::size_t num_nodes = 0;
  std::vector<int> src;                  // per edge, edges sorted by dst
  std::vector<int> dst;                  // per edge
  std::vector<std::size_t> dst_offsets;  // num_nodes + 1
  std::vector<std::size_t> src_offsets;  // num_nodes + 1
  std::vector<int> by_src;               // edge ids grouped by src, ascending

  std::size_t num_edges() const { return src.size(); }

  // `pairs` are directed (src, dst). Sorted by (dst, src) on construction.
  static EdgeIndex from_pairs(std::size_t num_nodes, std::vector<std::pair<int, int>> pairs);
};

inline EdgeIndex EdgeIndex::from_pairs(std::size_t num_nodes, std::vector<std::pair<int, int>> pairs) {
  std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second < b.second : a.first < b.first;
  });
  EdgeIndex ix;
  ix.num_nodes = num_nodes;
  ix.dst_offsets.assign(num_nodes + 1, 0);
  ix.src_offsets.assign(num_nodes + 1, 0);
  for (const auto& [s, d] : pairs) {
    ix.src.push_back(s);
    ix.dst.push_back(d);
    ++ix.dst_offsets[d + 1];
    ++ix.src_offsets[s + 1];
  }
  for (std::size_t i = 0; i < num_nodes; ++i) {
    ix.dst_offsets[i + 1] += ix.dst_offsets[i];
    ix.src_offsets[i + 1] += ix.src_offsets[i];
  }
  ix.by_src.resize(pairs.size());
  std::vector<std::size_t> fill(ix.src_offsets.begin(), ix.src_offsets.end() - 1);
  for (std::size_t e = 0; e < pairs.size(); ++e) ix.by_src[fill[ix.src[e]]++] = static_cast<int>(e);
  return ix;
}

namespace serial {

// C[m x n] = A[m x k] * B[k x n]
template <typename T>
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const T* A, const T* B, T* C) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T s = 0;
      for (std::size_t p = 0; p < k; ++p) s += A[i * k + p] * B[p * n + j];
      C[i * n + j] = s;
    }
  }
}

// C[m x n] = A^T * B, A is [k x m], B is [k x n]
template <typename T>
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const T* A, const T* B, T* C) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T s = 0;
      for (std::size_t p = 0; p < k; ++p) s += A[p * m + i] * B[p * n + j];
      C[i * n + j] = s;
    }
  }
}

// C[m x n] = A * B^T, A is [m x k], B is [n x k]
template <typename T>
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const T* A, const T* B, T* C) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T s = 0;
      for (std::size_t p = 0; p < k; ++p) s += A[i * k + p] * B[j * k + p];
      C[i * n + j] = s;
    }
  }
}

// out[i, h] = sum_d X[i, h*dim + d] * a[h, d]
template <typename T>
void head_dot(std::size_t rows, std::size_t heads, std::size_t dim, const T* X, const T* a, T* out) {
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t h = 0; h < heads; ++h) {
      T s = 0;
      for (std::size_t d = 0; d < dim; ++d) s += X[i * heads * dim + h * dim + d] * a[h * dim + d];
      out[i * heads + h] = s;
    }
  }
}

// Column-wise softmax within each row segment [offsets[s], offsets[s+1]).
template <typename T>
void segment_softmax(const std::vector<std::size_t>& offsets, std::size_t cols, const T* in, T* out) {
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
    for (std::size_t c = 0; c < cols; ++c) {
      T mx = -INFINITY;
      for (std::size_t r = offsets[s]; r < offsets[s + 1]; ++r) mx = std::max(mx, in[r * cols + c]);
      T sum = 0;
      for (std::size_t r = offsets[s]; r < offsets[s + 1]; ++r) {
        out[r * cols + c] = std::exp(in[r * cols + c] - mx);
        sum += out[r * cols + c];
      }
      for (std::size_t r = offsets[s]; r < offsets[s + 1]; ++r) out[r * cols + c] /= sum;
    }
  }
}

// dx = y * (dy - sum_seg(y * dy))
template <typename T>
void segment_softmax_backward(const std::vector<std::size_t>& offsets, std::size_t cols, const T* y,
                              const T* dy, T* dx) {
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
    for (std::size_t c = 0; c < cols; ++c) {
      T dot = 0;
      for (std::size_t r = offsets[s]; r < offsets[s + 1]; ++r) dot += y[r * cols + c] * dy[r * cols + c];
      for (std::size_t r = offsets[s]; r < offsets[s + 1]; ++r) {
        dx[r * cols + c] += y[r * cols + c] * (dy[r * cols + c] - dot);
      }
    }
  }
}

template <typename T>
void segment_sum(const std::vector<std::size_t>& offsets, std::size_t cols, const T* in, T* out) {
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
    for (std::size_t c = 0; c < cols; ++c) {
      T acc = 0;
      for (std::size_t r = offsets[s]; r < offsets[s + 1]; ++r) acc += in[r * cols + c];
      out[s * cols + c] = acc;
    }
  }
}

// out[d, h*dim + j] = sum_{e into d} alpha[e, h] * X[src[e], h*dim + j]
template <typename T>
void attention_aggregate(const EdgeIndex& ix, std::size_t heads, std::size_t dim, const T* alpha, const T* X,
                         T* out) {
  const std::size_t width = heads * dim;
  std::fill(out, out + ix.num_nodes * width, T(0));
  for (std::size_t e = 0; e < ix.num_edges(); ++e) {
    const std::size_t s = ix.src[e], d = ix.dst[e];
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t j = 0; j < dim; ++j) {
        out[d * width + h * dim + j] += alpha[e * heads + h] * X[s * width + h * dim + j];
      }
    }
  }
}

// Accumulates into dalpha and dX.
template <typename T>
void attention_aggregate_backward(const EdgeIndex& ix, std::size_t heads, std::size_t dim, const T* alpha,
                                  const T* X, const T* dout, T* dalpha, T* dX) {
  const std::size_t width = heads * dim;
  for (std::size_t e = 0; e < ix.num_edges(); ++e) {
    const std::size_t s = ix.src[e], d = ix.dst[e];
    for (std::size_t h = 0; h < heads; ++h) {
      T acc = 0;
      for (std::size_t j = 0; j < dim; ++j) {
        acc += dout[d * width + h * dim + j] * X[s * width + h * dim + j];
        dX[s * width + h * dim + j] += alpha[e * heads + h] * dout[d * width + h * dim + j];
      }
      dalpha[e * heads + h] += acc;
    }
  }
}

}  // namespace serial

namespace omp {

namespace detail {

inline constexpr std::size_t kTileRows = 4;
template <typename T>
inline constexpr std::size_t kTileCols = 128 / sizeof(T);

// C[MR x NR] (=|+=) sum_p A(r, p) * B[p, 0..NR), A(r, p) = A[r*a_rs + p*a_ps].
// Accumulators stay in registers across the whole p loop.
template <typename T, std::size_t MR, std::size_t NR>
inline void tile(std::size_t k, const T* A, std::size_t a_rs, std::size_t a_ps, const T* B, std::size_t ldb, T* C,
                 std::size_t ldc, bool accumulate) {
  T acc[MR][NR];
  for (std::size_t r = 0; r < MR; ++r) {
    for (std::size_t j = 0; j < NR; ++j) acc[r][j] = accumulate ? C[r * ldc + j] : T(0);
  }
  for (std::size_t p = 0; p < k; ++p) {
    const T* b = B + p * ldb;
    for (std::size_t r = 0; r < MR; ++r) {
      const T a = A[r * a_rs + p * a_ps];
#pragma omp simd
      for (std::size_t j = 0; j < NR; ++j) acc[r][j] += a * b[j];
    }
  }
  for (std::size_t r = 0; r < MR; ++r) {
    for (std::size_t j = 0; j < NR; ++j) C[r * ldc + j] = acc[r][j];
  }
}

// Scalar fallback for the ragged edges, same summation order.
template <typename T>
inline void edge(std::size_t k, std::size_t rows, std::size_t cols, const T* A, std::size_t a_rs, std::size_t a_ps,
                 const T* B, std::size_t ldb, T* C, std::size_t ldc, bool accumulate) {
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < cols; ++j) {
      T s = accumulate ? C[r * ldc + j] : T(0);
      for (std::size_t p = 0; p < k; ++p) s += A[r * a_rs + p * a_ps] * B[p * ldb + j];
      C[r * ldc + j] = s;
    }
  }
}

// One band of kTileRows output rows (or fewer at the bottom edge).
template <typename T>
inline void band(std::size_t rows, std::size_t k, std::size_t n, const T* A, std::size_t a_rs, std::size_t a_ps,
                 const T* B, T* C, bool accumulate) {
  constexpr std::size_t MR = kTileRows, NR = kTileCols<T>;
  std::size_t j = 0;
  if (rows == MR) {
    for (; j + NR <= n; j += NR) tile<T, MR, NR>(k, A, a_rs, a_ps, B + j, n, C + j, n, accumulate);
  }
  if (j < n) edge(k, rows, n - j, A, a_rs, a_ps, B + j, n, C + j, n, accumulate);
}

}  // namespace detail

template <typename T>
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const T* A, const T* B, T* C) {
  constexpr std::size_t MR = detail::kTileRows;
  const auto bands = static_cast<std::ptrdiff_t>((m + MR - 1) / MR);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t t = 0; t < bands; ++t) {
    const std::size_t i = static_cast<std::size_t>(t) * MR;
    detail::band(std::min(MR, m - i), k, n, A + i * k, k, std::size_t(1), B, C + i * n, false);
  }
}

// The long dimension k is walked in chunks so each chunk of B stays in
// cache while every output band consumes it.
template <typename T>
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const T* A, const T* B, T* C) {
  constexpr std::size_t MR = detail::kTileRows, KC = 256;
  const auto bands = static_cast<std::ptrdiff_t>((m + MR - 1) / MR);
  if (k == 0) std::fill(C, C + m * n, T(0));
  for (std::size_t p0 = 0; p0 < k; p0 += KC) {
    const std::size_t kc = std::min(KC, k - p0);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t t = 0; t < bands; ++t) {
      const std::size_t i = static_cast<std::size_t>(t) * MR;
      detail::band(std::min(MR, m - i), kc, n, A + p0 * m + i, std::size_t(1), m, B + p0 * n, C + i * n, p0 > 0);
    }
  }
}

template <typename T>
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const T* A, const T* B, T* C) {
  std::vector<T> bt(k * n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = B[j * k + p];
  }
  gemm_nn(m, k, n, A, bt.data(), C);
}

template <typename T>
void head_dot(std::size_t rows, std::size_t heads, std::size_t dim, const T* X, const T* a, T* out) {
  const auto n = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    for (std::size_t h = 0; h < heads; ++h) {
      const T* x = X + i * heads * dim + h * dim;
      const T* w = a + h * dim;
      T s = 0;
      for (std::size_t d = 0; d < dim; ++d) s += x[d] * w[d];
      out[i * heads + h] = s;
    }
  }
}

template <typename T>
void segment_softmax(const std::vector<std::size_t>& offsets, std::size_t cols, const T* in, T* out) {
  const auto segs = static_cast<std::ptrdiff_t>(offsets.empty() ? 0 : offsets.size() - 1);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t s = 0; s < segs; ++s) {
    const std::size_t lo = offsets[s], hi = offsets[s + 1];
    for (std::size_t c = 0; c < cols; ++c) {
      T mx = -INFINITY;
      for (std::size_t r = lo; r < hi; ++r) mx = std::max(mx, in[r * cols + c]);
      T sum = 0;
      for (std::size_t r = lo; r < hi; ++r) {
        const T v = std::exp(in[r * cols + c] - mx);
        out[r * cols + c] = v;
        sum += v;
      }
      const T inv = T(1) / sum;
      for (std::size_t r = lo; r < hi; ++r) out[r * cols + c] *= inv;
    }
  }
}

template <typename T>
void segment_softmax_backward(const std::vector<std::size_t>& offsets, std::size_t cols, const T* y,
                              const T* dy, T* dx) {
  const auto segs = static_cast<std::ptrdiff_t>(offsets.empty() ? 0 : offsets.size() - 1);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t s = 0; s < segs; ++s) {
    const std::size_t lo = offsets[s], hi = offsets[s + 1];
    for (std::size_t c = 0; c < cols; ++c) {
      T dot = 0;
      for (std::size_t r = lo; r < hi; ++r) dot += y[r * cols + c] * dy[r * cols + c];
      for (std::size_t r = lo; r < hi; ++r) dx[r * cols + c] += y[r * cols + c] * (dy[r * cols + c] - dot);
    }
  }
}

template <typename T>
void segment_sum(const std::vector<std::size_t>& offsets, std::size_t cols, const T* in, T* out) {
  const auto segs = static_cast<std::ptrdiff_t>(offsets.empty() ? 0 : offsets.size() - 1);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t s = 0; s < segs; ++s) {
    T* o = out + s * cols;
    std::fill(o, o + cols, T(0));
    for (std::size_t r = offsets[s]; r < offsets[s + 1]; ++r) {
      const T* row = in + r * cols;
#pragma omp simd
      for (std::size_t c = 0; c < cols; ++c) o[c] += row[c];
    }
  }
}

template <typename T>
void attention_aggregate(const EdgeIndex& ix, std::size_t heads, std::size_t dim, const T* alpha, const T* X,
                         T* out) {
  const std::size_t width = heads * dim;
  const auto nodes = static_cast<std::ptrdiff_t>(ix.num_nodes);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t d = 0; d < nodes; ++d) {
    T* o = out + d * width;
    std::fill(o, o + width, T(0));
    for (std::size_t e = ix.dst_offsets[d]; e < ix.dst_offsets[d + 1]; ++e) {
      const T* x = X + static_cast<std::size_t>(ix.src[e]) * width;
      for (std::size_t h = 0; h < heads; ++h) {
        const T w = alpha[e * heads + h];
#pragma omp simd
        for (std::size_t j = 0; j < dim; ++j) o[h * dim + j] += w * x[h * dim + j];
      }
    }
  }
}

template <typename T>
void attention_aggregate_backward(const EdgeIndex& ix, std::size_t heads, std::size_t dim, const T* alpha,
                                  const T* X, const T* dout, T* dalpha, T* dX) {
  const std::size_t width = heads * dim;
  const auto edges = static_cast<std::ptrdiff_t>(ix.num_edges());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t e = 0; e < edges; ++e) {
    const T* x = X + static_cast<std::size_t>(ix.src[e]) * width;
    const T* g = dout + static_cast<std::size_t>(ix.dst[e]) * width;
    for (std::size_t h = 0; h < heads; ++h) {
      T acc = 0;
      for (std::size_t j = 0; j < dim; ++j) acc += g[h * dim + j] * x[h * dim + j];
      dalpha[e * heads + h] += acc;
    }
  }
  const auto nodes = static_cast<std::ptrdiff_t>(ix.num_nodes);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t s = 0; s < nodes; ++s) {
    T* dx = dX + s * width;
    for (std::size_t q = ix.src_offsets[s]; q < ix.src_offsets[s + 1]; ++q) {
      const auto e = static_cast<std::size_t>(ix.by_src[q]);
      const T* g = dout + static_cast<std::size_t>(ix.dst[e]) * width;
      for (std::size_t h = 0; h < heads; ++h) {
        const T w = alpha[e * heads + h];
#pragma omp simd
        for (std::size_t j = 0; j < dim; ++j) dx[h * dim + j] += w * g[h * dim + j];
      }
    }
  }
}

}  // namespace omp

}  // namespace meshtime::kernels

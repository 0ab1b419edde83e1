#include "m2e/nn/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cstring>
#include <vector>

namespace m2e::kernels {
namespace {

constexpr int kRows = 4;   // rows of C per register tile
constexpr int kCols = 32;  // columns of C per register tile

// C[r0:r0+4, j0:j0+32] (+)= A[r0:r0+4, :] * B[:, j0:j0+32] with all 128
// accumulators held in registers across the k loop.
template <typename T>
inline void tile_full(int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc, bool accumulate) {
  T acc[kRows][kCols];
  for (int r = 0; r < kRows; ++r) {
#pragma omp simd
    for (int l = 0; l < kCols; ++l) acc[r][l] = accumulate ? c[r * ldc + l] : T(0);
  }
  for (int p = 0; p < k; ++p) {
    const T* brow = b + static_cast<std::size_t>(p) * ldb;
    const T a0 = a[p], a1 = a[lda + p], a2 = a[2 * lda + p], a3 = a[3 * lda + p];
#pragma omp simd
    for (int l = 0; l < kCols; ++l) {
      const T bv = brow[l];
      acc[0][l] += a0 * bv;
      acc[1][l] += a1 * bv;
      acc[2][l] += a2 * bv;
      acc[3][l] += a3 * bv;
    }
  }
  for (int r = 0; r < kRows; ++r) {
#pragma omp simd
    for (int l = 0; l < kCols; ++l) c[r * ldc + l] = acc[r][l];
  }
}

// Ragged edge tile: rows <= 4, cols <= 32. Same per-element summation order as tile_full.
template <typename T>
inline void tile_edge(int rows, int cols, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc,
                      bool accumulate) {
  T acc[kRows][kCols];
  for (int r = 0; r < rows; ++r) {
    for (int l = 0; l < cols; ++l) acc[r][l] = accumulate ? c[r * ldc + l] : T(0);
  }
  for (int p = 0; p < k; ++p) {
    const T* brow = b + static_cast<std::size_t>(p) * ldb;
    for (int r = 0; r < rows; ++r) {
      const T av = a[r * lda + p];
#pragma omp simd
      for (int l = 0; l < cols; ++l) acc[r][l] += av * brow[l];
    }
  }
  for (int r = 0; r < rows; ++r) {
    for (int l = 0; l < cols; ++l) c[r * ldc + l] = acc[r][l];
  }
}

template <typename T>
void gemm_nn(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc, bool accumulate) {
  const int row_tiles = (m + kRows - 1) / kRows;
  const int col_tiles = (n + kCols - 1) / kCols;
  const long tiles = static_cast<long>(row_tiles) * col_tiles;
#pragma omp parallel for schedule(static) if (tiles > 1 && static_cast<long>(m) * n * k > 32768)
  for (long t = 0; t < tiles; ++t) {
    const int ti = static_cast<int>(t / col_tiles);
    const int tj = static_cast<int>(t % col_tiles);
    const int i0 = ti * kRows, j0 = tj * kCols;
    const int rows = std::min(kRows, m - i0), cols = std::min(kCols, n - j0);
    const T* ap = a + static_cast<std::size_t>(i0) * lda;
    const T* bp = b + j0;
    T* cp = c + static_cast<std::size_t>(i0) * ldc + j0;
    if (rows == kRows && cols == kCols) {
      tile_full(k, ap, lda, bp, ldb, cp, ldc, accumulate);
    } else {
      tile_edge(rows, cols, k, ap, lda, bp, ldb, cp, ldc, accumulate);
    }
  }
}

template <typename T>
void transpose(const T* src, int rows, int cols, T* dst) {
  constexpr int B = 32;
#pragma omp parallel for schedule(static) if (static_cast<long>(rows) * cols > 65536)
  for (int i0 = 0; i0 < rows; i0 += B) {
    for (int j0 = 0; j0 < cols; j0 += B) {
      const int i1 = std::min(rows, i0 + B), j1 = std::min(cols, j0 + B);
      for (int i = i0; i < i1; ++i) {
        for (int j = j0; j < j1; ++j) dst[static_cast<std::size_t>(j) * rows + i] = src[static_cast<std::size_t>(i) * cols + j];
      }
    }
  }
}

template <typename T>
std::vector<T>& scratch(int slot) {
  thread_local std::vector<T> buffers[2];
  return buffers[slot];
}

}  // namespace

template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, const T* a, const T* b, T* c, bool accumulate) {
  if (m <= 0 || n <= 0) return;
  if (k <= 0) {
    if (!accumulate) std::fill_n(c, static_cast<std::size_t>(m) * n, T(0));
    return;
  }
  const T* ap = a;
  const T* bp = b;
  if (trans_a) {
    auto& buf = scratch<T>(0);
    buf.resize(static_cast<std::size_t>(m) * k);
    transpose(a, k, m, buf.data());
    ap = buf.data();
  }
  if (trans_b) {
    auto& buf = scratch<T>(1);
    buf.resize(static_cast<std::size_t>(k) * n);
    transpose(b, n, k, buf.data());
    bp = buf.data();
  }
  gemm_nn(m, n, k, ap, k, bp, n, c, n, accumulate);
}

template <typename T>
void im2col(const T* image, const ConvGeometry& g, T* cols) {
  const int oh = g.out_h(), ow = g.out_w();
  const int rows = g.col_rows();
  const int kk = g.kernel * g.kernel;
#pragma omp parallel for schedule(static) if (static_cast<long>(rows) * oh * ow > 65536)
  for (int row = 0; row < rows; ++row) {
    const int ch = row / kk;
    const int ky = (row % kk) / g.kernel;
    const int kx = row % g.kernel;
    const T* src = image + static_cast<std::size_t>(ch) * g.height * g.width;
    T* dst = cols + static_cast<std::size_t>(row) * oh * ow;
    for (int oy = 0; oy < oh; ++oy) {
      const int iy = oy * g.stride - g.pad + ky;
      T* drow = dst + static_cast<std::size_t>(oy) * ow;
      if (iy < 0 || iy >= g.height) {
        std::fill_n(drow, ow, T(0));
        continue;
      }
      const T* srow = src + static_cast<std::size_t>(iy) * g.width;
      if (g.stride == 1) {
        // Valid ox range: 0 <= ox - pad + kx < width.
        const int lo = std::clamp(g.pad - kx, 0, ow);
        const int hi = std::clamp(g.width + g.pad - kx, lo, ow);
        std::fill_n(drow, lo, T(0));
        std::copy(srow + lo - g.pad + kx, srow + hi - g.pad + kx, drow + lo);
        std::fill(drow + hi, drow + ow, T(0));
      } else {
        for (int ox = 0; ox < ow; ++ox) {
          const int ix = ox * g.stride - g.pad + kx;
          drow[ox] = (ix >= 0 && ix < g.width) ? srow[ix] : T(0);
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* cols, const ConvGeometry& g, T* image) {
  const int oh = g.out_h(), ow = g.out_w();
  const int kk = g.kernel * g.kernel;
#pragma omp parallel for schedule(static) if (g.channels > 1 && static_cast<long>(g.col_rows()) * oh * ow > 65536)
  for (int ch = 0; ch < g.channels; ++ch) {
    T* dst = image + static_cast<std::size_t>(ch) * g.height * g.width;
    for (int r = 0; r < kk; ++r) {
      const int ky = r / g.kernel, kx = r % g.kernel;
      const T* src = cols + static_cast<std::size_t>(ch * kk + r) * oh * ow;
      for (int oy = 0; oy < oh; ++oy) {
        const int iy = oy * g.stride - g.pad + ky;
        if (iy < 0 || iy >= g.height) continue;
        T* drow = dst + static_cast<std::size_t>(iy) * g.width;
        const T* srow = src + static_cast<std::size_t>(oy) * ow;
        if (g.stride == 1) {
          const int lo = std::clamp(g.pad - kx, 0, ow);
          const int hi = std::clamp(g.width + g.pad - kx, lo, ow);
          T* base = drow - g.pad + kx;
#pragma omp simd
          for (int ox = lo; ox < hi; ++ox) base[ox] += srow[ox];
        } else {
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.width) drow[ix] += srow[ox];
          }
        }
      }
    }
  }
}

int max_threads() { return omp_get_max_threads(); }
void set_threads(int n) { omp_set_num_threads(std::max(1, n)); }

template void gemm<float>(bool, bool, int, int, int, const float*, const float*, float*, bool);
template void gemm<double>(bool, bool, int, int, int, const double*, const double*, double*, bool);
template void im2col<float>(const float*, const ConvGeometry&, float*);
template void im2col<double>(const double*, const ConvGeometry&, double*);
template void col2im<float>(const float*, const ConvGeometry&, float*);
template void col2im<double>(const double*, const ConvGeometry&, double*);

}  // namespace m2e::kernels

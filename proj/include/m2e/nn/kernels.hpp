#pragma once

namespace m2e::kernels {

/// Geometry of a 2-D convolution over one (C, H, W) sample with a square kernel.
struct ConvGeometry {
  int channels = 0;
  int height = 0;
  int width = 0;
  int kernel = 1;
  int stride = 1;
  int pad = 0;

  int out_h() const { return (height + 2 * pad - kernel) / stride + 1; }
  int out_w() const { return (width + 2 * pad - kernel) / stride + 1; }
  int col_rows() const { return channels * kernel * kernel; }
  int col_cols() const { return out_h() * out_w(); }
};

// OpenMP-parallel kernels. Every output element is produced by exactly one
// thread with a fixed summation order, so results are bit-identical for any
// thread count.

/// C = op(A) * op(B), or C += ... when `accumulate`. Row-major, dense.
/// op(A) is m x k (A stored k x m when trans_a); op(B) is k x n (B stored n x k when trans_b).
template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, const T* a, const T* b, T* c, bool accumulate);

/// Unfolds one sample into a (C*K*K) x (OH*OW) column matrix; padding reads as zero.
template <typename T>
void im2col(const T* image, const ConvGeometry& g, T* cols);

/// Adjoint of im2col: scatters columns back and adds them into `image`.
template <typename T>
void col2im(const T* cols, const ConvGeometry& g, T* image);

/// Number of threads the parallel kernels will use.
int max_threads();
/// Caps the thread count (1 gives the single-threaded mode used by determinism checks).
void set_threads(int n);

}  // namespace m2e::kernels

namespace m2e::reference {

// Serial, deliberately naive implementations kept as test oracles and as the
// benchmark baseline. They share no code with m2e::kernels.

template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, const T* a, const T* b, T* c, bool accumulate);

/// Direct convolution of one sample. weight is (out_channels, C, K, K); bias may be null.
template <typename T>
void conv2d(const T* input, const kernels::ConvGeometry& g, const T* weight, const T* bias, int out_channels,
            T* output);

/// Direct transposed convolution of one sample. `g` describes the *output*
/// geometry (channels = out_channels) as the forward convolution would see it;
/// input is (in_channels, g.out_h(), g.out_w()); weight is (in_channels, out_channels, K, K).
template <typename T>
void conv_transpose2d(const T* input, int in_channels, const kernels::ConvGeometry& g, const T* weight,
                      const T* bias, T* output);

}  // namespace m2e::reference

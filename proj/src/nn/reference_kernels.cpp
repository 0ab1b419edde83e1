#include <cstddef>

#include "m2e/nn/kernels.hpp"

namespace m2e::reference {

template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, const T* a, const T* b, T* c, bool accumulate) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      T sum = accumulate ? c[static_cast<std::size_t>(i) * n + j] : T(0);
      for (int p = 0; p < k; ++p) {
        const T av = trans_a ? a[static_cast<std::size_t>(p) * m + i] : a[static_cast<std::size_t>(i) * k + p];
        const T bv = trans_b ? b[static_cast<std::size_t>(j) * k + p] : b[static_cast<std::size_t>(p) * n + j];
        sum += av * bv;
      }
      c[static_cast<std::size_t>(i) * n + j] = sum;
    }
  }
}

template <typename T>
void conv2d(const T* input, const kernels::ConvGeometry& g, const T* weight, const T* bias, int out_channels,
            T* output) {
  const int oh = g.out_h(), ow = g.out_w(), k = g.kernel;
  for (int oc = 0; oc < out_channels; ++oc) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        T sum = bias ? bias[oc] : T(0);
        for (int ic = 0; ic < g.channels; ++ic) {
          for (int ky = 0; ky < k; ++ky) {
            const int iy = oy * g.stride - g.pad + ky;
            if (iy < 0 || iy >= g.height) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int ix = ox * g.stride - g.pad + kx;
              if (ix < 0 || ix >= g.width) continue;
              const T wv = weight[((static_cast<std::size_t>(oc) * g.channels + ic) * k + ky) * k + kx];
              sum += wv * input[(static_cast<std::size_t>(ic) * g.height + iy) * g.width + ix];
            }
          }
        }
        output[(static_cast<std::size_t>(oc) * oh + oy) * ow + ox] = sum;
      }
    }
  }
}

template <typename T>
void conv_transpose2d(const T* input, int in_channels, const kernels::ConvGeometry& g, const T* weight,
                      const T* bias, T* output) {
  const int ih = g.out_h(), iw = g.out_w(), k = g.kernel;
  const int oc_count = g.channels;
  for (int oc = 0; oc < oc_count; ++oc) {
    for (int y = 0; y < g.height; ++y) {
      for (int x = 0; x < g.width; ++x) output[(static_cast<std::size_t>(oc) * g.height + y) * g.width + x] = bias ? bias[oc] : T(0);
    }
  }
  for (int ic = 0; ic < in_channels; ++ic) {
    for (int iy = 0; iy < ih; ++iy) {
      for (int ix = 0; ix < iw; ++ix) {
        const T xv = input[(static_cast<std::size_t>(ic) * ih + iy) * iw + ix];
        for (int oc = 0; oc < oc_count; ++oc) {
          for (int ky = 0; ky < k; ++ky) {
            const int y = iy * g.stride - g.pad + ky;
            if (y < 0 || y >= g.height) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int x = ix * g.stride - g.pad + kx;
              if (x < 0 || x >= g.width) continue;
              const T wv = weight[((static_cast<std::size_t>(ic) * oc_count + oc) * k + ky) * k + kx];
              output[(static_cast<std::size_t>(oc) * g.height + y) * g.width + x] += wv * xv;
            }
          }
        }
      }
    }
  }
}

template void gemm<float>(bool, bool, int, int, int, const float*, const float*, float*, bool);
template void gemm<double>(bool, bool, int, int, int, const double*, const double*, double*, bool);
template void conv2d<float>(const float*, const kernels::ConvGeometry&, const float*, const float*, int, float*);
template void conv2d<double>(const double*, const kernels::ConvGeometry&, const double*, const double*, int, double*);
template void conv_transpose2d<float>(const float*, int, const kernels::ConvGeometry&, const float*, const float*,
                                      float*);
template void conv_transpose2d<double>(const double*, int, const kernels::ConvGeometry&, const double*,
                                       const double*, double*);

}  // namespace m2e::reference

#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

namespace varsnn::detail {

// Direct NHWC convolution kernels. Loops are arranged so the innermost
// dimension is contiguous (filters for the forward/weight passes, the
// kw*C window row for the input pass), which the compiler vectorizes. For
// the narrow channel counts used here this beats im2col+GEMM and avoids
// materializing the column matrix entirely.

// out[n,y,x,f] = relu(bias[f] + sum_{ky,kx,c} in[n, y*s+ky, x*s+kx, c] * k[ky,kx,c,f])
template <typename T>
void conv_fwd_bias_relu(const T* __restrict in, int N, int H, int W, int C,
                        const T* __restrict k, int kh, int kw, int F, int stride,
                        const T* __restrict bias, T* __restrict out, int Ho, int Wo) {
  const int kwc = kw * C;
  std::vector<T> acc(static_cast<size_t>(F));
  for (int n = 0; n < N; ++n) {
    const T* img = in + static_cast<int64_t>(n) * H * W * C;
    T* o = out + static_cast<int64_t>(n) * Ho * Wo * F;
    for (int y = 0; y < Ho; ++y) {
      for (int x = 0; x < Wo; ++x) {
        T* __restrict a = acc.data();
        std::copy(bias, bias + F, a);
        for (int ky = 0; ky < kh; ++ky) {
          const T* __restrict row = img + ((static_cast<int64_t>(y * stride + ky)) * W + x * stride) * C;
          const T* __restrict krow = k + static_cast<int64_t>(ky) * kwc * F;
          for (int t = 0; t < kwc; ++t) {
            const T xv = row[t];
            const T* __restrict kf = krow + static_cast<int64_t>(t) * F;
            for (int f = 0; f < F; ++f) a[f] += xv * kf[f];
          }
        }
        for (int f = 0; f < F; ++f) o[f] = a[f] > T(0) ? a[f] : T(0);
        o += F;
      }
    }
  }
}

// gk[ky,kx,c,f] += sum_{n,y,x} in[n, y*s+ky, x*s+kx, c] * dz[n,y,x,f]
template <typename T>
void conv_grad_kernels(const T* __restrict in, int N, int H, int W, int C,
                       const T* __restrict dz, int kh, int kw, int F, int stride,
                       T* __restrict gk, int Ho, int Wo) {
  const int kwc = kw * C;
  for (int n = 0; n < N; ++n) {
    const T* img = in + static_cast<int64_t>(n) * H * W * C;
    const T* d = dz + static_cast<int64_t>(n) * Ho * Wo * F;
    for (int y = 0; y < Ho; ++y) {
      for (int x = 0; x < Wo; ++x) {
        for (int ky = 0; ky < kh; ++ky) {
          const T* __restrict row = img + ((static_cast<int64_t>(y * stride + ky)) * W + x * stride) * C;
          T* __restrict grow = gk + static_cast<int64_t>(ky) * kwc * F;
          for (int t = 0; t < kwc; ++t) {
            const T xv = row[t];
            T* __restrict gf = grow + static_cast<int64_t>(t) * F;
            for (int f = 0; f < F; ++f) gf[f] += xv * d[f];
          }
        }
        d += F;
      }
    }
  }
}

// dx[n, y*s+ky, x*s+kx, c] += sum_f dz[n,y,x,f] * k[ky,kx,c,f], with the
// kernel pre-transposed to [ky][f][kx*C] so the window row is the contiguous
// inner axis.
template <typename T>
void conv_grad_input(T* __restrict dx, int N, int H, int W, int C, const T* __restrict k, int kh,
                     int kw, int F, int stride, const T* __restrict dz, int Ho, int Wo) {
  const int kwc = kw * C;
  std::vector<T> kt(static_cast<size_t>(kh) * F * kwc);
  for (int ky = 0; ky < kh; ++ky) {
    for (int t = 0; t < kwc; ++t) {
      for (int f = 0; f < F; ++f) {
        kt[(static_cast<int64_t>(ky) * F + f) * kwc + t] =
            k[(static_cast<int64_t>(ky) * kwc + t) * F + f];
      }
    }
  }
  for (int n = 0; n < N; ++n) {
    T* img = dx + static_cast<int64_t>(n) * H * W * C;
    const T* d = dz + static_cast<int64_t>(n) * Ho * Wo * F;
    for (int y = 0; y < Ho; ++y) {
      for (int x = 0; x < Wo; ++x) {
        for (int ky = 0; ky < kh; ++ky) {
          T* __restrict row = img + ((static_cast<int64_t>(y * stride + ky)) * W + x * stride) * C;
          const T* ktrow = kt.data() + static_cast<int64_t>(ky) * F * kwc;
          for (int f = 0; f < F; ++f) {
            const T dv = d[f];
            const T* __restrict kr = ktrow + static_cast<int64_t>(f) * kwc;
            for (int t = 0; t < kwc; ++t) row[t] += dv * kr[t];
          }
        }
        d += F;
      }
    }
  }
}

}  // namespace varsnn::detail

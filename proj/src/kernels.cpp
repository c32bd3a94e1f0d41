#include "kernels.hpp"

#include <algorithm>
#include <cstring>

namespace pidcount::kernels {

void gemm_nn(int M, int N, int K, const float* __restrict A, const float* __restrict B,
             float* __restrict C) {
  int i = 0;
  // Four output rows per pass so each row of B is streamed once per block.
  for (; i + 4 <= M; i += 4) {
    float* c0 = C + static_cast<std::size_t>(i) * N;
    float* c1 = c0 + N;
    float* c2 = c1 + N;
    float* c3 = c2 + N;
    const float* a0 = A + static_cast<std::size_t>(i) * K;
    const float* a1 = a0 + K;
    const float* a2 = a1 + K;
    const float* a3 = a2 + K;
    for (int k = 0; k < K; ++k) {
      const float* b = B + static_cast<std::size_t>(k) * N;
      const float v0 = a0[k], v1 = a1[k], v2 = a2[k], v3 = a3[k];
      for (int j = 0; j < N; ++j) {
        const float bj = b[j];
        c0[j] += v0 * bj;
        c1[j] += v1 * bj;
        c2[j] += v2 * bj;
        c3[j] += v3 * bj;
      }
    }
  }
  for (; i < M; ++i) {
    float* c = C + static_cast<std::size_t>(i) * N;
    const float* a = A + static_cast<std::size_t>(i) * K;
    for (int k = 0; k < K; ++k) {
      const float* b = B + static_cast<std::size_t>(k) * N;
      const float v = a[k];
      for (int j = 0; j < N; ++j) c[j] += v * b[j];
    }
  }
}

namespace {

inline float dot(const float* __restrict x, const float* __restrict y, int n) {
  float acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  int j = 0;
  for (; j + 8 <= n; j += 8) {
    for (int u = 0; u < 8; ++u) acc[u] += x[j + u] * y[j + u];
  }
  float tail = 0.0f;
  for (; j < n; ++j) tail += x[j] * y[j];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail;
}

}  // namespace

void gemm_nt(int M, int N, int K, const float* __restrict A, const float* __restrict B,
             float* __restrict C) {
  for (int i = 0; i < M; ++i) {
    const float* a = A + static_cast<std::size_t>(i) * K;
    float* c = C + static_cast<std::size_t>(i) * N;
    for (int j = 0; j < N; ++j) c[j] += dot(a, B + static_cast<std::size_t>(j) * K, K);
  }
}

void gemm_tn(int M, int N, int K, const float* __restrict A, const float* __restrict B,
             float* __restrict C) {
  int i = 0;
  for (; i + 4 <= M; i += 4) {
    float* c0 = C + static_cast<std::size_t>(i) * N;
    float* c1 = c0 + N;
    float* c2 = c1 + N;
    float* c3 = c2 + N;
    for (int k = 0; k < K; ++k) {
      const float* a = A + static_cast<std::size_t>(k) * M + i;
      const float* b = B + static_cast<std::size_t>(k) * N;
      const float v0 = a[0], v1 = a[1], v2 = a[2], v3 = a[3];
      for (int j = 0; j < N; ++j) {
        const float bj = b[j];
        c0[j] += v0 * bj;
        c1[j] += v1 * bj;
        c2[j] += v2 * bj;
        c3[j] += v3 * bj;
      }
    }
  }
  for (; i < M; ++i) {
    float* c = C + static_cast<std::size_t>(i) * N;
    for (int k = 0; k < K; ++k) {
      const float v = A[static_cast<std::size_t>(k) * M + i];
      const float* b = B + static_cast<std::size_t>(k) * N;
      for (int j = 0; j < N; ++j) c[j] += v * b[j];
    }
  }
}

void im2col(const ConvGeometry& g, const float* image, float* cols) {
  const int P = g.out_height * g.out_width;
  for (int c = 0; c < g.channels; ++c) {
    const float* plane = image + static_cast<std::size_t>(c) * g.height * g.width;
    for (int ky = 0; ky < g.kernel; ++ky) {
      for (int kx = 0; kx < g.kernel; ++kx) {
        float* row = cols + static_cast<std::size_t>((c * g.kernel + ky) * g.kernel + kx) * P;
        for (int oy = 0; oy < g.out_height; ++oy) {
          float* dst = row + static_cast<std::size_t>(oy) * g.out_width;
          const int iy = oy * g.stride - g.padding + ky;
          if (iy < 0 || iy >= g.height) {
            std::fill(dst, dst + g.out_width, 0.0f);
            continue;
          }
          const float* src = plane + static_cast<std::size_t>(iy) * g.width;
          if (g.stride == 1) {
            // valid ox range: 0 <= ox - p + kx < W
            const int lo = std::clamp(g.padding - kx, 0, g.out_width);
            const int hi = std::clamp(g.width + g.padding - kx, lo, g.out_width);
            std::fill(dst, dst + lo, 0.0f);
            std::memcpy(dst + lo, src + lo - g.padding + kx,
                        static_cast<std::size_t>(hi - lo) * sizeof(float));
            std::fill(dst + hi, dst + g.out_width, 0.0f);
          } else {
            for (int ox = 0; ox < g.out_width; ++ox) {
              const int ix = ox * g.stride - g.padding + kx;
              dst[ox] = (ix >= 0 && ix < g.width) ? src[ix] : 0.0f;
            }
          }
        }
      }
    }
  }
}

void col2im(const ConvGeometry& g, const float* cols, float* image) {
  const int P = g.out_height * g.out_width;
  for (int c = 0; c < g.channels; ++c) {
    float* plane = image + static_cast<std::size_t>(c) * g.height * g.width;
    for (int ky = 0; ky < g.kernel; ++ky) {
      for (int kx = 0; kx < g.kernel; ++kx) {
        const float* row =
            cols + static_cast<std::size_t>((c * g.kernel + ky) * g.kernel + kx) * P;
        for (int oy = 0; oy < g.out_height; ++oy) {
          const int iy = oy * g.stride - g.padding + ky;
          if (iy < 0 || iy >= g.height) continue;
          const float* src = row + static_cast<std::size_t>(oy) * g.out_width;
          float* dst = plane + static_cast<std::size_t>(iy) * g.width;
          if (g.stride == 1) {
            const int lo = std::clamp(g.padding - kx, 0, g.out_width);
            const int hi = std::clamp(g.width + g.padding - kx, lo, g.out_width);
            const int shift = kx - g.padding;
            for (int ox = lo; ox < hi; ++ox) dst[ox + shift] += src[ox];
          } else {
            for (int ox = 0; ox < g.out_width; ++ox) {
              const int ix = ox * g.stride - g.padding + kx;
              if (ix >= 0 && ix < g.width) dst[ix] += src[ox];
            }
          }
        }
      }
    }
  }
}

}  // namespace pidcount::kernels

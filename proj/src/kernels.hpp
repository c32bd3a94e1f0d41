#pragma once

// Internal dense kernels shared by the convolution ops. All routines
// accumulate into C and run single-threaded with a fixed summation order, so
// results are bit-reproducible.

#include <cstddef>

namespace pidcount::kernels {

/// C[M,N] += A[M,K] * B[K,N]
void gemm_nn(int M, int N, int K, const float* A, const float* B, float* C);

/// C[M,N] += A[M,K] * B[N,K]^T
void gemm_nt(int M, int N, int K, const float* A, const float* B, float* C);

/// C[M,N] += A[K,M]^T * B[K,N]
void gemm_tn(int M, int N, int K, const float* A, const float* B, float* C);

struct ConvGeometry {
  int channels;
  int height, width;          // image extents
  int kernel, stride, padding;
  int out_height, out_width;  // sliding-window extents
};

/// cols[(c*k + ky)*k + kx, oy*Wo + ox] = image[c, oy*s - p + ky, ox*s - p + kx] (0 outside).
void im2col(const ConvGeometry& g, const float* image, float* cols);

/// Adjoint of im2col: image += scatter(cols).
void col2im(const ConvGeometry& g, const float* cols, float* image);

}  // namespace pidcount::kernels

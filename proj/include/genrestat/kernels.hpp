#pragma once

#include <cstddef>
#include <span>

// Dense numeric kernels used by the event CNN and the MLP back end.
//
// Each kernel exists twice: a straightforward serial reference in
// `kernels::serial` and the production version in `kernels::omp`, which is
// OpenMP-parallel over independent output rows/channels. The reference
// versions are kept for the equivalence tests and the benchmark target; the
// library itself calls the `omp` versions.
namespace genrestat::kernels {

enum class Trans { kNo, kYes };

// Row-major C = alpha * op(A) * op(B) + beta * C, with op(A) of shape m x k and
// op(B) of shape k x n. Leading dimensions are the stored row lengths.
struct GemmArgs {
  Trans trans_a = Trans::kNo;
  Trans trans_b = Trans::kNo;
  std::size_t m = 0, n = 0, k = 0;
  double alpha = 1.0;
  const double* a = nullptr;
  std::size_t lda = 0;
  const double* b = nullptr;
  std::size_t ldb = 0;
  double beta = 0.0;
  double* c = nullptr;
  std::size_t ldc = 0;
};

// Shape of one 3x3, stride-1, zero-padded ("same") convolution over a single
// sample stored channel-major (C x H x W).
struct ConvShape {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t patch() const { return in_channels * 9; }
  std::size_t plane() const { return height * width; }
};

// Unfolds C x H x W into a (C*9) x (H*W) column matrix.
void im2col_3x3(const ConvShape& s, const double* input, double* cols);
// Adjoint of im2col_3x3: accumulates columns back into C x H x W.
void col2im_3x3(const ConvShape& s, const double* cols, double* input_grad);

namespace serial {

void gemm(const GemmArgs& g);

// out (Cout x H x W) = conv3x3(input, weights), weights are Cout x Cin x 3 x 3.
// Direct seven-loop evaluation.
void conv3x3_forward(const ConvShape& s, const double* input, const double* weights,
                     double* out);

}  // namespace serial

namespace omp {

void gemm(const GemmArgs& g);

// Same contract as serial::conv3x3_forward, computed as im2col + gemm.
// `scratch` must hold s.patch() * s.plane() doubles.
void conv3x3_forward(const ConvShape& s, const double* input, const double* weights,
                     double* out, std::span<double> scratch);

}  // namespace omp

}  // namespace genrestat::kernels

#include "genrestat/kernels.hpp"

#include <algorithm>

#include "genrestat/error.hpp"

namespace genrestat::kernels {

namespace {

inline double at_a(const GemmArgs& g, std::size_t i, std::size_t p) {
  return g.trans_a == Trans::kNo ? g.a[i * g.lda + p] : g.a[p * g.lda + i];
}

inline double at_b(const GemmArgs& g, std::size_t p, std::size_t j) {
  return g.trans_b == Trans::kNo ? g.b[p * g.ldb + j] : g.b[j * g.ldb + p];
}

void scale_row(double* c, std::size_t n, double beta) {
  if (beta == 0.0) {
    std::fill(c, c + n, 0.0);
  } else if (beta != 1.0) {
    for (std::size_t j = 0; j < n; ++j) c[j] *= beta;
  }
}

// One output row of C for the production gemm. The loop order keeps the
// innermost access contiguous for every transpose combination.
void gemm_row(const GemmArgs& g, std::size_t i) {
  double* c = g.c + i * g.ldc;
  scale_row(c, g.n, g.beta);
  if (g.trans_b == Trans::kNo) {
    for (std::size_t p = 0; p < g.k; ++p) {
      const double a = g.alpha * at_a(g, i, p);
      if (a == 0.0) continue;
      const double* b = g.b + p * g.ldb;
      for (std::size_t j = 0; j < g.n; ++j) c[j] += a * b[j];
    }
  } else if (g.trans_a == Trans::kNo) {
    const double* a = g.a + i * g.lda;
    for (std::size_t j = 0; j < g.n; ++j) {
      const double* b = g.b + j * g.ldb;
      double acc = 0.0;
      for (std::size_t p = 0; p < g.k; ++p) acc += a[p] * b[p];
      c[j] += g.alpha * acc;
    }
  } else {
    for (std::size_t j = 0; j < g.n; ++j) {
      const double* b = g.b + j * g.ldb;
      double acc = 0.0;
      for (std::size_t p = 0; p < g.k; ++p) acc += g.a[p * g.lda + i] * b[p];
      c[j] += g.alpha * acc;
    }
  }
}

void check(const GemmArgs& g) {
  require(g.c != nullptr || g.m * g.n == 0, "gemm: null output");
  require(g.ldc >= g.n, "gemm: ldc smaller than n");
}

}  // namespace

void im2col_3x3(const ConvShape& s, const double* input, double* cols) {
  const std::size_t h = s.height, w = s.width, plane = s.plane();
  for (std::size_t c = 0; c < s.in_channels; ++c) {
    const double* src = input + c * plane;
    for (std::size_t ky = 0; ky < 3; ++ky) {
      for (std::size_t kx = 0; kx < 3; ++kx) {
        double* dst = cols + ((c * 3 + ky) * 3 + kx) * plane;
        for (std::size_t y = 0; y < h; ++y) {
          const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + ky) - 1;
          double* row = dst + y * w;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) {
            std::fill(row, row + w, 0.0);
            continue;
          }
          const double* srow = src + static_cast<std::size_t>(sy) * w;
          for (std::size_t x = 0; x < w; ++x) {
            const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x + kx) - 1;
            row[x] = (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) ? 0.0 : srow[sx];
          }
        }
      }
    }
  }
}

void col2im_3x3(const ConvShape& s, const double* cols, double* input_grad) {
  const std::size_t h = s.height, w = s.width, plane = s.plane();
  for (std::size_t c = 0; c < s.in_channels; ++c) {
    double* dst = input_grad + c * plane;
    for (std::size_t ky = 0; ky < 3; ++ky) {
      for (std::size_t kx = 0; kx < 3; ++kx) {
        const double* src = cols + ((c * 3 + ky) * 3 + kx) * plane;
        for (std::size_t y = 0; y < h; ++y) {
          const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + ky) - 1;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
          double* drow = dst + static_cast<std::size_t>(sy) * w;
          const double* row = src + y * w;
          for (std::size_t x = 0; x < w; ++x) {
            const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x + kx) - 1;
            if (sx >= 0 && sx < static_cast<std::ptrdiff_t>(w)) drow[sx] += row[x];
          }
        }
      }
    }
  }
}

namespace serial {

void gemm(const GemmArgs& g) {
  check(g);
  for (std::size_t i = 0; i < g.m; ++i) {
    for (std::size_t j = 0; j < g.n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < g.k; ++p) acc += at_a(g, i, p) * at_b(g, p, j);
      double& c = g.c[i * g.ldc + j];
      c = g.alpha * acc + (g.beta == 0.0 ? 0.0 : g.beta * c);
    }
  }
}

void conv3x3_forward(const ConvShape& s, const double* input, const double* weights,
                     double* out) {
  const auto h = static_cast<std::ptrdiff_t>(s.height);
  const auto w = static_cast<std::ptrdiff_t>(s.width);
  for (std::size_t o = 0; o < s.out_channels; ++o) {
    for (std::ptrdiff_t y = 0; y < h; ++y) {
      for (std::ptrdiff_t x = 0; x < w; ++x) {
        double acc = 0.0;
        for (std::size_t c = 0; c < s.in_channels; ++c) {
          const double* k = weights + (o * s.in_channels + c) * 9;
          const double* plane = input + c * s.plane();
          for (std::ptrdiff_t ky = 0; ky < 3; ++ky) {
            const std::ptrdiff_t sy = y + ky - 1;
            if (sy < 0 || sy >= h) continue;
            for (std::ptrdiff_t kx = 0; kx < 3; ++kx) {
              const std::ptrdiff_t sx = x + kx - 1;
              if (sx < 0 || sx >= w) continue;
              acc += k[ky * 3 + kx] * plane[sy * w + sx];
            }
          }
        }
        out[o * s.plane() + static_cast<std::size_t>(y * w + x)] = acc;
      }
    }
  }
}

}  // namespace serial

namespace omp {

void gemm(const GemmArgs& g) {
  check(g);
  const auto m = static_cast<std::ptrdiff_t>(g.m);
  const bool big = g.m * g.n * g.k > (1u << 16);
#pragma omp parallel for schedule(static) if (big)
  for (std::ptrdiff_t i = 0; i < m; ++i) gemm_row(g, static_cast<std::size_t>(i));
}

void conv3x3_forward(const ConvShape& s, const double* input, const double* weights,
                     double* out, std::span<double> scratch) {
  require(scratch.size() >= s.patch() * s.plane(), "conv3x3_forward: scratch too small");
  im2col_3x3(s, input, scratch.data());
  gemm({.m = s.out_channels, .n = s.plane(), .k = s.patch(),
        .a = weights, .lda = s.patch(),
        .b = scratch.data(), .ldb = s.plane(),
        .c = out, .ldc = s.plane()});
}

}  // namespace omp

}  // namespace genrestat::kernels

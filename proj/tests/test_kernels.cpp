#include <doctest.h>

#include <cmath>
#include <vector>

#include "genrestat/kernels.hpp"
#include "genrestat/rng.hpp"

using namespace genrestat;
namespace k = genrestat::kernels;

namespace {

std::vector<double> random_vector(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = 2.0 * uniform01(rng) - 1.0;
  return v;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

}  // namespace

TEST_CASE("omp gemm matches the serial reference for every transpose combination") {
  Rng rng(7);
  for (auto ta : {k::Trans::kNo, k::Trans::kYes}) {
    for (auto tb : {k::Trans::kNo, k::Trans::kYes}) {
      const std::size_t m = 37, n = 53, kk = 41;
      const auto a = random_vector(m * kk, rng);
      const auto b = random_vector(kk * n, rng);
      auto c1 = random_vector(m * n, rng);
      auto c2 = c1;
      const std::size_t lda = ta == k::Trans::kNo ? kk : m;
      const std::size_t ldb = tb == k::Trans::kNo ? n : kk;
      k::GemmArgs g{.trans_a = ta, .trans_b = tb, .m = m, .n = n, .k = kk, .alpha = 0.75,
                    .a = a.data(), .lda = lda, .b = b.data(), .ldb = ldb, .beta = 0.5,
                    .c = c1.data(), .ldc = n};
      k::serial::gemm(g);
      g.c = c2.data();
      k::omp::gemm(g);
      CHECK(max_abs_diff(c1, c2) < 1e-12);
    }
  }
}

TEST_CASE("gemm against a hand-computed product") {
  const std::vector<double> a = {1, 2, 3, 4, 5, 6};  // 2 x 3
  const std::vector<double> b = {7, 8, 9, 10, 11, 12};  // 3 x 2
  std::vector<double> c(4, 0.0);
  k::omp::gemm({.m = 2, .n = 2, .k = 3, .a = a.data(), .lda = 3, .b = b.data(), .ldb = 2,
                .c = c.data(), .ldc = 2});
  CHECK(c == std::vector<double>{58, 64, 139, 154});
}

TEST_CASE("im2col convolution equals the direct convolution") {
  Rng rng(11);
  const k::ConvShape s{.in_channels = 3, .out_channels = 5, .height = 7, .width = 9};
  const auto input = random_vector(s.in_channels * s.plane(), rng);
  const auto weights = random_vector(s.out_channels * s.patch(), rng);
  std::vector<double> direct(s.out_channels * s.plane()), fast(direct.size());
  std::vector<double> scratch(s.patch() * s.plane());
  k::serial::conv3x3_forward(s, input.data(), weights.data(), direct.data());
  k::omp::conv3x3_forward(s, input.data(), weights.data(), fast.data(), scratch);
  CHECK(max_abs_diff(direct, fast) < 1e-12);
}

TEST_CASE("col2im is the adjoint of im2col") {
  Rng rng(5);
  const k::ConvShape s{.in_channels = 2, .out_channels = 1, .height = 4, .width = 6};
  const auto x = random_vector(s.in_channels * s.plane(), rng);
  const auto y = random_vector(s.patch() * s.plane(), rng);
  std::vector<double> cols(y.size()), back(x.size(), 0.0);
  k::im2col_3x3(s, x.data(), cols.data());
  k::col2im_3x3(s, y.data(), back.data());
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) lhs += cols[i] * y[i];
  for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * back[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("a centred delta kernel is the identity convolution") {
  const k::ConvShape s{.in_channels = 1, .out_channels = 1, .height = 3, .width = 4};
  std::vector<double> input = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
  std::vector<double> w(9, 0.0);
  w[4] = 1.0;
  std::vector<double> out(12), scratch(9 * 12);
  k::omp::conv3x3_forward(s, input.data(), w.data(), out.data(), scratch);
  CHECK(out == input);
}

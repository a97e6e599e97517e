#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "cantor/kernels.h"
#include "doctest.h"

using namespace cantor;
namespace ref = cantor::kernels::reference;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Matrix m(r, c);
  for (double& v : m.flat()) v = g(rng);
  return m;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a.flat()[i], y = b.flat()[i];
    if (x == y) continue;  // covers matching infinities
    m = std::max(m, std::fabs(x - y));
  }
  return m;
}

}  // namespace

TEST_CASE("gemm variants match serial reference") {
  std::mt19937_64 rng(1);
  const int shapes[][3] = {{1, 1, 1}, {7, 3, 5}, {64, 33, 70}, {130, 64, 128}};
  for (const auto& [m, k, n] : shapes) {
    const auto M = static_cast<std::size_t>(m), K = static_cast<std::size_t>(k), N = static_cast<std::size_t>(n);
    Matrix a = random_matrix(M, K, rng);
    Matrix bt = random_matrix(N, K, rng);
    Matrix b = random_matrix(K, N, rng);
    Matrix at = random_matrix(K, M, rng);
    Matrix c1(M, N), c2(M, N);
    kernels::gemm_nt(a, bt, c1);
    ref::gemm_nt(a, bt, c2);
    CHECK(max_abs_diff(c1, c2) < 1e-12);
    kernels::gemm_nn(a, b, c1);
    ref::gemm_nn(a, b, c2);
    CHECK(max_abs_diff(c1, c2) < 1e-12);
    kernels::gemm_tn(at, b, c1);
    ref::gemm_tn(at, b, c2);
    CHECK(max_abs_diff(c1, c2) < 1e-12);
    // accumulate adds on top
    Matrix acc1 = c1, acc2 = c2;
    kernels::gemm_tn(at, b, acc1, true);
    ref::gemm_tn(at, b, acc2, true);
    CHECK(max_abs_diff(acc1, acc2) < 1e-12);
    CHECK(acc1(0, 0) == doctest::Approx(2 * c1(0, 0)));
  }
}

TEST_CASE("log softmax rows") {
  std::mt19937_64 rng(2);
  Matrix x = random_matrix(40, 17, rng);
  x(3, 4) = -std::numeric_limits<double>::infinity();
  Matrix y = x;
  kernels::log_softmax_rows(x);
  ref::log_softmax_rows(y);
  CHECK(max_abs_diff(x, y) < 1e-13);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double s = 0.0;
    for (double v : x.row(r)) s += std::exp(v);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(x(3, 4) == -std::numeric_limits<double>::infinity());
}

TEST_CASE("log sum exp is stable") {
  std::vector<double> big{1000.0, 1000.0};
  CHECK(kernels::log_sum_exp(big) == doctest::Approx(1000.0 + std::log(2.0)));
  std::vector<double> none{-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  CHECK(kernels::log_sum_exp(none) == -std::numeric_limits<double>::infinity());
}

TEST_CASE("prefix logsumexp matches reference and brute force") {
  std::mt19937_64 rng(3);
  for (int L : {1, 4, 33, 150}) {
    const auto n = static_cast<std::size_t>(L);
    std::vector<double> child(n);
    std::normal_distribution<double> g;
    for (double& v : child) v = g(rng);
    child[0] = -std::numeric_limits<double>::infinity();
    Matrix op = random_matrix(n, n + 2, rng);
    std::vector<double> a(n), b(n);
    kernels::prefix_logsumexp(child, op, a);
    ref::prefix_logsumexp(child, op, b);
    for (std::size_t p = 0; p < n; ++p) {
      if (std::isinf(b[p])) {
        CHECK(a[p] == b[p]);
        continue;
      }
      CHECK(a[p] == doctest::Approx(b[p]).epsilon(1e-12));
    }
    // out[p] = log sum_{q<p} exp(child[q] + op(p, q))
    for (std::size_t p = 0; p < n; ++p) {
      double s = 0.0;
      for (std::size_t q = 0; q < p; ++q) s += std::exp(child[q] + op(p, q));
      if (s == 0.0)
        CHECK(std::isinf(b[p]));
      else
        CHECK(b[p] == doctest::Approx(std::log(s)).epsilon(1e-10));
    }
  }
}

TEST_CASE("thread count is adjustable") {
  const int before = kernels::max_threads();
  kernels::set_threads(1);
  CHECK(kernels::max_threads() == 1);
  kernels::set_threads(before);
  CHECK(kernels::max_threads() == before);
}

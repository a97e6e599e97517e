#include "cantor/kernels.h"

#include <omp.h>

#include <cmath>
#include <limits>
#include <stdexcept>

namespace cantor::kernels {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
// Below this many multiply-adds a parallel region costs more than it saves.
constexpr long kParallelWork = 1L << 15;

void check_shapes(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(std::string("shape mismatch in ") + what);
}

inline double dot(const double* x, const double* y, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += x[i] * y[i];
    s1 += x[i + 1] * y[i + 1];
    s2 += x[i + 2] * y[i + 2];
    s3 += x[i + 3] * y[i + 3];
  }
  for (; i < n; ++i) s0 += x[i] * y[i];
  return (s0 + s1) + (s2 + s3);
}

}  // namespace

void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
  check_shapes(a.cols() == b.cols(), "gemm_nt");
  const std::size_t n = a.rows(), m = b.rows(), k = a.cols();
  if (!accumulate || !(c.rows() == n && c.cols() == m)) {
    check_shapes(!accumulate, "gemm_nt (accumulate)");
    c.resize(n, m);
  }
  const long work = static_cast<long>(n * m * k);
#pragma omp parallel for schedule(static) if (work > kParallelWork)
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a.data() + i * k;
    double* ci = c.data() + i * m;
    for (std::size_t j = 0; j < m; ++j) ci[j] += dot(ai, b.data() + j * k, k);
  }
}

void gemm_nn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
  check_shapes(a.cols() == b.rows(), "gemm_nn");
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  if (!accumulate || !(c.rows() == n && c.cols() == m)) {
    check_shapes(!accumulate, "gemm_nn (accumulate)");
    c.resize(n, m);
  }
  const long work = static_cast<long>(n * m * k);
#pragma omp parallel for schedule(static) if (work > kParallelWork)
  for (std::size_t i = 0; i < n; ++i) {
    double* ci = c.data() + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a.data()[i * k + p];
      if (aip == 0.0) continue;
      const double* bp = b.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) ci[j] += aip * bp[j];
    }
  }
}

void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
  check_shapes(a.rows() == b.rows(), "gemm_tn");
  const std::size_t k = a.rows(), n = a.cols(), m = b.cols();
  if (!accumulate || !(c.rows() == n && c.cols() == m)) {
    check_shapes(!accumulate, "gemm_tn (accumulate)");
    c.resize(n, m);
  }
  const long work = static_cast<long>(n * m * k);
#pragma omp parallel for schedule(static) if (work > kParallelWork)
  for (std::size_t i = 0; i < n; ++i) {
    double* ci = c.data() + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double api = a.data()[p * n + i];
      if (api == 0.0) continue;
      const double* bp = b.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) ci[j] += api * bp[j];
    }
  }
}

double log_sum_exp(std::span<const double> x) {
  double mx = kNegInf;
  for (double v : x) mx = std::max(mx, v);
  if (mx == kNegInf) return kNegInf;
  double s = 0.0;
  for (double v : x) s += std::exp(v - mx);
  return mx + std::log(s);
}

void log_softmax_rows(Matrix& logits) {
  const std::size_t rows = logits.rows(), cols = logits.cols();
#pragma omp parallel for schedule(static) if (static_cast<long>(rows * cols) > kParallelWork)
  for (std::size_t r = 0; r < rows; ++r) {
    double* x = logits.data() + r * cols;
    double mx = kNegInf;
    for (std::size_t c = 0; c < cols; ++c) mx = std::max(mx, x[c]);
    if (mx == kNegInf) continue;
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += std::exp(x[c] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t c = 0; c < cols; ++c) x[c] -= lse;
  }
}

void prefix_logsumexp(std::span<const double> child, const Matrix& log_operand,
                      std::span<double> out) {
  const std::size_t L = out.size();
  check_shapes(child.size() == L && log_operand.rows() == L && log_operand.cols() >= L,
               "prefix_logsumexp");
#pragma omp parallel for schedule(static) if (static_cast<long>(L * L) > kParallelWork)
  for (std::size_t j = 0; j < L; ++j) {
    const double* row = log_operand.data() + j * log_operand.cols();
    double mx = kNegInf;
    for (std::size_t p = 0; p < j; ++p) mx = std::max(mx, child[p] + row[p]);
    if (mx == kNegInf) {
      out[j] = kNegInf;
      continue;
    }
    double s = 0.0;
    for (std::size_t p = 0; p < j; ++p) s += std::exp(child[p] + row[p] - mx);
    out[j] = mx + std::log(s);
  }
}

int max_threads() { return omp_get_max_threads(); }

void set_threads(int n) {
  if (n >= 1) omp_set_num_threads(n);
}

namespace reference {

void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
  check_shapes(a.cols() == b.cols(), "reference::gemm_nt");
  if (!accumulate) c.resize(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < a.cols(); ++p) s += a(i, p) * b(j, p);
      c(i, j) += s;
    }
}

void gemm_nn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
  check_shapes(a.cols() == b.rows(), "reference::gemm_nn");
  if (!accumulate) c.resize(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < a.cols(); ++p) s += a(i, p) * b(p, j);
      c(i, j) += s;
    }
}

void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
  check_shapes(a.rows() == b.rows(), "reference::gemm_tn");
  if (!accumulate) c.resize(a.cols(), b.cols());
  for (std::size_t i = 0; i < a.cols(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < a.rows(); ++p) s += a(p, i) * b(p, j);
      c(i, j) += s;
    }
}

void log_softmax_rows(Matrix& logits) {
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto row = logits.row(r);
    const double lse = log_sum_exp(row);
    if (lse == kNegInf) continue;
    for (double& v : row) v -= lse;
  }
}

void prefix_logsumexp(std::span<const double> child, const Matrix& log_operand,
                      std::span<double> out) {
  // Online accumulation, one term at a time.
  for (std::size_t j = 0; j < out.size(); ++j) {
    double acc = kNegInf;
    for (std::size_t p = 0; p < j; ++p) {
      const double t = child[p] + log_operand(j, p);
      if (t == kNegInf) continue;
      if (acc == kNegInf) {
        acc = t;
      } else if (t > acc) {
        acc = t + std::log1p(std::exp(acc - t));
      } else {
        acc = acc + std::log1p(std::exp(t - acc));
      }
    }
    out[j] = acc;
  }
}

}  // namespace reference

}  // namespace cantor::kernels

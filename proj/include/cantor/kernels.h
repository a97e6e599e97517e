// Data-parallel numeric kernels.  Every kernel in `cantor::kernels` has a
// serial twin in `cantor::kernels::reference` with the same contract; the
// OpenMP versions split work across output rows only, so for a given input
// both produce bitwise identical results regardless of the thread count.
#ifndef CANTOR_KERNELS_H_
#define CANTOR_KERNELS_H_

#include <span>

#include "cantor/matrix.h"

namespace cantor::kernels {

/// c (+)= a * b^T.  a: n×k, b: m×k, c: n×m.
void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate = false);
/// c (+)= a * b.  a: n×k, b: k×m, c: n×m.
void gemm_nn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate = false);
/// c (+)= a^T * b.  a: k×n, b: k×m, c: n×m.
void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate = false);

/// Numerically stable log(sum(exp(x))); -inf for empty or all -inf input.
double log_sum_exp(std::span<const double> x);

/// In-place log-softmax of every row; entries equal to -inf stay -inf.
void log_softmax_rows(Matrix& logits);

/// out[j] = log sum_{p<j} exp(child[p] + log_operand(j, p)) for every row j,
/// where child has one entry per vertex and log_operand holds the operand
/// log-probabilities with vertex p in column p.  This is the per-position
/// prefix marginal of the MML recursion.
void prefix_logsumexp(std::span<const double> child, const Matrix& log_operand,
                      std::span<double> out);

/// Number of threads the parallel kernels use (omp_get_max_threads()).
int max_threads();
void set_threads(int n);

namespace reference {

void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate = false);
void gemm_nn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate = false);
void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate = false);
void log_softmax_rows(Matrix& logits);
void prefix_logsumexp(std::span<const double> child, const Matrix& log_operand,
                      std::span<double> out);

}  // namespace reference

}  // namespace cantor::kernels

#endif  // CANTOR_KERNELS_H_

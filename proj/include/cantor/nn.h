// Transformer building blocks with hand-written backward passes.  Backward
// functions accumulate into input gradients (callers zero them) and into
// parameter gradients.
#ifndef CANTOR_NN_H_
#define CANTOR_NN_H_

#include <vector>

#include "cantor/matrix.h"

namespace cantor::nn {

struct LinearParams {
  Matrix w;  // out × in
  Matrix b;  // 1 × out, empty for no bias
};

struct LayerNormParams {
  Matrix gamma;  // 1 × d
  Matrix beta;   // 1 × d
};

struct AttentionParams {
  LinearParams q, k, v, o;
};

struct FeedForwardParams {
  LinearParams up, down;
};

/// y = x w^T + b
void linear_forward(const Matrix& x, const LinearParams& p, Matrix& y);
void linear_backward(const Matrix& dy, const Matrix& x, const LinearParams& p, Matrix* dx,
                     LinearParams& grad);

struct LayerNormCache {
  Matrix x_hat;
  std::vector<double> rstd;
};

void layer_norm_forward(const Matrix& x, const LayerNormParams& p, Matrix& y, LayerNormCache& cache);
void layer_norm_backward(const Matrix& dy, const LayerNormParams& p, const LayerNormCache& cache,
                         Matrix& dx, LayerNormParams& grad);

/// tanh approximation of GELU.
void gelu_forward(const Matrix& x, Matrix& y);
void gelu_backward(const Matrix& dy, const Matrix& x, Matrix& dx);

struct AttentionCache {
  Matrix xq, xkv;
  Matrix q, k, v;
  std::vector<Matrix> probs;  // one Tq × Tk matrix per head
  Matrix ctx;
};

/// Unmasked multi-head attention of queries from xq over keys and values
/// from xkv.
void attention_forward(const Matrix& xq, const Matrix& xkv, const AttentionParams& p, int heads,
                       Matrix& out, AttentionCache& cache);
void attention_backward(const Matrix& dout, const AttentionParams& p, int heads,
                        const AttentionCache& cache, Matrix& dxq, Matrix& dxkv, AttentionParams& grad);

struct FeedForwardCache {
  Matrix x, pre, act;
};

void feed_forward_forward(const Matrix& x, const FeedForwardParams& p, Matrix& y, FeedForwardCache& cache);
void feed_forward_backward(const Matrix& dy, const FeedForwardParams& p, const FeedForwardCache& cache,
                           Matrix& dx, FeedForwardParams& grad);

/// a += b elementwise.
void add_into(Matrix& a, const Matrix& b);

}  // namespace cantor::nn

#endif  // CANTOR_NN_H_

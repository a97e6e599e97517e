#include "cantor/nn.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "cantor/kernels.h"

namespace cantor::nn {

namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr double kSqrt2OverPi = 0.7978845608028654;
constexpr double kGeluCubic = 0.044715;

}  // namespace

void add_into(Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("add_into: shape mismatch");
  double* x = a.data();
  const double* y = b.data();
  for (std::size_t i = 0; i < a.size(); ++i) x[i] += y[i];
}

void linear_forward(const Matrix& x, const LinearParams& p, Matrix& y) {
  kernels::gemm_nt(x, p.w, y);
  if (p.b.empty()) return;
  const std::size_t n = y.rows(), m = y.cols();
  for (std::size_t i = 0; i < n; ++i) {
    double* yi = y.data() + i * m;
    for (std::size_t j = 0; j < m; ++j) yi[j] += p.b(0, j);
  }
}

void linear_backward(const Matrix& dy, const Matrix& x, const LinearParams& p, Matrix* dx,
                     LinearParams& grad) {
  kernels::gemm_tn(dy, x, grad.w, true);
  if (!grad.b.empty())
    for (std::size_t i = 0; i < dy.rows(); ++i)
      for (std::size_t j = 0; j < dy.cols(); ++j) grad.b(0, j) += dy(i, j);
  if (dx) kernels::gemm_nn(dy, p.w, *dx, true);
}

void layer_norm_forward(const Matrix& x, const LayerNormParams& p, Matrix& y, LayerNormCache& cache) {
  const std::size_t n = x.rows(), d = x.cols();
  y.resize(n, d);
  cache.x_hat.resize(n, d);
  cache.rstd.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double* xi = x.data() + i * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += xi[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xi[j] - mean) * (xi[j] - mean);
    var /= static_cast<double>(d);
    const double rstd = 1.0 / std::sqrt(var + kLayerNormEps);
    cache.rstd[i] = rstd;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (xi[j] - mean) * rstd;
      cache.x_hat(i, j) = h;
      y(i, j) = h * p.gamma(0, j) + p.beta(0, j);
    }
  }
}

void layer_norm_backward(const Matrix& dy, const LayerNormParams& p, const LayerNormCache& cache,
                         Matrix& dx, LayerNormParams& grad) {
  const std::size_t n = dy.rows(), d = dy.cols();
  std::vector<double> dh(d);
  for (std::size_t i = 0; i < n; ++i) {
    double mean_dh = 0.0, mean_dh_h = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double g = dy(i, j);
      grad.gamma(0, j) += g * cache.x_hat(i, j);
      grad.beta(0, j) += g;
      dh[j] = g * p.gamma(0, j);
      mean_dh += dh[j];
      mean_dh_h += dh[j] * cache.x_hat(i, j);
    }
    mean_dh /= static_cast<double>(d);
    mean_dh_h /= static_cast<double>(d);
    for (std::size_t j = 0; j < d; ++j)
      dx(i, j) += cache.rstd[i] * (dh[j] - mean_dh - cache.x_hat(i, j) * mean_dh_h);
  }
}

void gelu_forward(const Matrix& x, Matrix& y) {
  y.resize(x.rows(), x.cols());
  const double* a = x.data();
  double* b = y.data();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = a[i];
    b[i] = 0.5 * v * (1.0 + std::tanh(kSqrt2OverPi * (v + kGeluCubic * v * v * v)));
  }
}

void gelu_backward(const Matrix& dy, const Matrix& x, Matrix& dx) {
  const double* a = x.data();
  const double* g = dy.data();
  double* out = dx.data();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = a[i];
    const double u = kSqrt2OverPi * (v + kGeluCubic * v * v * v);
    const double t = std::tanh(u);
    const double du = kSqrt2OverPi * (1.0 + 3.0 * kGeluCubic * v * v);
    out[i] += g[i] * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du);
  }
}

void attention_forward(const Matrix& xq, const Matrix& xkv, const AttentionParams& p, int heads,
                       Matrix& out, AttentionCache& c) {
  const std::size_t d = xq.cols();
  if (heads < 1 || d % static_cast<std::size_t>(heads) != 0)
    throw std::invalid_argument("attention: hidden size not divisible by head count");
  const std::size_t dh = d / static_cast<std::size_t>(heads);
  const std::size_t tq = xq.rows(), tk = xkv.rows();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  c.xq = xq;
  c.xkv = xkv;
  linear_forward(xq, p.q, c.q);
  linear_forward(xkv, p.k, c.k);
  linear_forward(xkv, p.v, c.v);
  c.probs.assign(static_cast<std::size_t>(heads), Matrix(tq, tk));
  c.ctx.resize(tq, d);
  for (std::size_t h = 0; h < static_cast<std::size_t>(heads); ++h) {
    const std::size_t off = h * dh;
    Matrix& P = c.probs[h];
    for (std::size_t i = 0; i < tq; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < tk; ++j) {
        double s = 0.0;
        for (std::size_t e = 0; e < dh; ++e) s += c.q(i, off + e) * c.k(j, off + e);
        P(i, j) = s * scale;
        mx = std::max(mx, P(i, j));
      }
      double z = 0.0;
      for (std::size_t j = 0; j < tk; ++j) {
        P(i, j) = std::exp(P(i, j) - mx);
        z += P(i, j);
      }
      for (std::size_t j = 0; j < tk; ++j) P(i, j) /= z;
      for (std::size_t j = 0; j < tk; ++j) {
        const double w = P(i, j);
        for (std::size_t e = 0; e < dh; ++e) c.ctx(i, off + e) += w * c.v(j, off + e);
      }
    }
  }
  linear_forward(c.ctx, p.o, out);
}

void attention_backward(const Matrix& dout, const AttentionParams& p, int heads,
                        const AttentionCache& c, Matrix& dxq, Matrix& dxkv, AttentionParams& g) {
  const std::size_t d = c.q.cols();
  const std::size_t dh = d / static_cast<std::size_t>(heads);
  const std::size_t tq = c.q.rows(), tk = c.k.rows();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Matrix dctx(tq, d);
  linear_backward(dout, c.ctx, p.o, &dctx, g.o);
  Matrix dq(tq, d), dk(tk, d), dv(tk, d);
  std::vector<double> dp(tk);
  for (std::size_t h = 0; h < static_cast<std::size_t>(heads); ++h) {
    const std::size_t off = h * dh;
    const Matrix& P = c.probs[h];
    for (std::size_t i = 0; i < tq; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < tk; ++j) {
        double s = 0.0;
        for (std::size_t e = 0; e < dh; ++e) {
          s += dctx(i, off + e) * c.v(j, off + e);
          dv(j, off + e) += P(i, j) * dctx(i, off + e);
        }
        dp[j] = s;
        dot += s * P(i, j);
      }
      for (std::size_t j = 0; j < tk; ++j) {
        const double ds = P(i, j) * (dp[j] - dot) * scale;
        if (ds == 0.0) continue;
        for (std::size_t e = 0; e < dh; ++e) {
          dq(i, off + e) += ds * c.k(j, off + e);
          dk(j, off + e) += ds * c.q(i, off + e);
        }
      }
    }
  }
  linear_backward(dq, c.xq, p.q, &dxq, g.q);
  linear_backward(dk, c.xkv, p.k, &dxkv, g.k);
  linear_backward(dv, c.xkv, p.v, &dxkv, g.v);
}

void feed_forward_forward(const Matrix& x, const FeedForwardParams& p, Matrix& y, FeedForwardCache& c) {
  c.x = x;
  linear_forward(x, p.up, c.pre);
  gelu_forward(c.pre, c.act);
  linear_forward(c.act, p.down, y);
}

void feed_forward_backward(const Matrix& dy, const FeedForwardParams& p, const FeedForwardCache& c,
                           Matrix& dx, FeedForwardParams& g) {
  Matrix dact(c.act.rows(), c.act.cols());
  linear_backward(dy, c.act, p.down, &dact, g.down);
  Matrix dpre(c.pre.rows(), c.pre.cols());
  gelu_backward(dact, c.pre, dpre);
  linear_backward(dpre, c.x, p.up, &dx, g.up);
}

}  // namespace cantor::nn

#include "cantor/model.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>

#include "cantor/kernels.h"

namespace cantor {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Matrix random_matrix(std::size_t r, std::size_t c, double std, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std);
  Matrix m(r, c);
  for (double& v : m.flat()) v = dist(rng);
  return m;
}

nn::LinearParams random_linear(std::size_t out, std::size_t in, double std, std::mt19937_64& rng) {
  return {random_matrix(out, in, std, rng), Matrix(1, out)};
}

nn::LayerNormParams unit_norm(std::size_t d) { return {Matrix(1, d, 1.0), Matrix(1, d)}; }

nn::AttentionParams random_attention(std::size_t d, double std, std::mt19937_64& rng) {
  nn::AttentionParams a;
  a.q = random_linear(d, d, std, rng);
  // A key bias adds the same q.b to every score of a query, which softmax
  // cancels, so keys carry no bias.
  a.k = {random_matrix(d, d, std, rng), Matrix()};
  a.v = random_linear(d, d, std, rng);
  a.o = random_linear(d, d, std, rng);
  return a;
}

nn::FeedForwardParams random_ffn(std::size_t d, std::size_t h, double std, std::mt19937_64& rng) {
  nn::FeedForwardParams f;
  f.up = random_linear(h, d, std, rng);
  f.down = random_linear(d, h, std, rng);
  return f;
}

template <class Params, class Fn>
void visit(Params& p, Fn&& fn) {
  fn("token_embedding", p.token_embedding);
  fn("encoder_positions", p.encoder_positions);
  fn("decoder_positions", p.decoder_positions);
  fn("constant_embedding", p.constant_embedding);
  auto linear = [&](const std::string& n, auto& l) {
    fn(n + ".w", l.w);
    if (!l.b.empty()) fn(n + ".b", l.b);
  };
  auto norm = [&](const std::string& n, auto& l) {
    fn(n + ".gamma", l.gamma);
    fn(n + ".beta", l.beta);
  };
  auto attn = [&](const std::string& n, auto& a) {
    linear(n + ".q", a.q);
    linear(n + ".k", a.k);
    linear(n + ".v", a.v);
    linear(n + ".o", a.o);
  };
  auto ffn = [&](const std::string& n, auto& f) {
    linear(n + ".up", f.up);
    linear(n + ".down", f.down);
  };
  for (std::size_t i = 0; i < p.encoder.size(); ++i) {
    const std::string n = "encoder." + std::to_string(i);
    norm(n + ".ln_attn", p.encoder[i].ln_attn);
    attn(n + ".attn", p.encoder[i].attn);
    norm(n + ".ln_ffn", p.encoder[i].ln_ffn);
    ffn(n + ".ffn", p.encoder[i].ffn);
  }
  for (std::size_t i = 0; i < p.decoder.size(); ++i) {
    const std::string n = "decoder." + std::to_string(i);
    norm(n + ".ln_self", p.decoder[i].ln_self);
    attn(n + ".self_attn", p.decoder[i].self_attn);
    norm(n + ".ln_cross", p.decoder[i].ln_cross);
    attn(n + ".cross_attn", p.decoder[i].cross_attn);
    norm(n + ".ln_ffn", p.decoder[i].ln_ffn);
    ffn(n + ".ffn", p.decoder[i].ffn);
  }
  norm("decoder_norm", p.decoder_norm);
  fn("w_f", p.w_f);
  fn("w_q", p.w_q);
  fn("w_a", p.w_a);
  fn("w_b", p.w_b);
}

// Pre-LN residual sub-layer pieces shared by encoder and decoder.
void self_attention_sublayer(const Matrix& x, const nn::LayerNormParams& ln, const nn::AttentionParams& a,
                             int heads, Matrix& h, nn::LayerNormCache& lnc, nn::AttentionCache& ac,
                             Matrix& out) {
  nn::layer_norm_forward(x, ln, h, lnc);
  Matrix y;
  nn::attention_forward(h, h, a, heads, y, ac);
  out = x;
  nn::add_into(out, y);
}

void ffn_sublayer(const Matrix& x, const nn::LayerNormParams& ln, const nn::FeedForwardParams& f,
                  Matrix& h, nn::LayerNormCache& lnc, nn::FeedForwardCache& fc, Matrix& out) {
  nn::layer_norm_forward(x, ln, h, lnc);
  Matrix y;
  nn::feed_forward_forward(h, f, y, fc);
  out = x;
  nn::add_into(out, y);
}

// dlogit = g - p * sum(g), zero on masked entries.
void log_softmax_backward(const Matrix& logp, const Matrix& g, Matrix& dlogit) {
  dlogit.resize(g.rows(), g.cols());
  for (std::size_t i = 0; i < g.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < g.cols(); ++j)
      if (logp(i, j) != kNegInf) s += g(i, j);
    for (std::size_t j = 0; j < g.cols(); ++j)
      dlogit(i, j) = logp(i, j) == kNegInf ? 0.0 : g(i, j) - std::exp(logp(i, j)) * s;
  }
}

}  // namespace

void ModelConfig::validate() const {
  if (d < 1 || heads < 1 || d % heads != 0) throw ModelError("hidden size must be divisible by heads");
  if (encoder_blocks < 0 || decoder_blocks < 0) throw ModelError("block counts must be non-negative");
  if (L < 1) throw ModelError("L must be >= 1");
  if (max_len < 1) throw ModelError("max_len must be >= 1");
  if (vocab_size < 2) throw ModelError("vocabulary needs at least [UNK] and [NUM]");
  if (num_operators < 1) throw ModelError("operator set is empty");
  if (num_constants < 0) throw ModelError("negative constant count");
  if (!(init_std > 0.0)) throw ModelError("init_std must be positive");
}

Vocabulary::Vocabulary() {
  add("[UNK]");
  add("[NUM]");
}

void Vocabulary::add(const std::string& token) {
  if (index_.count(token)) return;
  index_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(token);
}

int Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& corpus, int min_count) {
  std::map<std::string, int> counts;
  for (const auto& doc : corpus)
    for (const auto& t : doc) ++counts[t];
  Vocabulary v;
  for (const auto& [t, c] : counts)
    if (c >= min_count) v.add(t);
  return v;
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& tokens,
                                    const std::vector<int>& number_positions) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  for (int p : number_positions) {
    if (p < 0 || p >= static_cast<int>(ids.size())) throw ModelError("number position out of range");
    ids[static_cast<std::size_t>(p)] = kNum;
  }
  return ids;
}

ModelParams ModelParams::init(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  const auto d = static_cast<std::size_t>(cfg.d);
  const auto h = static_cast<std::size_t>(cfg.ffn_width());
  const double s = cfg.init_std;
  ModelParams p;
  p.token_embedding = random_matrix(static_cast<std::size_t>(cfg.vocab_size), d, s, rng);
  p.encoder_positions = random_matrix(static_cast<std::size_t>(cfg.max_len), d, s, rng);
  p.decoder_positions = random_matrix(static_cast<std::size_t>(cfg.L) + 1, d, s, rng);
  p.constant_embedding = random_matrix(static_cast<std::size_t>(cfg.num_constants), d, s, rng);
  for (int i = 0; i < cfg.encoder_blocks; ++i) {
    EncoderBlock b;
    b.ln_attn = unit_norm(d);
    b.attn = random_attention(d, s, rng);
    b.ln_ffn = unit_norm(d);
    b.ffn = random_ffn(d, h, s, rng);
    p.encoder.push_back(std::move(b));
  }
  for (int i = 0; i < cfg.decoder_blocks; ++i) {
    DecoderBlock b;
    b.ln_self = unit_norm(d);
    b.self_attn = random_attention(d, s, rng);
    b.ln_cross = unit_norm(d);
    b.cross_attn = random_attention(d, s, rng);
    b.ln_ffn = unit_norm(d);
    b.ffn = random_ffn(d, h, s, rng);
    p.decoder.push_back(std::move(b));
  }
  p.decoder_norm = unit_norm(d);
  p.w_f = random_matrix(static_cast<std::size_t>(cfg.num_operators), d, s, rng);
  p.w_q = random_matrix(d, d, s, rng);
  p.w_a = random_matrix(d, d, s, rng);
  p.w_b = random_matrix(d, d, s, rng);
  return p;
}

ModelParams ModelParams::zeros_like() const {
  ModelParams z = *this;
  z.for_each([](const std::string&, Matrix& m) { m.fill(0.0); });
  return z;
}

void ModelParams::for_each(const std::function<void(const std::string&, Matrix&)>& fn) {
  visit(*this, fn);
}

void ModelParams::for_each(const std::function<void(const std::string&, const Matrix&)>& fn) const {
  visit(*this, fn);
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const Matrix& m) { n += m.size(); });
  return n;
}

double ModelParams::squared_norm() const {
  double s = 0.0;
  for_each([&](const std::string&, const Matrix& m) {
    for (double v : m.flat()) s += v * v;
  });
  return s;
}

void ModelParams::scale(double s) {
  for_each([&](const std::string&, Matrix& m) {
    for (double& v : m.flat()) v *= s;
  });
}

bool ModelParams::all_finite() const {
  bool ok = true;
  for_each([&](const std::string&, const Matrix& m) {
    for (double v : m.flat()) ok = ok && std::isfinite(v);
  });
  return ok;
}

EncoderOutput encode(const EncodedProblem& problem, const ModelParams& params, const ModelConfig& cfg,
                     EncoderCache* cache) {
  const std::size_t T = problem.token_ids.size();
  const auto d = static_cast<std::size_t>(cfg.d);
  if (T == 0) throw ModelError("empty problem text");
  if (T > static_cast<std::size_t>(cfg.max_len))
    throw ModelError("problem has " + std::to_string(T) + " tokens, max_len is " + std::to_string(cfg.max_len));
  Matrix x(T, d);
  for (std::size_t t = 0; t < T; ++t) {
    const int id = problem.token_ids[t];
    if (id < 0 || id >= cfg.vocab_size) throw ModelError("token id out of range");
    for (std::size_t e = 0; e < d; ++e)
      x(t, e) = params.token_embedding(static_cast<std::size_t>(id), e) + params.encoder_positions(t, e);
  }
  EncoderCache local;
  EncoderCache& c = cache ? *cache : local;
  c.input = x;
  c.blocks.assign(params.encoder.size(), {});
  for (std::size_t i = 0; i < params.encoder.size(); ++i) {
    auto& b = c.blocks[i];
    const auto& p = params.encoder[i];
    b.x_in = x;
    self_attention_sublayer(x, p.ln_attn, p.attn, cfg.heads, b.h_attn, b.ln_attn, b.attn, b.x_mid);
    ffn_sublayer(b.x_mid, p.ln_ffn, p.ffn, b.h_ffn, b.ln_ffn, b.ffn, x);
  }
  EncoderOutput out;
  out.numbers.resize(problem.number_positions.size(), d);
  for (std::size_t n = 0; n < problem.number_positions.size(); ++n) {
    const int pos = problem.number_positions[n];
    if (pos < 0 || static_cast<std::size_t>(pos) >= T) throw ModelError("number position out of range");
    for (std::size_t e = 0; e < d; ++e) out.numbers(n, e) = x(static_cast<std::size_t>(pos), e);
  }
  out.states = std::move(x);
  return out;
}

VertexStates decode_vertices(const EncoderOutput& enc, const ModelParams& params, const ModelConfig& cfg,
                             DecoderCache* cache) {
  DecoderCache local;
  DecoderCache& c = cache ? *cache : local;
  Matrix x = params.decoder_positions;
  c.blocks.assign(params.decoder.size(), {});
  for (std::size_t i = 0; i < params.decoder.size(); ++i) {
    auto& b = c.blocks[i];
    const auto& p = params.decoder[i];
    b.x_in = x;
    if (cfg.decoder_self_attention)
      self_attention_sublayer(x, p.ln_self, p.self_attn, cfg.heads, b.h_self, b.ln_self, b.self_attn, b.x_self);
    else
      b.x_self = x;
    nn::layer_norm_forward(b.x_self, p.ln_cross, b.h_cross, b.ln_cross);
    Matrix y;
    nn::attention_forward(b.h_cross, enc.states, p.cross_attn, cfg.heads, y, b.cross_attn);
    b.x_cross = b.x_self;
    nn::add_into(b.x_cross, y);
    ffn_sublayer(b.x_cross, p.ln_ffn, p.ffn, b.h_ffn, b.ln_ffn, b.ffn, x);
  }
  c.pre_norm = x;
  Matrix out;
  nn::layer_norm_forward(x, params.decoder_norm, out, c.norm);
  const auto L = static_cast<std::size_t>(cfg.L);
  const std::size_t d = out.cols();
  VertexStates vs;
  vs.vertices.resize(L, d);
  std::copy(out.data(), out.data() + L * d, vs.vertices.data());
  vs.special.assign(out.data() + L * d, out.data() + (L + 1) * d);
  return vs;
}

ProbTables heads(const VertexStates& vs, const EncoderOutput& enc, const ModelParams& params,
                 const ModelConfig& cfg, const OperatorSet& operators, HeadsCache* cache) {
  const auto L = static_cast<std::size_t>(cfg.L);
  const auto d = static_cast<std::size_t>(cfg.d);
  const std::size_t C = params.constant_embedding.rows();
  const std::size_t N = enc.numbers.rows();
  if (C + N == 0) throw ModelError("no constants and no numbers to operate on");
  if (operators.size() != params.w_f.rows()) throw ModelError("operator set does not match the model");
  HeadsCache local;
  HeadsCache& h = cache ? *cache : local;
  h.quantities.resize(L + C + N, d);
  std::copy(vs.vertices.data(), vs.vertices.data() + L * d, h.quantities.data());
  std::copy(params.constant_embedding.data(), params.constant_embedding.data() + C * d,
            h.quantities.data() + L * d);
  std::copy(enc.numbers.data(), enc.numbers.data() + N * d, h.quantities.data() + (L + C) * d);
  kernels::gemm_nt(h.quantities, params.w_q, h.keys);
  kernels::gemm_nt(vs.vertices, params.w_a, h.query_a);
  kernels::gemm_nt(vs.vertices, params.w_b, h.query_b);

  const double inv = 1.0 / std::sqrt(static_cast<double>(d));
  Matrix pf, pa, pb;
  kernels::gemm_nt(vs.vertices, params.w_f, pf);
  kernels::gemm_nt(h.query_a, h.keys, pa);
  kernels::gemm_nt(h.query_b, h.keys, pb);
  for (double& v : pa.flat()) v *= inv;
  for (double& v : pb.flat()) v *= inv;
  std::vector<double> pr(L);
  for (std::size_t j = 0; j < L; ++j) {
    double s = 0.0;
    for (std::size_t e = 0; e < d; ++e) s += h.keys(j, e) * vs.special[e];
    pr[j] = s * inv;
  }
  TableDims dims{cfg.L, static_cast<int>(operators.size()), static_cast<int>(C), static_cast<int>(N)};
  return ProbTables::from_logits(operators, dims, std::move(pf), std::move(pa), std::move(pb), std::move(pr));
}

ForwardPass forward(const EncodedProblem& problem, const ModelParams& params, const ModelConfig& cfg,
                    const OperatorSet& operators) {
  ForwardPass f;
  f.input = problem;
  f.enc = encode(problem, params, cfg, &f.encoder);
  f.vertices = decode_vertices(f.enc, params, cfg, &f.decoder);
  f.tables = heads(f.vertices, f.enc, params, cfg, operators, &f.head);
  return f;
}

void backward(const ForwardPass& pass, const TableGrad& tg, const ModelParams& params, const ModelConfig& cfg,
              ModelParams& grads, const BackwardOptions& options) {
  const auto L = static_cast<std::size_t>(cfg.L);
  const auto d = static_cast<std::size_t>(cfg.d);
  const std::size_t C = params.constant_embedding.rows();
  const std::size_t N = pass.enc.numbers.rows();
  const ProbTables& t = pass.tables;
  const HeadsCache& h = pass.head;
  const Matrix& V = pass.vertices.vertices;
  const double inv = 1.0 / std::sqrt(static_cast<double>(d));

  Matrix d_pf, d_pa, d_pb;
  log_softmax_backward(t.log_pf, tg.g_pf, d_pf);
  log_softmax_backward(t.log_pa, tg.g_pa, d_pa);
  log_softmax_backward(t.log_pb, tg.g_pb, d_pb);
  for (double& v : d_pa.flat()) v *= inv;
  for (double& v : d_pb.flat()) v *= inv;
  if (options.negate_pb_head)
    for (double& v : d_pb.flat()) v = -v;
  std::vector<double> d_pr(L);
  {
    double s = 0.0;
    for (double g : tg.g_pr) s += g;
    for (std::size_t j = 0; j < L; ++j) d_pr[j] = (tg.g_pr[j] - std::exp(t.log_pr[j]) * s) * inv;
  }

  Matrix dV(L, d);
  std::vector<double> d_special(d, 0.0);
  Matrix d_keys(L + C + N, d);

  // operator head
  kernels::gemm_nn(d_pf, params.w_f, dV, true);
  kernels::gemm_tn(d_pf, V, grads.w_f, true);
  // operand heads
  Matrix d_query;
  for (int which = 0; which < 2; ++which) {
    const Matrix& dl = which == 0 ? d_pa : d_pb;
    const Matrix& query = which == 0 ? h.query_a : h.query_b;
    const Matrix& w = which == 0 ? params.w_a : params.w_b;
    Matrix& gw = which == 0 ? grads.w_a : grads.w_b;
    kernels::gemm_nn(dl, h.keys, d_query);
    kernels::gemm_tn(dl, query, d_keys, true);
    kernels::gemm_nn(d_query, w, dV, true);
    kernels::gemm_tn(d_query, V, gw, true);
  }
  // root head
  for (std::size_t j = 0; j < L; ++j) {
    const double g = d_pr[j];
    if (g == 0.0) continue;
    for (std::size_t e = 0; e < d; ++e) {
      d_keys(j, e) += g * pass.vertices.special[e];
      d_special[e] += g * h.keys(j, e);
    }
  }
  Matrix d_quant(L + C + N, d);
  kernels::gemm_nn(d_keys, params.w_q, d_quant, true);
  kernels::gemm_tn(d_keys, h.quantities, grads.w_q, true);

  for (std::size_t j = 0; j < L; ++j)
    for (std::size_t e = 0; e < d; ++e) dV(j, e) += d_quant(j, e);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t e = 0; e < d; ++e) grads.constant_embedding(c, e) += d_quant(L + c, e);

  const Matrix& enc_states = pass.enc.states;
  Matrix d_enc(enc_states.rows(), d);
  for (std::size_t n = 0; n < N; ++n) {
    const auto pos = static_cast<std::size_t>(pass.input.number_positions[n]);
    for (std::size_t e = 0; e < d; ++e) d_enc(pos, e) += d_quant(L + C + n, e);
  }

  // decoder
  Matrix dx(L + 1, d);
  {
    Matrix d_out(L + 1, d);
    std::copy(dV.data(), dV.data() + L * d, d_out.data());
    std::copy(d_special.begin(), d_special.end(), d_out.data() + L * d);
    nn::layer_norm_backward(d_out, params.decoder_norm, pass.decoder.norm, dx, grads.decoder_norm);
  }
  for (std::size_t i = params.decoder.size(); i-- > 0;) {
    const auto& b = pass.decoder.blocks[i];
    const auto& p = params.decoder[i];
    auto& g = grads.decoder[i];
    // ffn residual
    {
      Matrix dh(dx.rows(), d);
      nn::feed_forward_backward(dx, p.ffn, b.ffn, dh, g.ffn);
      nn::layer_norm_backward(dh, p.ln_ffn, b.ln_ffn, dx, g.ln_ffn);
    }
    // cross-attention residual
    {
      Matrix dh(dx.rows(), d);
      nn::attention_backward(dx, p.cross_attn, cfg.heads, b.cross_attn, dh, d_enc, g.cross_attn);
      nn::layer_norm_backward(dh, p.ln_cross, b.ln_cross, dx, g.ln_cross);
    }
    if (cfg.decoder_self_attention) {
      Matrix dh(dx.rows(), d);
      nn::attention_backward(dx, p.self_attn, cfg.heads, b.self_attn, dh, dh, g.self_attn);
      nn::layer_norm_backward(dh, p.ln_self, b.ln_self, dx, g.ln_self);
    }
  }
  nn::add_into(grads.decoder_positions, dx);

  // encoder
  Matrix& de = d_enc;
  for (std::size_t i = params.encoder.size(); i-- > 0;) {
    const auto& b = pass.encoder.blocks[i];
    const auto& p = params.encoder[i];
    auto& g = grads.encoder[i];
    {
      Matrix dh(de.rows(), d);
      nn::feed_forward_backward(de, p.ffn, b.ffn, dh, g.ffn);
      nn::layer_norm_backward(dh, p.ln_ffn, b.ln_ffn, de, g.ln_ffn);
    }
    {
      Matrix dh(de.rows(), d);
      nn::attention_backward(de, p.attn, cfg.heads, b.attn, dh, dh, g.attn);
      nn::layer_norm_backward(dh, p.ln_attn, b.ln_attn, de, g.ln_attn);
    }
  }
  for (std::size_t tkn = 0; tkn < de.rows(); ++tkn) {
    const auto id = static_cast<std::size_t>(pass.input.token_ids[tkn]);
    for (std::size_t e = 0; e < d; ++e) {
      grads.token_embedding(id, e) += de(tkn, e);
      grads.encoder_positions(tkn, e) += de(tkn, e);
    }
  }
}

LossAndGrad compute_gradients(const EncodedProblem& problem, const Objective& objective,
                              const ModelParams& params, const ModelConfig& cfg,
                              const OperatorSet& operators, const BackwardOptions& options) {
  ForwardPass pass = forward(problem, params, cfg, operators);
  ObjectiveResult obj = objective(pass.tables);
  if (!std::isfinite(obj.loss)) throw NonFiniteLoss("objective returned a non-finite loss");
  LossAndGrad out;
  out.loss = obj.loss;
  out.grads = params.zeros_like();
  backward(pass, obj.grad, params, cfg, out.grads, options);
  return out;
}

GreedyResult greedy_decode(const ProbTables& tables, std::span<const double> numbers,
                           const ConstantsConfig& constants) {
  GreedyResult r;
  r.vertex_ops = argmax_vertex_ops(tables);
  const int root = argmax_root(tables);
  r.graph = extract_subgraph(r.vertex_ops, root);
  r.equation = graph_to_equation(r.graph);
  r.answer = try_evaluate(r.equation, numbers, constants);
  return r;
}

Adam::Adam(const ModelParams& like, double lr, double beta1, double beta2, double eps)
    : m_(like.zeros_like()), v_(like.zeros_like()), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

double Adam::step(ModelParams& params, ModelParams& grads, double clip_norm) {
  const double norm = std::sqrt(grads.squared_norm());
  if (!std::isfinite(norm)) throw NonFiniteLoss("non-finite gradient norm");
  if (clip_norm > 0.0 && norm > clip_norm) grads.scale(clip_norm / norm);
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, t_);
  const double bc2 = 1.0 - std::pow(beta2_, t_);
  std::vector<Matrix*> ps, gs, ms, vs;
  params.for_each([&](const std::string&, Matrix& m) { ps.push_back(&m); });
  grads.for_each([&](const std::string&, Matrix& m) { gs.push_back(&m); });
  m_.for_each([&](const std::string&, Matrix& m) { ms.push_back(&m); });
  v_.for_each([&](const std::string&, Matrix& m) { vs.push_back(&m); });
  for (std::size_t k = 0; k < ps.size(); ++k) {
    double* p = ps[k]->data();
    const double* g = gs[k]->data();
    double* m = ms[k]->data();
    double* v = vs[k]->data();
    for (std::size_t i = 0; i < ps[k]->size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      p[i] -= lr_ * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps_);
    }
  }
  return norm;
}

}  // namespace cantor

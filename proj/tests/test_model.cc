#include <cmath>
#include <random>
#include <sstream>

#include "cantor/checkpoint.h"
#include "cantor/model.h"
#include "cantor/training.h"
#include "cantor/verify.h"
#include "doctest.h"

using namespace cantor;

namespace {

const OperatorSet kOps = OperatorSet::arithmetic();

ModelConfig small_config(int L = 5) {
  ModelConfig c;
  c.d = 8;
  c.heads = 2;
  c.encoder_blocks = 1;
  c.decoder_blocks = 2;
  c.ffn_hidden = 16;
  c.max_len = 16;
  c.L = L;
  c.init_std = 0.3;
  c.vocab_size = 10;
  c.num_constants = 1;
  c.num_operators = 4;
  return c;
}

EncodedProblem problem() { return {{2, Vocabulary::kNum, 4, 5, Vocabulary::kNum, 3, 9}, {1, 4}}; }

double max_abs_diff(const Matrix& a, const Matrix& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a.flat()[i] - b.flat()[i]));
  return m;
}

}  // namespace

TEST_CASE("encoder shapes and sensitivity") {
  ModelConfig cfg = small_config();
  ModelParams p = ModelParams::init(cfg, 1);
  EncodedProblem x = problem();
  EncoderOutput e = encode(x, p, cfg);
  CHECK(e.states.rows() == 7);
  CHECK(e.states.cols() == 8);
  CHECK(e.numbers.rows() == 2);
  for (std::size_t k = 0; k < 8; ++k) CHECK(e.numbers(1, k) == e.states(4, k));

  EncodedProblem swapped = x;
  std::swap(swapped.token_ids[2], swapped.token_ids[3]);
  CHECK(max_abs_diff(encode(swapped, p, cfg).states, e.states) > 1e-6);
}

TEST_CASE("zero encoder blocks give embedding sums") {
  ModelConfig cfg = small_config();
  cfg.encoder_blocks = 0;
  ModelParams p = ModelParams::init(cfg, 2);
  EncodedProblem x = problem();
  EncoderOutput e = encode(x, p, cfg);
  for (std::size_t t = 0; t < x.token_ids.size(); ++t)
    for (std::size_t k = 0; k < 8; ++k)
      CHECK(e.states(t, k) ==
            p.token_embedding(static_cast<std::size_t>(x.token_ids[t]), k) + p.encoder_positions(t, k));
}

TEST_CASE("decoder shapes and determinism") {
  ModelConfig cfg = small_config(5);
  ModelParams p = ModelParams::init(cfg, 3);
  EncoderOutput e = encode(problem(), p, cfg);
  VertexStates v = decode_vertices(e, p, cfg);
  CHECK(v.vertices.rows() == 5);
  CHECK(v.vertices.cols() == 8);
  CHECK(v.special.size() == 8);
  VertexStates again = decode_vertices(encode(problem(), p, cfg), p, cfg);
  CHECK(v.vertices == again.vertices);
  CHECK(v.special == again.special);
  CHECK(ModelParams::init(cfg, 3).w_q == p.w_q);
  CHECK_FALSE(ModelParams::init(cfg, 4).w_q == p.w_q);
}

TEST_CASE("special vertex shares the vertex computation") {
  ModelConfig cfg = small_config(4);
  cfg.decoder_self_attention = false;
  ModelParams p = ModelParams::init(cfg, 5);
  EncoderOutput e = encode(problem(), p, cfg);
  VertexStates base = decode_vertices(e, p, cfg);

  // Without self-attention, changing the special input leaves every vertex alone.
  ModelParams q = p;
  // a uniform shift would vanish in LayerNorm
  q.decoder_positions(4, 0) += 0.5;
  VertexStates moved = decode_vertices(e, q, cfg);
  CHECK(moved.vertices == base.vertices);
  CHECK(moved.special != base.special);

  // Giving vertex 1 the special input reproduces the special state.
  for (std::size_t k = 0; k < 8; ++k) q.decoder_positions(0, k) = q.decoder_positions(4, k);
  VertexStates same = decode_vertices(e, q, cfg);
  for (std::size_t k = 0; k < 8; ++k) CHECK(same.vertices(0, k) == doctest::Approx(same.special[k]).epsilon(1e-14));

  // With self-attention the vertices do see it.
  cfg.decoder_self_attention = true;
  ModelParams r = ModelParams::init(cfg, 5);
  ModelParams s = r;
  s.decoder_positions(4, 0) += 0.5;
  CHECK(max_abs_diff(decode_vertices(e, r, cfg).vertices, decode_vertices(e, s, cfg).vertices) > 1e-9);
}

TEST_CASE("heads produce normalized masked tables") {
  ModelConfig cfg = small_config(6);
  ModelParams p = ModelParams::init(cfg, 7);
  ForwardPass f = forward(problem(), p, cfg, kOps);
  CHECK_FALSE(f.tables.check_invariants().has_value());
  CHECK(f.tables.dims == TableDims{6, 4, 1, 2});
  for (int c = 0; c < 6; ++c) CHECK(f.tables.pa(0, c) == 0.0);
}

TEST_CASE("operand head by hand at d=2") {
  ModelConfig cfg;
  cfg.d = 2;
  cfg.L = 2;
  VertexStates vs;
  vs.vertices = Matrix(2, 2);
  vs.vertices(0, 0) = 1.0;
  vs.vertices(0, 1) = -0.5;
  vs.vertices(1, 0) = 0.25;
  vs.vertices(1, 1) = 2.0;
  vs.special = {0.3, -0.7};
  EncoderOutput enc;
  enc.numbers = Matrix(1, 2);
  enc.numbers(0, 0) = -1.0;
  enc.numbers(0, 1) = 0.5;
  ModelParams p;
  p.constant_embedding = Matrix(0, 2);
  p.w_f = Matrix(1, 2, 1.0);
  auto ident = [] {
    Matrix m(2, 2);
    m(0, 0) = m(1, 1) = 1.0;
    return m;
  };
  p.w_q = ident();
  p.w_a = ident();
  p.w_a(0, 1) = 0.5;  // query_a = [x0 + 0.5 x1, x1]
  p.w_b = ident();
  ProbTables t = heads(vs, enc, p, cfg, OperatorSet::parse("add"));

  // row 2: candidates are vertex 1 and the single number
  const double qa0 = 0.25 + 0.5 * 2.0, qa1 = 2.0;
  const double s_v1 = (qa0 * 1.0 + qa1 * -0.5) / std::sqrt(2.0);
  const double s_n1 = (qa0 * -1.0 + qa1 * 0.5) / std::sqrt(2.0);
  const double z = std::exp(s_v1) + std::exp(s_n1);
  CHECK(t.pa(1, 0) == doctest::Approx(std::exp(s_v1) / z).epsilon(1e-14));
  CHECK(t.pa(1, 1) == 0.0);
  CHECK(t.pa(1, 2) == doctest::Approx(std::exp(s_n1) / z).epsilon(1e-14));
  // row 1 can only pick the number
  CHECK(t.pa(0, 2) == doctest::Approx(1.0));
  // root scores are keys dotted with the special vertex
  const double r0 = (1.0 * 0.3 + -0.5 * -0.7) / std::sqrt(2.0);
  const double r1 = (0.25 * 0.3 + 2.0 * -0.7) / std::sqrt(2.0);
  CHECK(t.pr(0) == doctest::Approx(std::exp(r0) / (std::exp(r0) + std::exp(r1))).epsilon(1e-14));
}

TEST_CASE("root logits are shift invariant") {
  TableDims d{3, 4, 0, 2};
  Matrix zf(3, 4), zo(3, 5);
  ProbTables a = ProbTables::from_logits(kOps, d, zf, zo, zo, {0.1, 0.7, -0.2});
  ProbTables b = ProbTables::from_logits(kOps, d, zf, zo, zo, {5.1, 5.7, 4.8});
  for (int p = 0; p < 3; ++p) CHECK(a.pr(p) == doctest::Approx(b.pr(p)).epsilon(1e-14));
}

TEST_CASE("greedy decode on constructed tables") {
  TableDims d{3, 4, 0, 2};
  Matrix pf(3, 4), pa(3, 5), pb(3, 5);
  pf(0, 0) = 10;
  pa(0, 3) = 10;
  pb(0, 4) = 10;
  std::vector<double> nums{3, 4};
  ProbTables t = ProbTables::from_logits(kOps, d, pf, pa, pb, {10.0, 0.0, 0.0});
  GreedyResult g = greedy_decode(t, nums, {});
  CHECK(g.graph.root_position() == 1);
  REQUIRE(g.answer.ok());
  CHECK(g.answer.value == 7.0);

  ProbTables tie = ProbTables::from_logits(kOps, d, pf, pa, pb, {0.0, 0.0, 0.0});
  CHECK(greedy_decode(tie, nums, {}).graph.root_position() == 1);
}

TEST_CASE("random models decode to valid graphs") {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 100; ++i) {
    ModelConfig cfg = small_config(1 + static_cast<int>(rng() % 8));
    cfg.init_std = 0.05 + 0.5 * static_cast<double>(rng() % 100) / 100.0;
    ModelParams p = ModelParams::init(cfg, rng());
    ForwardPass f = forward(problem(), p, cfg, kOps);
    GreedyResult g = greedy_decode(f.tables, std::vector<double>{2.0, 3.0}, ConstantsConfig({{"1", 1.0}}));
    CHECK_FALSE(check_graph_invariants(g.graph, cfg.L).has_value());
    CHECK(fully_reachable(g.equation));
  }
}

TEST_CASE("finite difference gradients and the sign mutation") {
  verify::GradientProblem toy = verify::gradient_toy(3);
  auto naive = [&](const ProbTables& t) { return loss_naive(toy.gold, t); };
  auto mml = [&](const ProbTables& t) { return loss_mml(toy.gold, t); };
  CHECK(verify::compare_gradients(toy, naive).max_relative_error < 1e-4);
  CHECK(verify::compare_gradients(toy, mml).max_relative_error < 1e-4);
  BackwardOptions broken;
  broken.negate_pb_head = true;
  verify::GradientComparison bad = verify::compare_gradients(toy, naive, 1e-4, broken);
  CHECK(bad.max_relative_error > 1.0);
  CHECK(bad.worst_tensor == "w_b");
}

TEST_CASE("unused vertex rows get no gradient") {
  verify::GradientProblem toy = verify::gradient_toy(4);
  ForwardPass f = forward(toy.input, toy.params, toy.config, toy.operators);
  // gold has 2 operations on L = 4: rows 3 and 4 are untouched by the naive mapping
  ObjectiveResult r = loss_naive(toy.gold, f.tables);
  for (std::size_t row = 2; row < 4; ++row)
    for (double v : r.grad.g_pf.row(row)) CHECK(v == 0.0);
  CHECK(r.grad.g_pr[1] != 0.0);

  // with |Y| = L every row is used
  Equation full = parse_equation("( ( ( num@1 + num@2 ) * num@3 ) - num@1 ) / num@2", toy.operators, toy.constants);
  ObjectiveResult all = loss_naive(full, f.tables);
  for (std::size_t row = 0; row < 4; ++row) {
    double s = 0.0;
    for (double v : all.grad.g_pf.row(row)) s += std::fabs(v);
    CHECK(s > 0.0);
  }
}

TEST_CASE("loss decreases when memorizing one example") {
  verify::GradientProblem toy = verify::gradient_toy(5);
  ModelParams params = toy.params;
  Adam adam(params, 1e-2);
  auto objective = [&](const ProbTables& t) { return loss_naive(toy.gold, t); };
  const double first = compute_gradients(toy.input, objective, params, toy.config, toy.operators).loss;
  double last = first;
  for (int step = 0; step < 50; ++step) {
    LossAndGrad lg = compute_gradients(toy.input, objective, params, toy.config, toy.operators);
    adam.step(params, lg.grads, 1.0);
    last = lg.loss;
  }
  CHECK(last < 0.5 * first);
  CHECK(params.all_finite());
}

TEST_CASE("adam clips to the global norm") {
  ModelConfig cfg = small_config();
  ModelParams p = ModelParams::init(cfg, 8);
  ModelParams g = p.zeros_like();
  g.w_q.fill(10.0);
  Adam adam(p, 1e-3);
  const double norm = adam.step(p, g, 1.0);
  CHECK(norm == doctest::Approx(10.0 * 8.0));
  CHECK(std::sqrt(g.squared_norm()) == doctest::Approx(1.0));
  ModelParams bad = p.zeros_like();
  bad.w_a(0, 0) = std::nan("");
  CHECK_THROWS_AS(adam.step(p, bad, 1.0), NonFiniteLoss);
}

TEST_CASE("vocabulary") {
  Vocabulary v = Vocabulary::build({{"b", "a", "b"}, {"c"}});
  CHECK(v.size() == 5);
  CHECK(v.token(Vocabulary::kUnk) == "[UNK]");
  CHECK(v.token(Vocabulary::kNum) == "[NUM]");
  CHECK(v.id("a") == 2);
  CHECK(v.id("zzz") == Vocabulary::kUnk);
  CHECK(v.encode({"a", "7", "c"}, {1}) == std::vector<int>{2, Vocabulary::kNum, 4});
  CHECK(Vocabulary::build({{"a", "b", "b"}}, 2).size() == 3);
}

TEST_CASE("checkpoint round trip is bitwise") {
  Model m;
  m.config = small_config();
  m.params = ModelParams::init(m.config, 9);
  m.vocab = Vocabulary::build({{"apples", "has", "tom", "x", "y", "z", "w", "q"}});
  m.constants = ConstantsConfig({{"third", 1.0 / 3.0}});
  m.operators = kOps;
  std::stringstream buf;
  write_checkpoint(buf, m);
  Model back = read_checkpoint(buf);
  CHECK(back.config == m.config);
  CHECK(back.vocab.tokens() == m.vocab.tokens());
  CHECK(back.operators == m.operators);
  CHECK(back.constants.at(1).value == m.constants.at(1).value);
  std::vector<const Matrix*> a, b;
  m.params.for_each([&](const std::string&, const Matrix& x) { a.push_back(&x); });
  back.params.for_each([&](const std::string&, const Matrix& x) { b.push_back(&x); });
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(*a[i] == *b[i]);
}

TEST_CASE("corrupt checkpoints are rejected") {
  Model m;
  m.config = small_config();
  m.params = ModelParams::init(m.config, 10);
  m.vocab = Vocabulary::build({{"a", "b", "c", "d", "e", "f", "g", "h"}});
  m.constants = ConstantsConfig({{"1", 1.0}});
  std::stringstream buf;
  write_checkpoint(buf, m);
  const std::string bytes = buf.str();

  std::string magic = bytes;
  magic[0] = 'X';
  std::istringstream in1(magic);
  CHECK_THROWS_AS(read_checkpoint(in1), CheckpointError);

  std::istringstream in2(bytes.substr(0, bytes.size() - 16));
  CHECK_THROWS_AS(read_checkpoint(in2), CheckpointError);

  CHECK_THROWS_AS(load_checkpoint("/nonexistent/model.ckpt"), CheckpointError);
}

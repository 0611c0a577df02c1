#include <doctest.h>

#include "chomsky/models.hpp"

#include <algorithm>
#include <numeric>

using namespace chomsky;

namespace {

SequenceBatch toy_batch(Index batch, Index steps, int vocab, Rng& rng, int readouts) {
  SequenceBatch sb;
  sb.batch = batch;
  sb.steps = steps;
  std::uniform_int_distribution<int> tok(0, vocab - 1);
  for (Index i = 0; i < batch * steps; ++i) sb.tokens.push_back(tok(rng));
  for (Index b = 0; b < batch; ++b) {
    sb.lengths.push_back(static_cast<int>(steps));
    sb.input_lengths.push_back(static_cast<int>(std::max<Index>(1, steps - readouts)));
  }
  for (int r = readouts; r > 0; --r) sb.readout_steps.push_back(static_cast<int>(steps - r));
  return sb;
}

ModelConfig toy_config(Architecture arch) {
  ModelConfig c;
  c.arch = arch;
  c.input_vocab = 4;
  c.output_vocab = 3;
  c.hidden = 8;
  c.cell_width = 3;
  c.stack_depth = 6;
  c.tape_cells = 5;
  c.blocks = 2;
  c.d_model = 8;
  c.heads = 2;
  c.ffn_multiplier = 2;
  c.dropout = 0;
  return c;
}

double model_grad_error(const ModelConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  auto model = make_model<double>(config, rng);
  SequenceBatch sb = toy_batch(2, 5, config.input_vocab, rng, 2);
  std::vector<int> targets;
  std::uniform_int_distribution<int> out(0, config.output_vocab - 1);
  for (std::size_t i = 0; i < sb.readout_steps.size() * 2; ++i) targets.push_back(out(rng));
  std::vector<double> mask(targets.size(), 1.0);
  mask.back() = 0.0;
  LossFn<double> f = [&](Graph<double>& g, ParamStore<double>&) {
    ForwardContext<double> ctx;
    return cross_entropy(model->forward(g, sb, ctx), std::span<const int>(targets), std::span<const double>(mask));
  };
  return grad_check(f, model->params(), 1e-5);
}

}  // namespace

TEST_CASE("recurrent models match finite differences") {
  for (auto arch : {Architecture::rnn, Architecture::lstm, Architecture::stack_rnn, Architecture::stack_lstm,
                    Architecture::tape_rnn}) {
    CAPTURE(architecture_name(arch));
    auto c = toy_config(arch);
    CHECK(model_grad_error(c, 11) <= 1e-4);
    if (arch == Architecture::tape_rnn) {
      c.n_tapes = 2;
      CHECK(model_grad_error(c, 12) <= 1e-4);
    }
  }
}

TEST_CASE("transformer matches finite differences for every encoding") {
  for (auto pe : {PositionalEncoding::none, PositionalEncoding::sin_cos, PositionalEncoding::rope,
                  PositionalEncoding::alibi, PositionalEncoding::relative_xl}) {
    CAPTURE(positional_encoding_name(pe));
    auto c = toy_config(Architecture::transformer);
    c.positional = pe;
    CHECK(model_grad_error(c, 21) <= 1e-4);
    c.causal = true;
    CHECK(model_grad_error(c, 22) <= 1e-4);
  }
}

namespace {

Matrix<double> logits_of(SequenceModel<double>& model, const SequenceBatch& sb, bool recording = false) {
  Graph<double> g(recording);
  ForwardContext<double> ctx;
  return model.forward(g, sb, ctx).value();
}

SequenceBatch fixed_batch(const std::vector<int>& tokens, std::vector<int> readouts, int input_length) {
  SequenceBatch sb;
  sb.batch = 1;
  sb.steps = static_cast<Index>(tokens.size());
  sb.tokens = tokens;
  sb.lengths = {static_cast<int>(tokens.size())};
  sb.input_lengths = {input_length};
  sb.readout_steps = std::move(readouts);
  return sb;
}

}  // namespace

TEST_CASE("recurrent cell closed forms") {
  Graph<double> g(false);
  const Index H = 3;
  auto zero_h = g.constant(Matrix<double>::Zero(2, H));
  auto x = g.constant(Matrix<double>::Zero(2, H));
  auto h = rnn_step(zero_h, x, g.constant(Matrix<double>::Zero(H, H)), g.constant(Matrix<double>::Zero(1, H)));
  CHECK(h.value().cwiseAbs().maxCoeff() == 0);

  Rng rng(1);
  auto big = rnn_step(g.constant(Matrix<double>::Constant(2, H, 5)), g.constant(Matrix<double>::Constant(2, H, 50)),
                      g.constant(glorot_uniform<double>(H, H, rng)), g.constant(Matrix<double>::Ones(1, H)));
  CHECK(big.value().cwiseAbs().maxCoeff() <= 1);

  Matrix<double> c0(2, H);
  c0 << 1, -2, 0.5, 3, 0, -1;
  LstmState<double> s{g.constant(Matrix<double>::Zero(2, H)), g.constant(c0)};
  auto next = lstm_step(s, g.constant(Matrix<double>::Zero(2, 4 * H)), g.constant(Matrix<double>::Zero(H, 4 * H)),
                        g.constant(Matrix<double>::Zero(1, 4 * H)));
  CHECK((next.c.value() - 0.5 * c0).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((next.h.value() - (0.5 * (0.5 * c0).array().tanh()).matrix()).cwiseAbs().maxCoeff() < 1e-15);

  LstmState<double> rest{g.constant(Matrix<double>::Zero(2, H)), g.constant(Matrix<double>::Zero(2, H))};
  auto still = lstm_step(rest, g.constant(Matrix<double>::Zero(2, 4 * H)), g.constant(glorot_uniform<double>(H, 4 * H, rng)),
                         g.constant(Matrix<double>::Zero(1, 4 * H)));
  CHECK(still.h.value().cwiseAbs().maxCoeff() == 0);
}

TEST_CASE("stack model with a silenced read behaves as its controller") {
  for (auto [memory, bare] : {std::pair{Architecture::stack_rnn, Architecture::rnn},
                              std::pair{Architecture::stack_lstm, Architecture::lstm}}) {
    Rng r1(3), r2(4);
    auto with_stack = make_model<double>(toy_config(memory), r1);
    auto controller = make_model<double>(toy_config(bare), r2);
    for (std::size_t i = 0; i < controller->params().size(); ++i) {
      auto& p = controller->params().at(i);
      with_stack->params()[p.name].value = p.value;
    }
    with_stack->params()["controller.read"].value.setZero();
    Rng data(5);
    SequenceBatch sb = toy_batch(3, 7, 4, data, 3);
    CHECK((logits_of(*with_stack, sb) - logits_of(*controller, sb)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("recurrent outputs do not depend on the batch slot") {
  for (auto arch : {Architecture::rnn, Architecture::lstm, Architecture::stack_rnn, Architecture::stack_lstm,
                    Architecture::tape_rnn}) {
    CAPTURE(architecture_name(arch));
    Rng rng(6);
    auto model = make_model<double>(toy_config(arch), rng);
    SequenceBatch sb = toy_batch(3, 6, 4, rng, 2);
    const Matrix<double> all = logits_of(*model, sb);
    for (Index b = 0; b < 3; ++b) {
      std::vector<int> tokens;
      for (Index t = 0; t < 6; ++t) tokens.push_back(sb.token(t, b));
      SequenceBatch single = fixed_batch(tokens, sb.readout_steps, sb.input_lengths[static_cast<std::size_t>(b)]);
      const Matrix<double> one = logits_of(*model, single);
      for (Index r = 0; r < 2; ++r) CHECK((one.row(r) - all.row(r * 3 + b)).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("forward passes are pure") {
  for (auto arch : {Architecture::lstm, Architecture::stack_rnn, Architecture::tape_rnn, Architecture::transformer}) {
    CAPTURE(architecture_name(arch));
    Rng rng(7);
    auto c = toy_config(arch);
    c.dropout = 0.1;
    auto model = make_model<double>(c, rng);
    SequenceBatch sb = toy_batch(2, 6, 4, rng, 2);
    const Matrix<double> a = logits_of(*model, sb, false);
    CHECK(logits_of(*model, sb, true) == a);
    CHECK(logits_of(*model, sb, false) == a);

    Rng d1(9), d2(9);
    Graph<double> g1, g2;
    ForwardContext<double> c1{true, &d1, nullptr}, c2{true, &d2, nullptr};
    CHECK(model->forward(g1, sb, c1).value() == model->forward(g2, sb, c2).value());
  }
}

TEST_CASE("memory action distributions stay valid") {
  for (auto arch : {Architecture::stack_rnn, Architecture::stack_lstm, Architecture::tape_rnn}) {
    CAPTURE(architecture_name(arch));
    Rng rng(8);
    auto c = toy_config(arch);
    c.n_tapes = arch == Architecture::tape_rnn ? 2 : 1;
    auto model = make_model<double>(c, rng);
    for (auto& w : {std::string("controller.input"), std::string("controller.recurrent")})
      model->params()[w].value *= 4;  // push activations away from the uniform regime
    SequenceBatch sb = toy_batch(1, 12, 4, rng, 3);
    Trace trace;
    Graph<double> g(false);
    ForwardContext<double> ctx{false, nullptr, &trace};
    model->forward(g, sb, ctx);
    REQUIRE(trace.steps.size() == 12);
    const std::size_t group = has_stack(arch) ? 3 : 5;
    for (const auto& step : trace.steps) {
      REQUIRE(step.actions.size() % group == 0);
      for (std::size_t i = 0; i < step.actions.size(); i += group) {
        double total = 0;
        for (std::size_t k = 0; k < group; ++k) {
          CHECK(step.actions[i + k] >= 0);
          total += step.actions[i + k];
        }
        CHECK(std::abs(total - 1) <= 1e-6);
      }
      if (has_tape(arch)) {
        const std::size_t cells = step.head.size() / 2;
        for (std::size_t t = 0; t < 2; ++t) {
          double mass = 0;
          for (std::size_t k = 0; k < cells; ++k) mass += step.head[t * cells + k];
          CHECK(std::abs(mass - 1) <= 1e-6);
        }
      }
    }
  }
}

TEST_CASE("attention primitives") {
  const std::vector<double> zero{0.0};
  const auto pe = sinusoid_table<double>(zero, 6);
  for (Index i = 0; i < 6; ++i) CHECK(pe(0, i) == (i % 2 == 0 ? 0.0 : 1.0));

  Graph<double> g(false);
  Rng rng(10);
  const Index T = 5, heads = 2, D = 8;
  auto q = g.constant(glorot_uniform<double>(2 * T, D, rng));
  auto rotated = rotary_embedding(q, T, heads);
  for (Index r = 0; r < 2 * T; ++r)
    for (Index h = 0; h < heads; ++h)
      CHECK(rotated.value().row(r).segment(h * 4, 4).norm() ==
            doctest::Approx(q.value().row(r).segment(h * 4, 4).norm()).epsilon(1e-12));
  CHECK(rotated.value().row(0) == q.value().row(0));

  const auto alibi = alibi_bias<double>(3, 2);
  CHECK(alibi(0, 2) == doctest::Approx(-2 * std::pow(2.0, -4.0)));
  CHECK(alibi(3 + 2, 0) == doctest::Approx(-2 * std::pow(2.0, -8.0)));
  CHECK(alibi(1, 1) == 0);

  // Two positions, one head, hand-evaluated.
  Matrix<double> Q(2, 2), K(2, 2), V(2, 2);
  Q << 1, 0, 0, 1;
  K << 1, 1, 2, 0;
  V << 1, 2, 3, 4;
  AttentionOptions<double> opt;
  opt.steps = 2;
  std::vector<Matrix<double>> weights;
  opt.weights_out = &weights;
  auto out = attention(g.constant(Q), g.constant(K), g.constant(V), opt).value();
  const double s = 1 / std::sqrt(2.0);
  const double w0 = 1 / (1 + std::exp(2 * s - s));  // row 0 scores: s, 2s
  const double w1 = 1 / (1 + std::exp(0 - s));      // row 1 scores: s, 0
  CHECK(std::abs(out(0, 0) - (w0 * 1 + (1 - w0) * 3)) < 1e-10);
  CHECK(std::abs(out(0, 1) - (w0 * 2 + (1 - w0) * 4)) < 1e-10);
  CHECK(std::abs(out(1, 0) - (w1 * 1 + (1 - w1) * 3)) < 1e-10);
  CHECK(std::abs(out(1, 1) - (w1 * 2 + (1 - w1) * 4)) < 1e-10);
  REQUIRE(weights.size() == 1);
  for (Index r = 0; r < 2; ++r) CHECK(std::abs(weights[0].row(r).sum() - 1) < 1e-12);

  opt.causal = true;
  weights.clear();
  auto causal = attention(g.constant(Q), g.constant(K), g.constant(V), opt).value();
  CHECK(std::abs(causal(0, 0) - 1) < 1e-12);
  CHECK(weights[0](0, 1) == 0);
}

TEST_CASE("encoder without positions is permutation equivariant") {
  auto c = toy_config(Architecture::transformer);
  c.input_vocab = 5;
  Rng rng(12);
  auto model = make_model<float>(c, rng);
  const std::vector<int> x{0, 1, 2, 3, 1, 4, 4};  // four input tokens then empty slots
  const std::vector<int> perm{2, 0, 3, 1};
  std::vector<int> y = x;
  for (int i = 0; i < 4; ++i) y[i] = x[perm[i]];

  std::vector<int> every(7);
  std::iota(every.begin(), every.end(), 0);
  auto run = [&](const std::vector<int>& tokens) {
    Graph<float> g(false);
    ForwardContext<float> ctx;
    return Matrix<float>(model->forward(g, fixed_batch(tokens, every, 4), ctx).value());
  };
  const Matrix<float> a = run(x), b = run(y);
  double worst = 0;
  for (int i = 0; i < 4; ++i) worst = std::max<double>(worst, (b.row(i) - a.row(perm[i])).cwiseAbs().maxCoeff());
  for (int i = 4; i < 7; ++i) worst = std::max<double>(worst, (b.row(i) - a.row(i)).cwiseAbs().maxCoeff());
  CHECK(worst <= 1e-5);
}

TEST_CASE("causal transformer ignores the future") {
  for (auto pe : {PositionalEncoding::none, PositionalEncoding::sin_cos, PositionalEncoding::rope,
                  PositionalEncoding::alibi, PositionalEncoding::relative_xl}) {
    CAPTURE(positional_encoding_name(pe));
    auto c = toy_config(Architecture::transformer);
    c.positional = pe;
    c.causal = true;
    Rng rng(13);
    auto model = make_model<double>(c, rng);
    std::vector<int> every(8);
    std::iota(every.begin(), every.end(), 0);
    const std::vector<int> x{0, 1, 2, 3, 0, 1, 2, 3};
    std::vector<int> y = x;
    y[5] = 3;
    y[7] = 0;
    const Matrix<double> a = logits_of(*model, fixed_batch(x, every, 4));
    const Matrix<double> b = logits_of(*model, fixed_batch(y, every, 4));
    CHECK(a.rows() == 8);
    CHECK(a.cols() == c.output_vocab);
    CHECK((a.topRows(5) - b.topRows(5)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((a.row(5) - b.row(5)).cwiseAbs().maxCoeff() > 1e-9);
  }
}

#include "chomsky/models.hpp"

#include <string>

namespace chomsky {

namespace {

std::string block_name(int l, const char* what) { return "block" + std::to_string(l) + "." + what; }

template <typename Scalar>
void add_layer_norm(ParamStore<Scalar>& p, const std::string& prefix, Index d) {
  p.add(prefix + ".gain", Matrix<Scalar>::Ones(1, d));
  p.add(prefix + ".bias", Matrix<Scalar>::Zero(1, d));
}

template <typename Scalar>
Var<Scalar> apply_layer_norm(Graph<Scalar>& g, ParamStore<Scalar>& p, const std::string& prefix, Var<Scalar> x) {
  return layer_norm(x, g.param(p, prefix + ".gain"), g.param(p, prefix + ".bias"));
}

}  // namespace

template <typename Scalar>
TransformerModel<Scalar>::TransformerModel(ModelConfig config, Rng& rng) : SequenceModel<Scalar>(std::move(config)) {
  const ModelConfig& c = this->config_;
  if (c.arch != Architecture::transformer) throw InvalidInput("TransformerModel: wrong architecture");
  if (c.d_model < 2 || c.heads < 1 || c.d_model % c.heads != 0)
    throw InvalidInput("TransformerModel: d_model must be >= 2 and divisible by heads");
  if (c.positional == PositionalEncoding::rope && (c.d_model / c.heads) % 2 != 0)
    throw InvalidInput("TransformerModel: rotary encoding needs an even head width");
  if (c.blocks < 1 || c.ffn_multiplier < 1 || c.input_vocab < 1 || c.output_vocab < 1)
    throw InvalidInput("TransformerModel: bad sizes");
  if (c.dropout < 0 || c.dropout >= 1) throw InvalidInput("TransformerModel: dropout must be in [0, 1)");
  const Index d = c.d_model, f = static_cast<Index>(c.ffn_multiplier) * d;
  auto& p = this->params_;
  p.add("embed", glorot_uniform<Scalar>(c.input_vocab, d, rng));
  for (int l = 0; l < c.blocks; ++l) {
    add_layer_norm(p, block_name(l, "ln1"), d);
    p.add(block_name(l, "wq"), glorot_uniform<Scalar>(d, d, rng));
    p.add(block_name(l, "wk"), glorot_uniform<Scalar>(d, d, rng));
    p.add(block_name(l, "wv"), glorot_uniform<Scalar>(d, d, rng));
    p.add(block_name(l, "wo"), glorot_uniform<Scalar>(d, d, rng));
    if (c.positional == PositionalEncoding::relative_xl) {
      p.add(block_name(l, "wr"), glorot_uniform<Scalar>(d, d, rng));
      p.add(block_name(l, "u"), Matrix<Scalar>::Zero(1, d));
      p.add(block_name(l, "v"), Matrix<Scalar>::Zero(1, d));
    }
    add_layer_norm(p, block_name(l, "ln2"), d);
    p.add(block_name(l, "ffn1.weight"), glorot_uniform<Scalar>(d, f, rng));
    p.add(block_name(l, "ffn1.bias"), Matrix<Scalar>::Zero(1, f));
    p.add(block_name(l, "ffn2.weight"), glorot_uniform<Scalar>(f, d, rng));
    p.add(block_name(l, "ffn2.bias"), Matrix<Scalar>::Zero(1, d));
  }
  add_layer_norm(p, std::string("final_ln"), d);
  p.add("readout.weight", glorot_uniform<Scalar>(d, c.output_vocab, rng));
  p.add("readout.bias", Matrix<Scalar>::Zero(1, c.output_vocab));
}

// Rows inside the model are batch-major (b * T + t); readout rows are returned
// time-major like the recurrent models.
template <typename Scalar>
Var<Scalar> TransformerModel<Scalar>::forward(Graph<Scalar>& g, const SequenceBatch& batch,
                                              ForwardContext<Scalar>& ctx) {
  const ModelConfig& c = this->config_;
  auto& p = this->params_;
  const Index B = batch.batch, T = batch.steps, d = c.d_model;
  if (static_cast<Index>(batch.tokens.size()) != B * T) throw InvalidInput("forward: token count != batch * steps");
  if (batch.readout_steps.empty()) throw InvalidInput("forward: no readout steps");
  if (!batch.lengths.empty() && static_cast<Index>(batch.lengths.size()) != B)
    throw InvalidInput("forward: one length per sequence required");

  std::vector<int> rows(B * T);
  for (Index b = 0; b < B; ++b)
    for (Index t = 0; t < T; ++t) rows[b * T + t] = batch.token(t, b);
  Var<Scalar> x = gather_rows(g.param(p, "embed"), std::span<const int>(rows));

  if (c.positional == PositionalEncoding::sin_cos) {
    std::vector<double> positions(T);
    for (Index t = 0; t < T; ++t) positions[t] = static_cast<double>(t);
    Matrix<Scalar> table = sinusoid_table<Scalar>(positions, d);
    Matrix<Scalar> tiled(B * T, d);
    for (Index b = 0; b < B; ++b) tiled.middleRows(b * T, T) = table;
    x = add(x, g.constant(std::move(tiled)));
  }

  Matrix<Scalar> alibi;
  if (c.positional == PositionalEncoding::alibi) alibi = alibi_bias<Scalar>(T, c.heads);
  Var<Scalar> relative_table;
  if (c.positional == PositionalEncoding::relative_xl) {
    std::vector<double> offsets(2 * T - 1);
    for (Index r = 0; r < 2 * T - 1; ++r) offsets[r] = static_cast<double>(r - (T - 1));
    relative_table = g.constant(sinusoid_table<Scalar>(offsets, d));
  }

  const bool drop = ctx.training && c.dropout > 0;
  if (drop && !ctx.dropout_rng) throw InvalidInput("forward: training with dropout needs an rng");
  const Scalar rate = drop ? static_cast<Scalar>(c.dropout) : Scalar(0);

  for (int l = 0; l < c.blocks; ++l) {
    Var<Scalar> h = apply_layer_norm(g, p, block_name(l, "ln1"), x);
    Var<Scalar> q = matmul(h, g.param(p, block_name(l, "wq")));
    Var<Scalar> k = matmul(h, g.param(p, block_name(l, "wk")));
    Var<Scalar> v = matmul(h, g.param(p, block_name(l, "wv")));
    if (c.positional == PositionalEncoding::rope) {
      q = rotary_embedding(q, T, c.heads);
      k = rotary_embedding(k, T, c.heads);
    }
    AttentionOptions<Scalar> opt;
    opt.batch = B;
    opt.steps = T;
    opt.heads = c.heads;
    opt.causal = c.causal;
    opt.lengths = batch.lengths;
    if (c.positional == PositionalEncoding::alibi) opt.bias = &alibi;
    RelativeTerms<Scalar> rel;
    if (c.positional == PositionalEncoding::relative_xl) {
      rel.content_bias = g.param(p, block_name(l, "u"));
      rel.position_bias = g.param(p, block_name(l, "v"));
      rel.relative = matmul(relative_table, g.param(p, block_name(l, "wr")));
      opt.relative = &rel;
    }
    opt.dropout = rate;
    opt.rng = ctx.dropout_rng;
    Var<Scalar> a = matmul(attention(q, k, v, opt), g.param(p, block_name(l, "wo")));
    if (drop) a = dropout(a, rate, *ctx.dropout_rng);
    x = add(x, a);

    h = apply_layer_norm(g, p, block_name(l, "ln2"), x);
    h = relu(add(matmul(h, g.param(p, block_name(l, "ffn1.weight"))), g.param(p, block_name(l, "ffn1.bias"))));
    h = add(matmul(h, g.param(p, block_name(l, "ffn2.weight"))), g.param(p, block_name(l, "ffn2.bias")));
    if (drop) h = dropout(h, rate, *ctx.dropout_rng);
    x = add(x, h);

    if (ctx.trace) ctx.trace->layer_activations.push_back(x.value().topRows(T).template cast<double>());
  }

  x = apply_layer_norm(g, p, std::string("final_ln"), x);
  std::vector<int> readout;
  readout.reserve(batch.readout_steps.size() * B);
  for (int t : batch.readout_steps) {
    if (t < 0 || t >= T) throw InvalidInput("forward: readout step beyond sequence");
    for (Index b = 0; b < B; ++b) readout.push_back(static_cast<int>(b * T + t));
  }
  Var<Scalar> picked = gather_rows(x, std::span<const int>(readout));
  Var<Scalar> logits = add(matmul(picked, g.param(p, "readout.weight")), g.param(p, "readout.bias"));

  if (ctx.trace) {
    ctx.trace->architecture = std::string(architecture_name(c.arch));
    std::size_t next = 0;
    for (Index t = 0; t < T; ++t) {
      TraceStep rec;
      rec.token = batch.token(t, 0);
      rec.hidden.resize(d);
      for (Index j = 0; j < d; ++j) rec.hidden[j] = static_cast<double>(x.value()(t, j));
      if (next < batch.readout_steps.size() && batch.readout_steps[next] == t) {
        const auto& L = logits.value();
        for (Index j = 0; j < L.cols(); ++j) rec.logits.push_back(static_cast<double>(L(next * B, j)));
        ++next;
      }
      ctx.trace->steps.push_back(std::move(rec));
    }
  }
  return logits;
}

template class TransformerModel<float>;
template class TransformerModel<double>;

}  // namespace chomsky

#include "chomsky/models.hpp"

#include <algorithm>
#include <string>

namespace chomsky {

template <typename Scalar>
Var<Scalar> rnn_step(Var<Scalar> h, Var<Scalar> input_projection, Var<Scalar> recurrent, Var<Scalar> bias) {
  return tanh(add(add(input_projection, matmul(h, recurrent)), bias));
}

template <typename Scalar>
LstmState<Scalar> lstm_step(LstmState<Scalar> state, Var<Scalar> input_projection, Var<Scalar> recurrent,
                            Var<Scalar> bias) {
  const Index hidden = state.h.cols();
  if (recurrent.cols() != 4 * hidden) throw InvalidInput("lstm_step: recurrent weights must be H x 4H");
  Var<Scalar> pre = add(add(input_projection, matmul(state.h, recurrent)), bias);
  Var<Scalar> i = sigmoid(slice_cols(pre, 0, hidden));
  Var<Scalar> f = sigmoid(slice_cols(pre, hidden, hidden));
  Var<Scalar> g = tanh(slice_cols(pre, 2 * hidden, hidden));
  Var<Scalar> o = sigmoid(slice_cols(pre, 3 * hidden, hidden));
  Var<Scalar> c = add(mul(f, state.c), mul(i, g));
  return {mul(o, tanh(c)), c};
}

template <typename Scalar>
RecurrentState<Scalar> memory_step(const ModelConfig& config, const RecurrentWeights<Scalar>& w,
                                   const RecurrentState<Scalar>& state, Var<Scalar> input_projection,
                                   std::span<const int> jumps, MemoryStepInfo<Scalar>* info) {
  const Index width = config.cell_width;
  const bool stack = has_stack(config.arch);
  const bool tape = has_tape(config.arch);
  if (!stack && !tape) throw InvalidInput("memory_step: architecture has no external memory");

  std::vector<Var<Scalar>> reads;
  if (stack) reads.push_back(stack_read(state.stack, width));
  if (tape)
    for (std::size_t i = 0; i < state.tape_cells.size(); ++i)
      reads.push_back(tape_read(state.tape_cells[i], state.tape_heads[i]));
  Var<Scalar> read = reads.size() == 1 ? reads[0] : concat_cols<Scalar>(reads);
  Var<Scalar> projected = add(input_projection, matmul(read, w.read));

  RecurrentState<Scalar> next;
  if (uses_lstm_controller(config.arch)) {
    auto s = lstm_step<Scalar>({state.h, state.c}, projected, w.recurrent, w.bias);
    next.h = s.h;
    next.c = s.c;
  } else {
    next.h = rnn_step(state.h, projected, w.recurrent, w.bias);
  }

  std::size_t head_index = 0;
  auto heads_for = [&](std::size_t i) {
    Var<Scalar> actions = softmax(add(matmul(next.h, w.action_weight[i]), w.action_bias[i]));
    Var<Scalar> value = tanh(add(matmul(next.h, w.value_weight[i]), w.value_bias[i]));
    if (info) info->actions.push_back(actions);
    return std::pair{actions, value};
  };
  if (stack) {
    auto [actions, value] = heads_for(head_index++);
    next.stack = stack_update(state.stack, actions, value, width);
  }
  if (tape) {
    for (std::size_t i = 0; i < state.tape_cells.size(); ++i) {
      auto [actions, value] = heads_for(head_index++);
      next.tape_cells.push_back(tape_write(state.tape_cells[i], state.tape_heads[i], actions, value));
      next.tape_heads.push_back(tape_move(state.tape_heads[i], actions, jumps));
    }
  }
  return next;
}

template <typename Scalar>
RecurrentState<Scalar> stack_model_step(const ModelConfig& config, const RecurrentWeights<Scalar>& w,
                                        const RecurrentState<Scalar>& state, Var<Scalar> input_projection,
                                        MemoryStepInfo<Scalar>* info) {
  if (!has_stack(config.arch)) throw InvalidInput("stack_model_step: not a stack architecture");
  return memory_step(config, w, state, input_projection, {}, info);
}

template <typename Scalar>
RecurrentState<Scalar> tape_model_step(const ModelConfig& config, const RecurrentWeights<Scalar>& w,
                                       const RecurrentState<Scalar>& state, Var<Scalar> input_projection,
                                       std::span<const int> jumps, MemoryStepInfo<Scalar>* info) {
  if (!has_tape(config.arch)) throw InvalidInput("tape_model_step: not a tape architecture");
  return memory_step(config, w, state, input_projection, jumps, info);
}

// ---- RecurrentModel -----------------------------------------------------------

namespace {

int memory_count(const ModelConfig& c) {
  if (has_stack(c.arch)) return 1;
  if (has_tape(c.arch)) return c.n_tapes;
  return 0;
}

std::string memory_prefix(const ModelConfig& c, int i) {
  return has_stack(c.arch) ? std::string("stack") : "tape" + std::to_string(i);
}

template <typename Scalar>
std::vector<double> row_as_vector(const Matrix<Scalar>& m, Index row) {
  std::vector<double> out(m.cols());
  for (Index j = 0; j < m.cols(); ++j) out[j] = static_cast<double>(m(row, j));
  return out;
}

}  // namespace

template <typename Scalar>
RecurrentModel<Scalar>::RecurrentModel(ModelConfig config, Rng& rng) : SequenceModel<Scalar>(std::move(config)) {
  const ModelConfig& c = this->config_;
  if (!is_recurrent(c.arch)) throw InvalidInput("RecurrentModel: not a recurrent architecture");
  if (c.hidden < 1 || c.input_vocab < 1 || c.output_vocab < 1) throw InvalidInput("RecurrentModel: bad sizes");
  if (has_tape(c.arch) && c.n_tapes < 1) throw InvalidInput("RecurrentModel: need at least one tape");
  const Index h = c.hidden;
  const Index gates = uses_lstm_controller(c.arch) ? 4 * h : h;
  auto& p = this->params_;
  p.add("controller.input", glorot_uniform<Scalar>(c.input_vocab, gates, rng));
  const int memories = memory_count(c);
  if (memories > 0) p.add("controller.read", glorot_uniform<Scalar>(memories * c.cell_width, gates, rng));
  p.add("controller.recurrent", glorot_uniform<Scalar>(h, gates, rng));
  Matrix<Scalar> bias = Matrix<Scalar>::Zero(1, gates);
  if (uses_lstm_controller(c.arch)) bias.middleCols(h, h).setConstant(Scalar(1));
  p.add("controller.bias", std::move(bias));
  const Index actions = has_stack(c.arch) ? kStackActionCount : kTapeActionCount;
  for (int i = 0; i < memories; ++i) {
    const std::string prefix = memory_prefix(c, i);
    p.add(prefix + ".action.weight", glorot_uniform<Scalar>(h, actions, rng));
    p.add(prefix + ".action.bias", Matrix<Scalar>::Zero(1, actions));
    p.add(prefix + ".value.weight", glorot_uniform<Scalar>(h, c.cell_width, rng));
    p.add(prefix + ".value.bias", Matrix<Scalar>::Zero(1, c.cell_width));
  }
  p.add("readout.weight", glorot_uniform<Scalar>(h, c.output_vocab, rng));
  p.add("readout.bias", Matrix<Scalar>::Zero(1, c.output_vocab));
}

template <typename Scalar>
RecurrentWeights<Scalar> RecurrentModel<Scalar>::bind(Graph<Scalar>& g) {
  const ModelConfig& c = this->config_;
  auto& p = this->params_;
  RecurrentWeights<Scalar> w;
  w.input = g.param(p, "controller.input");
  if (memory_count(c) > 0) w.read = g.param(p, "controller.read");
  w.recurrent = g.param(p, "controller.recurrent");
  w.bias = g.param(p, "controller.bias");
  w.readout_weight = g.param(p, "readout.weight");
  w.readout_bias = g.param(p, "readout.bias");
  for (int i = 0; i < memory_count(c); ++i) {
    const std::string prefix = memory_prefix(c, i);
    w.action_weight.push_back(g.param(p, prefix + ".action.weight"));
    w.action_bias.push_back(g.param(p, prefix + ".action.bias"));
    w.value_weight.push_back(g.param(p, prefix + ".value.weight"));
    w.value_bias.push_back(g.param(p, prefix + ".value.bias"));
  }
  return w;
}

// Stack rows below the sequence length can never reach the top within the
// sequence, so the stack is truncated to min(capacity, steps) rows.
template <typename Scalar>
RecurrentState<Scalar> RecurrentModel<Scalar>::initial_state(Graph<Scalar>& g, Index batch, Index steps) const {
  const ModelConfig& c = this->config_;
  RecurrentState<Scalar> s;
  s.h = g.constant(Matrix<Scalar>::Zero(batch, c.hidden));
  if (uses_lstm_controller(c.arch)) s.c = g.constant(Matrix<Scalar>::Zero(batch, c.hidden));
  if (has_stack(c.arch)) {
    const Index depth = std::max<Index>(1, std::min(c.stack_depth, steps));
    s.stack = g.constant(Matrix<Scalar>::Zero(batch, depth * c.cell_width));
  }
  if (has_tape(c.arch)) {
    for (int i = 0; i < c.n_tapes; ++i) {
      s.tape_cells.push_back(g.constant(Matrix<Scalar>::Zero(batch, c.tape_cells * c.cell_width)));
      Matrix<Scalar> head = Matrix<Scalar>::Zero(batch, c.tape_cells);
      head.col(0).setOnes();
      s.tape_heads.push_back(g.constant(std::move(head)));
    }
  }
  return s;
}

template <typename Scalar>
Var<Scalar> RecurrentModel<Scalar>::forward(Graph<Scalar>& g, const SequenceBatch& batch,
                                            ForwardContext<Scalar>& ctx) {
  const ModelConfig& c = this->config_;
  const Index B = batch.batch, T = batch.steps;
  if (static_cast<Index>(batch.tokens.size()) != B * T) throw InvalidInput("forward: token count != batch * steps");
  if (batch.readout_steps.empty()) throw InvalidInput("forward: no readout steps");
  if (has_tape(c.arch) && static_cast<Index>(batch.input_lengths.size()) != B)
    throw InvalidInput("forward: tape models need per-sequence input lengths");

  RecurrentWeights<Scalar> w = bind(g);
  RecurrentState<Scalar> state = initial_state(g, B, T);
  std::vector<Var<Scalar>> logits;
  std::vector<int> jumps;
  if (has_tape(c.arch))
    for (int l : batch.input_lengths) jumps.push_back(std::max(1, l));

  std::size_t next_readout = 0;
  for (Index t = 0; t < T; ++t) {
    std::span<const int> tokens(batch.tokens.data() + t * B, static_cast<std::size_t>(B));
    Var<Scalar> x = gather_rows(w.input, tokens);
    MemoryStepInfo<Scalar> info;
    if (has_stack(c.arch) || has_tape(c.arch)) {
      state = memory_step(c, w, state, x, jumps, ctx.trace ? &info : nullptr);
    } else if (uses_lstm_controller(c.arch)) {
      auto s = lstm_step<Scalar>({state.h, state.c}, x, w.recurrent, w.bias);
      state.h = s.h;
      state.c = s.c;
    } else {
      state.h = rnn_step(state.h, x, w.recurrent, w.bias);
    }

    Var<Scalar> step_logits;
    if (next_readout < batch.readout_steps.size() && batch.readout_steps[next_readout] == t) {
      step_logits = add(matmul(state.h, w.readout_weight), w.readout_bias);
      logits.push_back(step_logits);
      ++next_readout;
    }

    if (ctx.trace) {
      TraceStep rec;
      rec.token = tokens[0];
      rec.hidden = row_as_vector(state.h.value(), 0);
      for (const auto& a : info.actions) {
        auto row = row_as_vector(a.value(), 0);
        rec.actions.insert(rec.actions.end(), row.begin(), row.end());
      }
      if (has_stack(c.arch)) {
        const auto& s = state.stack.value();
        rec.memory = Eigen::Map<const Matrix<Scalar>>(s.data(), s.cols() / c.cell_width, c.cell_width).template cast<double>();
      }
      if (has_tape(c.arch)) {
        rec.memory.resize(c.n_tapes * c.tape_cells, c.cell_width);
        for (int i = 0; i < c.n_tapes; ++i) {
          const auto& cells = state.tape_cells[i].value();
          rec.memory.middleRows(i * c.tape_cells, c.tape_cells) =
              Eigen::Map<const Matrix<Scalar>>(cells.data(), c.tape_cells, c.cell_width).template cast<double>();
          auto head = row_as_vector(state.tape_heads[i].value(), 0);
          rec.head.insert(rec.head.end(), head.begin(), head.end());
        }
      }
      if (step_logits.valid()) rec.logits = row_as_vector(step_logits.value(), 0);
      ctx.trace->steps.push_back(std::move(rec));
    }
  }
  if (next_readout != batch.readout_steps.size()) throw InvalidInput("forward: readout step beyond sequence");
  if (ctx.trace) ctx.trace->architecture = std::string(architecture_name(c.arch));
  return logits.size() == 1 ? logits[0] : concat_rows<Scalar>(logits);
}

#define CHOMSKY_INSTANTIATE_RECURRENT(S)                                                                        \
  template Var<S> rnn_step(Var<S>, Var<S>, Var<S>, Var<S>);                                                     \
  template LstmState<S> lstm_step(LstmState<S>, Var<S>, Var<S>, Var<S>);                                        \
  template RecurrentState<S> memory_step(const ModelConfig&, const RecurrentWeights<S>&, const RecurrentState<S>&, \
                                         Var<S>, std::span<const int>, MemoryStepInfo<S>*);                     \
  template RecurrentState<S> stack_model_step(const ModelConfig&, const RecurrentWeights<S>&,                   \
                                              const RecurrentState<S>&, Var<S>, MemoryStepInfo<S>*);            \
  template RecurrentState<S> tape_model_step(const ModelConfig&, const RecurrentWeights<S>&,                    \
                                             const RecurrentState<S>&, Var<S>, std::span<const int>,            \
                                             MemoryStepInfo<S>*);                                               \
  template class RecurrentModel<S>;

CHOMSKY_INSTANTIATE_RECURRENT(float)
CHOMSKY_INSTANTIATE_RECURRENT(double)

}  // namespace chomsky

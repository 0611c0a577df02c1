#pragma once

#include "chomsky/autodiff.hpp"
#include "chomsky/memory.hpp"
#include "chomsky/trace.hpp"

#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace chomsky {

enum class Architecture { rnn, lstm, stack_rnn, stack_lstm, tape_rnn, transformer };
enum class PositionalEncoding { none, sin_cos, rope, alibi, relative_xl };

std::string_view architecture_name(Architecture arch);
std::optional<Architecture> parse_architecture(std::string_view name);
std::string_view positional_encoding_name(PositionalEncoding pe);
std::optional<PositionalEncoding> parse_positional_encoding(std::string_view name);

bool has_stack(Architecture arch);
bool has_tape(Architecture arch);
bool uses_lstm_controller(Architecture arch);
bool is_recurrent(Architecture arch);

struct ModelConfig {
  Architecture arch = Architecture::rnn;
  int input_vocab = 0;
  int output_vocab = 0;
  int hidden = 256;
  int cell_width = static_cast<int>(kCellWidth);
  Index stack_depth = kTrainingStackDepth;
  Index tape_cells = kTrainingTapeCells;
  int n_tapes = 1;
  int blocks = 5;
  int d_model = 64;
  int heads = 8;
  int ffn_multiplier = 4;
  double dropout = 0.1;
  PositionalEncoding positional = PositionalEncoding::none;
  bool causal = false;
};

// A right-padded batch laid out time-major: entry (t, b) lives at t * batch + b.
struct SequenceBatch {
  Index batch = 0;
  Index steps = 0;
  std::vector<int> tokens;
  std::vector<int> lengths;        // unpadded stream length per sequence
  std::vector<int> input_lengths;  // l per sequence (tape jump distance)
  // Time indices at which logits are produced, ascending.
  std::vector<int> readout_steps;

  int token(Index t, Index b) const { return tokens[t * batch + b]; }
};

template <typename Scalar>
struct ForwardContext {
  bool training = false;
  Rng* dropout_rng = nullptr;
  Trace* trace = nullptr;  // records batch row 0
};

// ---- recurrent building blocks ---------------------------------------------

// h' = tanh(h W_h + x W_x + b), with x W_x supplied as `input_projection`.
template <typename Scalar>
Var<Scalar> rnn_step(Var<Scalar> h, Var<Scalar> input_projection, Var<Scalar> recurrent, Var<Scalar> bias);

template <typename Scalar>
struct LstmState {
  Var<Scalar> h;
  Var<Scalar> c;
};

// Gate blocks in the 4H pre-activation are ordered input, forget, candidate, output.
template <typename Scalar>
LstmState<Scalar> lstm_step(LstmState<Scalar> state, Var<Scalar> input_projection, Var<Scalar> recurrent,
                            Var<Scalar> bias);

// Graph-bound handles to a recurrent model's parameters.
template <typename Scalar>
struct RecurrentWeights {
  Var<Scalar> input;      // vocab x G
  Var<Scalar> read;       // (memories * width) x G, memory models only
  Var<Scalar> recurrent;  // H x G
  Var<Scalar> bias;       // 1 x G
  Var<Scalar> readout_weight, readout_bias;
  std::vector<Var<Scalar>> action_weight, action_bias, value_weight, value_bias;  // one per memory
};

template <typename Scalar>
struct RecurrentState {
  Var<Scalar> h;
  Var<Scalar> c;  // LSTM controllers only
  Var<Scalar> stack;
  std::vector<Var<Scalar>> tape_cells;
  std::vector<Var<Scalar>> tape_heads;
};

// Actions chosen during one memory step, kept for traces and tests.
template <typename Scalar>
struct MemoryStepInfo {
  std::vector<Var<Scalar>> actions;
};

// One controller step with memory access: reads the current memory, runs the
// controller on [x || reads], then applies the softmax action and tanh value heads.
template <typename Scalar>
RecurrentState<Scalar> memory_step(const ModelConfig& config, const RecurrentWeights<Scalar>& w,
                                   const RecurrentState<Scalar>& state, Var<Scalar> input_projection,
                                   std::span<const int> jumps, MemoryStepInfo<Scalar>* info = nullptr);

template <typename Scalar>
RecurrentState<Scalar> stack_model_step(const ModelConfig& config, const RecurrentWeights<Scalar>& w,
                                        const RecurrentState<Scalar>& state, Var<Scalar> input_projection,
                                        MemoryStepInfo<Scalar>* info = nullptr);

template <typename Scalar>
RecurrentState<Scalar> tape_model_step(const ModelConfig& config, const RecurrentWeights<Scalar>& w,
                                       const RecurrentState<Scalar>& state, Var<Scalar> input_projection,
                                       std::span<const int> jumps, MemoryStepInfo<Scalar>* info = nullptr);

// ---- attention ----------------------------------------------------------------

template <typename Scalar>
struct RelativeTerms {
  Var<Scalar> content_bias;   // u, 1 x D
  Var<Scalar> position_bias;  // v, 1 x D
  Var<Scalar> relative;       // (2T-1) x D, row (i - j) + T - 1
};

template <typename Scalar>
struct AttentionOptions {
  Index batch = 1;
  Index steps = 1;
  Index heads = 1;
  bool causal = false;
  std::span<const int> lengths;            // valid keys per sequence; empty = all
  const Matrix<Scalar>* bias = nullptr;    // (heads*T) x T additive, constant
  const RelativeTerms<Scalar>* relative = nullptr;
  Scalar dropout = 0;
  Rng* rng = nullptr;
  std::vector<Matrix<Scalar>>* weights_out = nullptr;  // per (batch, head) attention rows
};

// q, k, v: (B*T) x D laid out batch-major. Per head: softmax(Q K^T / sqrt(d_head)
// + bias + masks) V, heads concatenated along columns.
template <typename Scalar>
Var<Scalar> attention(Var<Scalar> q, Var<Scalar> k, Var<Scalar> v, const AttentionOptions<Scalar>& options);

// Rotates (2i, 2i+1) coordinate pairs in each head by angle p * 10000^(-2i/d_head),
// p = row mod steps.
template <typename Scalar>
Var<Scalar> rotary_embedding(Var<Scalar> x, Index steps, Index heads);

// PE(p, 2i) = sin(p / 10000^(2i/d)), PE(p, 2i+1) = cos(same).
template <typename Scalar>
Matrix<Scalar> sinusoid_table(std::span<const double> positions, Index dim);

// -s_h |i - j| with s_h = 2^(-8h/H), h = 1..H; stacked (H*T) x T.
template <typename Scalar>
Matrix<Scalar> alibi_bias(Index steps, Index heads);

// ---- models -----------------------------------------------------------------

template <typename Scalar>
class SequenceModel {
 public:
  explicit SequenceModel(ModelConfig config) : config_(std::move(config)) {}
  virtual ~SequenceModel() = default;

  const ModelConfig& config() const { return config_; }
  ParamStore<Scalar>& params() { return params_; }
  const ParamStore<Scalar>& params() const { return params_; }

  // Logits for every readout step, rows ordered (readout index, batch row).
  virtual Var<Scalar> forward(Graph<Scalar>& g, const SequenceBatch& batch, ForwardContext<Scalar>& ctx) = 0;

  // Enlarges external memories for longer evaluation sequences; never shrinks.
  void grow_memory(Index stack_depth, Index tape_cells);

 protected:
  ModelConfig config_;
  ParamStore<Scalar> params_;
};

template <typename Scalar>
class RecurrentModel final : public SequenceModel<Scalar> {
 public:
  RecurrentModel(ModelConfig config, Rng& init_rng);
  Var<Scalar> forward(Graph<Scalar>& g, const SequenceBatch& batch, ForwardContext<Scalar>& ctx) override;

  RecurrentWeights<Scalar> bind(Graph<Scalar>& g);
  RecurrentState<Scalar> initial_state(Graph<Scalar>& g, Index batch, Index steps) const;
};

template <typename Scalar>
class TransformerModel final : public SequenceModel<Scalar> {
 public:
  TransformerModel(ModelConfig config, Rng& init_rng);
  Var<Scalar> forward(Graph<Scalar>& g, const SequenceBatch& batch, ForwardContext<Scalar>& ctx) override;
};

template <typename Scalar>
std::unique_ptr<SequenceModel<Scalar>> make_model(const ModelConfig& config, Rng& init_rng);

}  // namespace chomsky

#include "chomsky/models.hpp"

#include <algorithm>
#include <array>
#include <utility>

namespace chomsky {

namespace {

constexpr std::array<std::pair<Architecture, std::string_view>, 6> kArchitectureNames{{
    {Architecture::rnn, "rnn"},
    {Architecture::lstm, "lstm"},
    {Architecture::stack_rnn, "stack_rnn"},
    {Architecture::stack_lstm, "stack_lstm"},
    {Architecture::tape_rnn, "tape_rnn"},
    {Architecture::transformer, "transformer"},
}};

constexpr std::array<std::pair<PositionalEncoding, std::string_view>, 5> kEncodingNames{{
    {PositionalEncoding::none, "none"},
    {PositionalEncoding::sin_cos, "sin_cos"},
    {PositionalEncoding::rope, "rope"},
    {PositionalEncoding::alibi, "alibi"},
    {PositionalEncoding::relative_xl, "relative_xl"},
}};

template <typename E, std::size_t N>
std::string_view name_of(const std::array<std::pair<E, std::string_view>, N>& table, E value) {
  for (const auto& [e, n] : table)
    if (e == value) return n;
  return "unknown";
}

template <typename E, std::size_t N>
std::optional<E> parse_name(const std::array<std::pair<E, std::string_view>, N>& table, std::string_view name) {
  for (const auto& [e, n] : table)
    if (n == name) return e;
  return std::nullopt;
}

}  // namespace

std::string_view architecture_name(Architecture arch) { return name_of(kArchitectureNames, arch); }
std::optional<Architecture> parse_architecture(std::string_view name) { return parse_name(kArchitectureNames, name); }
std::string_view positional_encoding_name(PositionalEncoding pe) { return name_of(kEncodingNames, pe); }
std::optional<PositionalEncoding> parse_positional_encoding(std::string_view name) {
  return parse_name(kEncodingNames, name);
}

bool has_stack(Architecture a) { return a == Architecture::stack_rnn || a == Architecture::stack_lstm; }
bool has_tape(Architecture a) { return a == Architecture::tape_rnn; }
bool uses_lstm_controller(Architecture a) { return a == Architecture::lstm || a == Architecture::stack_lstm; }
bool is_recurrent(Architecture a) { return a != Architecture::transformer; }

// Memory sizes only enter through the initial state, so growing needs no
// parameter surgery.
template <typename Scalar>
void SequenceModel<Scalar>::grow_memory(Index stack_depth, Index tape_cells) {
  config_.stack_depth = std::max(config_.stack_depth, stack_depth);
  config_.tape_cells = std::max(config_.tape_cells, tape_cells);
}

template <typename Scalar>
std::unique_ptr<SequenceModel<Scalar>> make_model(const ModelConfig& config, Rng& init_rng) {
  if (is_recurrent(config.arch)) return std::make_unique<RecurrentModel<Scalar>>(config, init_rng);
  return std::make_unique<TransformerModel<Scalar>>(config, init_rng);
}

template class SequenceModel<float>;
template class SequenceModel<double>;
template std::unique_ptr<SequenceModel<float>> make_model(const ModelConfig&, Rng&);
template std::unique_ptr<SequenceModel<double>> make_model(const ModelConfig&, Rng&);

}  // namespace chomsky

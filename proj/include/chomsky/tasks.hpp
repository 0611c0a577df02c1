#pragma once

#include "chomsky/autodiff.hpp"

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace chomsky {

using Tokens = std::vector<int>;

enum class TaskId {
  even_pairs,
  mod_arith_simple,
  parity_check,
  cycle_navigation,
  stack_manipulation,
  reverse_string,
  mod_arith_brackets,
  solve_equation,
  duplicate_string,
  missing_duplicate,
  odds_first,
  binary_addition,
  binary_multiplication,
  compute_sqrt,
  bucket_sort,
};

enum class Level { regular, deterministic_context_free, context_sensitive };

inline constexpr std::size_t kTaskCount = 15;

struct TaskSpec {
  TaskId id;
  std::string_view name;
  Level level;
  std::vector<std::string> input_symbols;
  std::vector<std::string> output_symbols;
  double baseline;  // accuracy of uniform guessing
  int min_length;   // smallest feasible requested length
  std::string_view example_input;
  std::string_view example_output;

  int input_size() const { return static_cast<int>(input_symbols.size()); }
  int output_size() const { return static_cast<int>(output_symbols.size()); }
};

const std::array<TaskId, kTaskCount>& all_tasks();
const TaskSpec& task_spec(TaskId task);
std::optional<TaskId> parse_task(std::string_view name);
std::string_view level_name(Level level);
std::string comma_separated_task_names();

// Expression tokens shared by the three modular-arithmetic tasks: the digits
// 0..4 code themselves.
namespace expr {
inline constexpr int kPlus = 5;
inline constexpr int kMinus = 6;
inline constexpr int kTimes = 7;
inline constexpr int kOpen = 8;
inline constexpr int kClose = 9;
inline constexpr int kVariable = 10;
inline constexpr int kEquals = 11;
}  // namespace expr

namespace stack_token {
inline constexpr int kA = 0;
inline constexpr int kB = 1;
inline constexpr int kPop = 2;
inline constexpr int kPushA = 3;
inline constexpr int kPushB = 4;
}  // namespace stack_token

inline constexpr int kMissingPlaceholder = 2;
inline constexpr int kBinaryOperator = 2;

struct TaskSample {
  TaskId task;
  Tokens input;
  Tokens target;
  int requested_length;  // l as drawn by the caller
  int length;            // l after the task's feasibility adjustment
};

// Length the sampler actually produces for a requested length.
int adjusted_length(TaskId task, int length);

Tokens sample_input(TaskId task, Rng& rng, int length);
Tokens ground_truth(TaskId task, std::span<const int> input);
TaskSample sample(TaskId task, Rng& rng, int length);

// Evaluates an expression modulo 5. Multiplication binds tighter than + and -;
// a leading '-' at the start of a bracket level negates the first term.
int eval_mod_expr(std::span<const int> tokens, std::optional<int> z_value = std::nullopt);

// Random well-formed expression of exactly adjusted length. Without brackets
// the length is rounded up to odd; with brackets length 2 is raised to 3.
Tokens sample_mod_expression(Rng& rng, int length, bool with_brackets, bool with_variable);

class AmbiguousEquation : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

// Unique residue z with expr(z) == rhs (mod 5); throws AmbiguousEquation otherwise.
int solve_equation_target(std::span<const int> expr_with_z, int rhs);

// `initial` is bottom-to-top; result is top-to-bottom. Pops on an empty stack are ignored.
Tokens exec_stack_program(std::span<const int> initial, std::span<const int> actions);

// Little-endian bit vectors; results trimmed to their significant bits (at least one).
Tokens add_bits(std::span<const int> a, std::span<const int> b);
Tokens mul_bits(std::span<const int> a, std::span<const int> b);
Tokens isqrt_bits(std::span<const int> a);

// Human-readable rendering with the task's symbol table.
std::string format_tokens(std::span<const int> tokens, const std::vector<std::string>& symbols,
                          std::string_view separator = "");

}  // namespace chomsky

#include "chomsky/tasks.hpp"

#include <algorithm>
#include <sstream>

namespace chomsky {

namespace {

const std::vector<std::string> kBinary = {"a", "b"};
const std::vector<std::string> kBits = {"0", "1"};
const std::vector<std::string> kResidues = {"0", "1", "2", "3", "4"};

std::vector<std::string> expression_symbols(int count) {
  std::vector<std::string> all = {"0", "1", "2", "3", "4", "+", "-", "*", "(", ")", "z", "="};
  all.resize(count);
  return all;
}

std::vector<TaskSpec> build_specs() {
  using L = Level;
  std::vector<TaskSpec> s;
  s.push_back({TaskId::even_pairs, "even_pairs", L::regular, kBinary, kBinary, 0.5, 1, "aabba", "b"});
  s.push_back({TaskId::mod_arith_simple, "mod_arith_simple", L::regular, expression_symbols(8), kResidues, 0.2, 1,
               "1+2-4", "4"});
  s.push_back({TaskId::parity_check, "parity_check", L::regular, kBinary, kBinary, 0.5, 1, "aaabba", "b"});
  s.push_back({TaskId::cycle_navigation, "cycle_navigation", L::regular, {"0", "1", "2"}, kResidues, 0.2, 1,
               "011210", "2"});
  s.push_back({TaskId::stack_manipulation, "stack_manipulation", L::deterministic_context_free,
               {"a", "b", "POP", "PUSH_a", "PUSH_b"}, kBinary, 0.5, 1, "abbaa POP PUSH_a POP", "abba"});
  s.push_back({TaskId::reverse_string, "reverse_string", L::deterministic_context_free, kBinary, kBinary, 0.5, 1,
               "aabba", "abbaa"});
  s.push_back({TaskId::mod_arith_brackets, "mod_arith_brackets", L::deterministic_context_free,
               expression_symbols(10), kResidues, 0.2, 1, "-(1-2)*(4-3*(-2))", "0"});
  s.push_back({TaskId::solve_equation, "solve_equation", L::deterministic_context_free, expression_symbols(12),
               kResidues, 0.5, 1, "-(z-2)*(4-3*(-2))=0", "1"});
  s.push_back({TaskId::duplicate_string, "duplicate_string", L::context_sensitive, kBinary, kBinary, 0.5, 1, "abaab",
               "abaababaab"});
  s.push_back({TaskId::missing_duplicate, "missing_duplicate", L::context_sensitive, {"0", "1", "_"}, kBits, 0.5, 2,
               "10011021", "0"});
  s.push_back({TaskId::odds_first, "odds_first", L::context_sensitive, kBinary, kBinary, 0.5, 1, "aaabaa", "aaaaba"});
  s.push_back({TaskId::binary_addition, "binary_addition", L::context_sensitive, {"0", "1", "+"}, kBits, 0.5, 3,
               "10010+101", "10111"});
  s.push_back({TaskId::binary_multiplication, "binary_multiplication", L::context_sensitive, {"0", "1", "*"}, kBits,
               0.5, 3, "10010*101", "1001000"});
  s.push_back({TaskId::compute_sqrt, "compute_sqrt", L::context_sensitive, kBits, kBits, 0.5, 1, "100010", "110"});
  s.push_back({TaskId::bucket_sort, "bucket_sort", L::context_sensitive, kResidues, kResidues, 0.2, 1, "421302214",
               "011222344"});
  return s;
}

const std::vector<TaskSpec>& specs() {
  static const std::vector<TaskSpec> table = build_specs();
  return table;
}

int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

Tokens uniform_tokens(Rng& rng, int length, int alphabet) {
  Tokens t(length);
  for (auto& x : t) x = uniform_int(rng, 0, alphabet - 1);
  return t;
}

void require_alphabet(std::span<const int> input, int alphabet, const char* task) {
  for (int t : input)
    if (t < 0 || t >= alphabet) throw InvalidInput(std::string(task) + ": token out of range");
}

void require_bits(std::span<const int> bits) {
  if (bits.empty()) throw InvalidInput("bit sequence must be nonempty");
  for (int b : bits)
    if (b != 0 && b != 1) throw InvalidInput("bit sequence contains a non-bit");
}

Tokens trimmed(Tokens bits) {
  while (bits.size() > 1 && bits.back() == 0) bits.pop_back();
  if (bits.empty()) bits.push_back(0);
  return bits;
}

// ---- little-endian bit-vector helpers for isqrt ----

int compare_bits(const Tokens& a, const Tokens& b) {
  Tokens x = trimmed(a), y = trimmed(b);
  if (x.size() != y.size()) return x.size() < y.size() ? -1 : 1;
  for (std::size_t i = x.size(); i-- > 0;)
    if (x[i] != y[i]) return x[i] < y[i] ? -1 : 1;
  return 0;
}

// a - b with a >= b.
Tokens subtract_bits(const Tokens& a, const Tokens& b) {
  Tokens out(a.size());
  int borrow = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    int d = a[i] - (i < b.size() ? b[i] : 0) - borrow;
    borrow = d < 0;
    out[i] = d & 1;
  }
  return trimmed(std::move(out));
}

// ---- modular expressions ----

int mod5(int x) { return ((x % 5) + 5) % 5; }

class ExprParser {
 public:
  ExprParser(std::span<const int> tokens, std::optional<int> z) : tokens_(tokens), z_(z) {}

  int parse() {
    int v = expression();
    if (pos_ != tokens_.size()) fail("trailing tokens");
    return v;
  }

 private:
  int expression() {
    bool negate = false;
    if (peek() == expr::kMinus) {
      negate = true;
      ++pos_;
    }
    int value = term();
    if (negate) value = mod5(-value);
    while (peek() == expr::kPlus || peek() == expr::kMinus) {
      int op = tokens_[pos_++];
      int rhs = term();
      value = mod5(op == expr::kPlus ? value + rhs : value - rhs);
    }
    return value;
  }

  int term() {
    int value = factor();
    while (peek() == expr::kTimes) {
      ++pos_;
      value = mod5(value * factor());
    }
    return value;
  }

  int factor() {
    int t = peek();
    if (t >= 0 && t <= 4) {
      ++pos_;
      return t;
    }
    if (t == expr::kVariable) {
      if (!z_) fail("variable without a value");
      ++pos_;
      return mod5(*z_);
    }
    if (t == expr::kOpen) {
      ++pos_;
      int v = expression();
      if (peek() != expr::kClose) fail("unbalanced brackets");
      ++pos_;
      return v;
    }
    fail("expected an operand");
  }

  int peek() const { return pos_ < tokens_.size() ? tokens_[pos_] : -1; }

  [[noreturn]] void fail(const char* what) const {
    throw InvalidInput(std::string("malformed expression: ") + what);
  }

  std::span<const int> tokens_;
  std::optional<int> z_;
  std::size_t pos_ = 0;
};

bool bracket_length_feasible(int n) { return n == 1 || n >= 3; }

void emit_literal(Rng& rng, Tokens& out) { out.push_back(uniform_int(rng, 0, 4)); }

void emit_operator(Rng& rng, Tokens& out) { out.push_back(expr::kPlus + uniform_int(rng, 0, 2)); }

// Productions: literal (1), E op E (a+1+b), (E) (a+2), (-E) (a+3).
void emit_bracket_expression(Rng& rng, int n, Tokens& out) {
  enum { kLiteral, kBinary, kParen, kNegated };
  std::vector<int> options;
  if (n == 1) options.push_back(kLiteral);
  std::vector<int> splits;
  for (int a = 1; a <= n - 2; ++a)
    if (bracket_length_feasible(a) && bracket_length_feasible(n - 1 - a)) splits.push_back(a);
  if (!splits.empty()) options.push_back(kBinary);
  if (n - 2 >= 1 && bracket_length_feasible(n - 2)) options.push_back(kParen);
  if (n - 3 >= 1 && bracket_length_feasible(n - 3)) options.push_back(kNegated);

  switch (options[uniform_int(rng, 0, static_cast<int>(options.size()) - 1)]) {
    case kLiteral:
      emit_literal(rng, out);
      break;
    case kBinary: {
      int a = splits[uniform_int(rng, 0, static_cast<int>(splits.size()) - 1)];
      emit_bracket_expression(rng, a, out);
      emit_operator(rng, out);
      emit_bracket_expression(rng, n - 1 - a, out);
      break;
    }
    case kParen:
      out.push_back(expr::kOpen);
      emit_bracket_expression(rng, n - 2, out);
      out.push_back(expr::kClose);
      break;
    case kNegated:
      out.push_back(expr::kOpen);
      out.push_back(expr::kMinus);
      emit_bracket_expression(rng, n - 3, out);
      out.push_back(expr::kClose);
      break;
  }
}

Tokens sample_stack_program(Rng& rng, int length) {
  for (;;) {
    int initial = uniform_int(rng, 1, length);
    Tokens x = uniform_tokens(rng, initial, 2);
    for (int i = initial; i < length; ++i) x.push_back(stack_token::kPop + uniform_int(rng, 0, 2));
    if (!ground_truth(TaskId::stack_manipulation, x).empty()) return x;
  }
}

Tokens sample_equation(Rng& rng, int length) {
  constexpr int kMaxAttempts = 10000;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    Tokens e = sample_mod_expression(rng, length, true, true);
    int z = uniform_int(rng, 0, 4);
    int rhs = eval_mod_expr(e, z);
    try {
      solve_equation_target(e, rhs);
    } catch (const AmbiguousEquation&) {
      continue;
    }
    e.push_back(expr::kEquals);
    e.push_back(rhs);
    return e;
  }
  throw std::runtime_error("solve_equation: could not sample an unambiguous equation");
}

Tokens sample_binary_operands(Rng& rng, int length) {
  int a_len = uniform_int(rng, 1, length - 2);
  Tokens x = uniform_tokens(rng, a_len, 2);
  x.push_back(kBinaryOperator);
  Tokens b = uniform_tokens(rng, length - 1 - a_len, 2);
  x.insert(x.end(), b.begin(), b.end());
  return x;
}

std::pair<std::span<const int>, std::span<const int>> split_operands(std::span<const int> input) {
  auto it = std::find(input.begin(), input.end(), kBinaryOperator);
  if (it == input.end() || std::count(input.begin(), input.end(), kBinaryOperator) != 1)
    throw InvalidInput("binary arithmetic: expected exactly one operator");
  std::size_t k = static_cast<std::size_t>(it - input.begin());
  auto a = input.subspan(0, k), b = input.subspan(k + 1);
  require_bits(a);
  require_bits(b);
  return {a, b};
}

}  // namespace

const std::array<TaskId, kTaskCount>& all_tasks() {
  static const std::array<TaskId, kTaskCount> ids = [] {
    std::array<TaskId, kTaskCount> a{};
    for (std::size_t i = 0; i < kTaskCount; ++i) a[i] = static_cast<TaskId>(i);
    return a;
  }();
  return ids;
}

const TaskSpec& task_spec(TaskId task) { return specs().at(static_cast<std::size_t>(task)); }

std::optional<TaskId> parse_task(std::string_view name) {
  for (const auto& s : specs())
    if (s.name == name) return s.id;
  return std::nullopt;
}

std::string_view level_name(Level level) {
  switch (level) {
    case Level::regular:
      return "R";
    case Level::deterministic_context_free:
      return "DCF";
    case Level::context_sensitive:
      return "CS";
  }
  return "?";
}

std::string comma_separated_task_names() {
  std::string out;
  for (const auto& s : specs()) {
    if (!out.empty()) out += ", ";
    out += s.name;
  }
  return out;
}

int adjusted_length(TaskId task, int length) {
  if (length < 1) throw InvalidInput("length must be >= 1");
  length = std::max(length, task_spec(task).min_length);
  switch (task) {
    case TaskId::mod_arith_simple:
      return length % 2 == 0 ? length + 1 : length;
    case TaskId::mod_arith_brackets:
    case TaskId::solve_equation:
      return length == 2 ? 3 : length;
    case TaskId::missing_duplicate:
      return length % 2 == 1 ? length + 1 : length;
    default:
      return length;
  }
}

Tokens sample_input(TaskId task, Rng& rng, int length) {
  const int n = adjusted_length(task, length);
  switch (task) {
    case TaskId::even_pairs:
    case TaskId::parity_check:
    case TaskId::reverse_string:
    case TaskId::duplicate_string:
    case TaskId::odds_first:
    case TaskId::compute_sqrt:
      return uniform_tokens(rng, n, 2);
    case TaskId::cycle_navigation:
      return uniform_tokens(rng, n, 3);
    case TaskId::bucket_sort:
      return uniform_tokens(rng, n, 5);
    case TaskId::mod_arith_simple:
      return sample_mod_expression(rng, n, false, false);
    case TaskId::mod_arith_brackets:
      return sample_mod_expression(rng, n, true, false);
    case TaskId::solve_equation:
      return sample_equation(rng, n);
    case TaskId::stack_manipulation:
      return sample_stack_program(rng, n);
    case TaskId::missing_duplicate: {
      Tokens w = uniform_tokens(rng, n / 2, 2);
      Tokens x = w;
      x.insert(x.end(), w.begin(), w.end());
      x[uniform_int(rng, 0, n - 1)] = kMissingPlaceholder;
      return x;
    }
    case TaskId::binary_addition:
    case TaskId::binary_multiplication:
      return sample_binary_operands(rng, n);
  }
  throw InvalidInput("unknown task");
}

Tokens ground_truth(TaskId task, std::span<const int> input) {
  const TaskSpec& spec = task_spec(task);
  const char* name = spec.name.data();
  if (input.empty()) throw InvalidInput(std::string(name) + ": empty input");
  switch (task) {
    case TaskId::even_pairs:
      require_alphabet(input, 2, name);
      return {input.front() == input.back() ? 1 : 0};
    case TaskId::parity_check: {
      require_alphabet(input, 2, name);
      auto bs = std::count(input.begin(), input.end(), 1);
      return {bs % 2 == 0 ? 1 : 0};
    }
    case TaskId::cycle_navigation: {
      require_alphabet(input, 3, name);
      int pos = 0;
      for (int t : input) pos = mod5(pos + (t == 1 ? 1 : t == 2 ? -1 : 0));
      return {pos};
    }
    case TaskId::mod_arith_simple:
    case TaskId::mod_arith_brackets: {
      require_alphabet(input, spec.input_size(), name);
      return {eval_mod_expr(input)};
    }
    case TaskId::solve_equation: {
      require_alphabet(input, spec.input_size(), name);
      if (input.size() < 3 || input[input.size() - 2] != expr::kEquals || input.back() > 4)
        throw InvalidInput("solve_equation: expected '<expr> = <residue>'");
      return {solve_equation_target(input.first(input.size() - 2), input.back())};
    }
    case TaskId::stack_manipulation: {
      require_alphabet(input, 5, name);
      auto first_action = std::find_if(input.begin(), input.end(), [](int t) { return t >= stack_token::kPop; });
      std::span<const int> initial(input.begin(), first_action);
      std::span<const int> actions(first_action, input.end());
      for (int t : actions)
        if (t < stack_token::kPop) throw InvalidInput("stack_manipulation: stack symbol after an action");
      return exec_stack_program(initial, actions);
    }
    case TaskId::reverse_string: {
      require_alphabet(input, 2, name);
      return Tokens(input.rbegin(), input.rend());
    }
    case TaskId::duplicate_string: {
      require_alphabet(input, 2, name);
      Tokens out(input.begin(), input.end());
      out.insert(out.end(), input.begin(), input.end());
      return out;
    }
    case TaskId::missing_duplicate: {
      require_alphabet(input, 3, name);
      if (input.size() % 2 != 0 || std::count(input.begin(), input.end(), kMissingPlaceholder) != 1)
        throw InvalidInput("missing_duplicate: expected even length with one placeholder");
      std::size_t half = input.size() / 2;
      std::size_t hole = static_cast<std::size_t>(std::find(input.begin(), input.end(), kMissingPlaceholder) - input.begin());
      return {input[hole < half ? hole + half : hole - half]};
    }
    case TaskId::odds_first: {
      require_alphabet(input, 2, name);
      Tokens out;
      for (std::size_t i = 0; i < input.size(); i += 2) out.push_back(input[i]);
      for (std::size_t i = 1; i < input.size(); i += 2) out.push_back(input[i]);
      return out;
    }
    case TaskId::binary_addition: {
      auto [a, b] = split_operands(input);
      return add_bits(a, b);
    }
    case TaskId::binary_multiplication: {
      auto [a, b] = split_operands(input);
      return mul_bits(a, b);
    }
    case TaskId::compute_sqrt:
      require_alphabet(input, 2, name);
      return isqrt_bits(input);
    case TaskId::bucket_sort: {
      require_alphabet(input, 5, name);
      std::array<int, 5> counts{};
      for (int t : input) ++counts[t];
      Tokens out;
      for (int s = 0; s < 5; ++s) out.insert(out.end(), counts[s], s);
      return out;
    }
  }
  throw InvalidInput("unknown task");
}

TaskSample sample(TaskId task, Rng& rng, int length) {
  TaskSample s;
  s.task = task;
  s.requested_length = length;
  s.length = adjusted_length(task, length);
  s.input = sample_input(task, rng, length);
  s.target = ground_truth(task, s.input);
  return s;
}

int eval_mod_expr(std::span<const int> tokens, std::optional<int> z_value) {
  if (tokens.empty()) throw InvalidInput("malformed expression: empty");
  return ExprParser(tokens, z_value).parse();
}

Tokens sample_mod_expression(Rng& rng, int length, bool with_brackets, bool with_variable) {
  if (length < 1) throw InvalidInput("expression length must be >= 1");
  Tokens out;
  if (with_brackets) {
    int n = length == 2 ? 3 : length;
    emit_bracket_expression(rng, n, out);
  } else {
    int n = length % 2 == 0 ? length + 1 : length;
    emit_literal(rng, out);
    while (static_cast<int>(out.size()) < n) {
      emit_operator(rng, out);
      emit_literal(rng, out);
    }
  }
  if (with_variable) {
    std::vector<std::size_t> literals;
    for (std::size_t i = 0; i < out.size(); ++i)
      if (out[i] <= 4) literals.push_back(i);
    out[literals[uniform_int(rng, 0, static_cast<int>(literals.size()) - 1)]] = expr::kVariable;
  }
  return out;
}

int solve_equation_target(std::span<const int> expr_with_z, int rhs) {
  if (std::count(expr_with_z.begin(), expr_with_z.end(), expr::kVariable) != 1)
    throw InvalidInput("solve_equation: expression must contain exactly one z");
  int solution = -1, count = 0;
  for (int z = 0; z < 5; ++z) {
    if (eval_mod_expr(expr_with_z, z) == mod5(rhs)) {
      solution = z;
      ++count;
    }
  }
  if (count != 1) throw AmbiguousEquation("solve_equation: " + std::to_string(count) + " solutions");
  return solution;
}

Tokens exec_stack_program(std::span<const int> initial, std::span<const int> actions) {
  Tokens stack(initial.begin(), initial.end());
  for (int a : actions) {
    switch (a) {
      case stack_token::kPop:
        if (!stack.empty()) stack.pop_back();
        break;
      case stack_token::kPushA:
        stack.push_back(stack_token::kA);
        break;
      case stack_token::kPushB:
        stack.push_back(stack_token::kB);
        break;
      default:
        throw InvalidInput("stack program: unknown action");
    }
  }
  return Tokens(stack.rbegin(), stack.rend());
}

Tokens add_bits(std::span<const int> a, std::span<const int> b) {
  require_bits(a);
  require_bits(b);
  Tokens out;
  int carry = 0;
  for (std::size_t i = 0; i < std::max(a.size(), b.size()); ++i) {
    int s = carry + (i < a.size() ? a[i] : 0) + (i < b.size() ? b[i] : 0);
    out.push_back(s & 1);
    carry = s >> 1;
  }
  if (carry) out.push_back(1);
  return trimmed(std::move(out));
}

Tokens mul_bits(std::span<const int> a, std::span<const int> b) {
  require_bits(a);
  require_bits(b);
  Tokens acc(a.size() + b.size() + 1, 0);
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (!b[i]) continue;
    int carry = 0;
    for (std::size_t j = 0; j < a.size() || carry; ++j) {
      int s = acc[i + j] + carry + (j < a.size() ? a[j] : 0);
      acc[i + j] = s & 1;
      carry = s >> 1;
    }
  }
  return trimmed(std::move(acc));
}

// Digit-by-digit square root: consume the radicand two bits at a time from the top.
Tokens isqrt_bits(std::span<const int> a) {
  require_bits(a);
  Tokens radicand(a.begin(), a.end());
  if (radicand.size() % 2) radicand.push_back(0);
  Tokens root = {0};       // little-endian
  Tokens remainder = {0};  // little-endian
  for (std::size_t k = radicand.size(); k >= 2; k -= 2) {
    // remainder = remainder * 4 + next pair
    remainder.insert(remainder.begin(), {radicand[k - 2], radicand[k - 1]});
    remainder = trimmed(std::move(remainder));
    // candidate = root * 4 + 1
    Tokens candidate = root;
    candidate.insert(candidate.begin(), {1, 0});
    candidate = trimmed(std::move(candidate));
    root.insert(root.begin(), 0);
    if (compare_bits(remainder, candidate) >= 0) {
      remainder = subtract_bits(remainder, candidate);
      root[0] = 1;
    }
    root = trimmed(std::move(root));
  }
  return root;
}

std::string format_tokens(std::span<const int> tokens, const std::vector<std::string>& symbols,
                          std::string_view separator) {
  std::ostringstream os;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) os << separator;
    int t = tokens[i];
    if (t >= 0 && t < static_cast<int>(symbols.size()))
      os << symbols[t];
    else
      os << '?';
  }
  return os.str();
}

}  // namespace chomsky

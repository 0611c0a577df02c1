#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <map>

using namespace chomsky;
namespace e = chomsky::expr;
namespace st = chomsky::stack_token;

namespace {

Tokens ab(std::string_view s) {
  Tokens t;
  for (char c : s) t.push_back(c == 'a' ? 0 : 1);
  return t;
}

Tokens digits(std::string_view s) {
  Tokens t;
  for (char c : s) t.push_back(c - '0');
  return t;
}

// Big-endian digit string to a little-endian bit vector.
Tokens big_endian(std::string_view s) {
  Tokens t = digits(s);
  std::reverse(t.begin(), t.end());
  return t;
}

Tokens expression(std::string_view s) {
  Tokens t;
  for (char c : s) {
    switch (c) {
      case '+': t.push_back(e::kPlus); break;
      case '-': t.push_back(e::kMinus); break;
      case '*': t.push_back(e::kTimes); break;
      case '(': t.push_back(e::kOpen); break;
      case ')': t.push_back(e::kClose); break;
      case 'z': t.push_back(e::kVariable); break;
      case '=': t.push_back(e::kEquals); break;
      default: t.push_back(c - '0');
    }
  }
  return t;
}

std::size_t expected_output_length(TaskId task, const Tokens& x) {
  switch (task) {
    case TaskId::reverse_string:
    case TaskId::odds_first:
    case TaskId::bucket_sort:
      return x.size();
    case TaskId::duplicate_string:
      return 2 * x.size();
    case TaskId::stack_manipulation:
    case TaskId::binary_addition:
    case TaskId::binary_multiplication:
    case TaskId::compute_sqrt:
      return oracle::answer(task, x).size();
    default:
      return 1;
  }
}

}  // namespace

TEST_CASE("task table levels and baselines") {
  std::map<Level, int> per_level;
  for (TaskId t : all_tasks()) {
    const auto& s = task_spec(t);
    CHECK(s.id == t);
    CHECK(parse_task(s.name) == t);
    ++per_level[s.level];
    const bool fifth = t == TaskId::cycle_navigation || t == TaskId::bucket_sort || t == TaskId::mod_arith_simple ||
                       t == TaskId::mod_arith_brackets;
    CHECK(s.baseline == doctest::Approx(fifth ? 0.2 : 0.5));
  }
  CHECK(per_level[Level::regular] == 4);
  CHECK(per_level[Level::deterministic_context_free] == 4);
  CHECK(per_level[Level::context_sensitive] == 7);
  CHECK(!parse_task("no_such_task"));
  CHECK(task_spec(TaskId::even_pairs).level == Level::regular);
  CHECK(task_spec(TaskId::solve_equation).level == Level::deterministic_context_free);
  CHECK(task_spec(TaskId::bucket_sort).level == Level::context_sensitive);
}

TEST_CASE("table examples") {
  CHECK(ground_truth(TaskId::even_pairs, ab("aabba")) == Tokens{1});
  CHECK(ground_truth(TaskId::cycle_navigation, digits("011210")) == Tokens{2});
  CHECK(ground_truth(TaskId::reverse_string, ab("aabba")) == ab("abbaa"));
  CHECK(ground_truth(TaskId::duplicate_string, ab("abaab")) == ab("abaababaab"));
  CHECK(ground_truth(TaskId::missing_duplicate, digits("10011021")) == Tokens{0});
  CHECK(ground_truth(TaskId::odds_first, ab("aaabaa")) == ab("aaaaba"));
  CHECK(ground_truth(TaskId::bucket_sort, digits("421302214")) == digits("011222344"));
  CHECK(ground_truth(TaskId::parity_check, ab("aaabba")) == Tokens{1});
  CHECK(ground_truth(TaskId::mod_arith_simple, expression("1+2-4")) == Tokens{4});
  CHECK(ground_truth(TaskId::mod_arith_brackets, expression("-(1-2)*(4-3*(-2))")) == Tokens{0});

  Tokens program = ab("abbaa");
  program.insert(program.end(), {st::kPop, st::kPushA, st::kPop});
  CHECK(ground_truth(TaskId::stack_manipulation, program) == ab("abba"));
}

TEST_CASE("modular expressions") {
  CHECK(eval_mod_expr(expression("1+2-4")) == 4);
  CHECK(eval_mod_expr(expression("3")) == 3);
  CHECK(eval_mod_expr(expression("-(1-2)*(4-3*(-2))")) == 0);
  CHECK(eval_mod_expr(expression("2+3*4")) == 4);
  CHECK(eval_mod_expr(expression("z*z"), 3) == 4);
  CHECK_THROWS_AS(eval_mod_expr(expression("(1+2")), InvalidInput);
  CHECK_THROWS_AS(eval_mod_expr(expression("1+")), InvalidInput);
  CHECK_THROWS_AS(eval_mod_expr(expression("12")), InvalidInput);
  CHECK_THROWS_AS(eval_mod_expr(expression("z+1")), InvalidInput);
  CHECK_THROWS_AS(eval_mod_expr(Tokens{}), InvalidInput);

  Rng rng(1);
  CHECK(sample_mod_expression(rng, 1, false, false).size() == 1);
  const Tokens three = sample_mod_expression(rng, 3, false, false);
  REQUIRE(three.size() == 3);
  CHECK(three[0] <= 4);
  CHECK((three[1] >= e::kPlus && three[1] <= e::kTimes));
  CHECK(three[2] <= 4);
  CHECK(sample_mod_expression(rng, 6, false, false).size() == 7);
  CHECK(sample_mod_expression(rng, 2, true, false).size() == 3);

  int mismatches = 0;
  std::uniform_int_distribution<int> length(1, 60);
  for (int i = 0; i < 10000; ++i) {
    const bool brackets = i % 2 == 0;
    const int l = length(rng);
    const Tokens x = sample_mod_expression(rng, l, brackets, false);
    CHECK(static_cast<int>(x.size()) == (brackets ? (l == 2 ? 3 : l) : (l % 2 ? l : l + 1)));
    mismatches += eval_mod_expr(x) != oracle::shunting_yard(x, 0);
  }
  CHECK(mismatches == 0);

  const Tokens with_z = sample_mod_expression(rng, 25, true, true);
  CHECK(std::count(with_z.begin(), with_z.end(), e::kVariable) == 1);
}

TEST_CASE("equation solving") {
  CHECK(solve_equation_target(expression("z"), 3) == 3);
  CHECK(solve_equation_target(expression("z+1"), 0) == 4);
  const Tokens ambiguous = expression("-(z-2)*(4-3*(-2))");
  CHECK(eval_mod_expr(ambiguous, 1) == 0);
  CHECK_THROWS_AS(solve_equation_target(ambiguous, 0), AmbiguousEquation);
  CHECK_THROWS_AS(solve_equation_target(expression("1+2"), 3), InvalidInput);
  CHECK(ground_truth(TaskId::solve_equation, expression("z*2=1")) == Tokens{3});
}

TEST_CASE("stack programs") {
  const Tokens pop_push_pop{st::kPop, st::kPushA, st::kPop};
  CHECK(exec_stack_program(ab("abbaa"), pop_push_pop) == ab("abba"));
  CHECK(exec_stack_program(ab("ab"), Tokens{}) == ab("ba"));
  CHECK(exec_stack_program(Tokens{}, Tokens{st::kPop, st::kPushB}) == ab("b"));
}

TEST_CASE("bit arithmetic") {
  CHECK(add_bits(Tokens{1, 0, 0, 1}, Tokens{1, 0, 1}) == Tokens{0, 1, 1, 1});
  CHECK(add_bits(Tokens{0}, Tokens{0}) == Tokens{0});
  CHECK(isqrt_bits(Tokens{1}) == Tokens{1});
  CHECK(isqrt_bits(Tokens{0}) == Tokens{0});
  CHECK(isqrt_bits(oracle::value_bits(17)) == oracle::value_bits(4));
  CHECK(mul_bits(Tokens{0, 0, 1}, Tokens{1, 1}) == oracle::value_bits(12));
  CHECK(add_bits(Tokens{1, 0, 0}, Tokens{0, 0}) == Tokens{1});

  // The worked examples in the task descriptions read big-endian.
  CHECK(add_bits(big_endian("10010"), big_endian("101")) == big_endian("10111"));
  CHECK(mul_bits(big_endian("100"), big_endian("10110")) == big_endian("1011000"));

  CHECK_THROWS_AS(add_bits(Tokens{}, Tokens{1}), InvalidInput);
  CHECK_THROWS_AS(isqrt_bits(Tokens{2}), InvalidInput);

  Rng rng(7);
  std::uniform_int_distribution<int> len(1, 60);
  for (int i = 0; i < 2000; ++i) {
    Tokens a(len(rng)), b(len(rng));
    for (auto& x : a) x = static_cast<int>(rng() & 1);
    for (auto& x : b) x = static_cast<int>(rng() & 1);
    const auto va = oracle::bits_value(a), vb = oracle::bits_value(b);
    REQUIRE(add_bits(a, b) == oracle::value_bits(va + vb));
    REQUIRE(mul_bits(a, b) == oracle::value_bits(va * vb));
    REQUIRE(isqrt_bits(a) == oracle::value_bits(oracle::isqrt(va)));
  }
}

TEST_CASE("sampler length contracts") {
  Rng rng(3);
  CHECK(sample_input(TaskId::parity_check, rng, 6).size() == 6);
  CHECK(sample_input(TaskId::mod_arith_simple, rng, 6).size() == 7);
  const auto dup = sample(TaskId::duplicate_string, rng, 5);
  CHECK(dup.input.size() == 5);
  CHECK(dup.target.size() == 10);
  CHECK(adjusted_length(TaskId::missing_duplicate, 5) == 6);
  CHECK(adjusted_length(TaskId::missing_duplicate, 1) == 2);
  CHECK(adjusted_length(TaskId::binary_addition, 1) == 3);
  CHECK_THROWS_AS(adjusted_length(TaskId::parity_check, 0), InvalidInput);

  for (TaskId t : all_tasks())
    for (int l : {1, 2, 3, 4, 7, 20}) {
      const auto s = sample(t, rng, l);
      CHECK(s.requested_length == l);
      CHECK(s.length == adjusted_length(t, l));
      const std::size_t expected = t == TaskId::solve_equation ? static_cast<std::size_t>(s.length) + 2 : s.length;
      CHECK(s.input.size() == expected);
    }
}

TEST_CASE("ground truth agrees with independent oracles on 10000 samples per task") {
  for (TaskId t : all_tasks()) {
    CAPTURE(task_spec(t).name);
    Rng rng(1234 + static_cast<int>(t));
    std::uniform_int_distribution<int> length(1, 100);
    int mismatches = 0, wrong_length = 0;
    for (int i = 0; i < 10000; ++i) {
      const TaskSample s = sample(t, rng, length(rng));
      mismatches += s.target != oracle::answer(t, s.input);
      wrong_length += s.target.size() != expected_output_length(t, s.input);
      for (int y : s.target) wrong_length += y < 0 || y >= task_spec(t).output_size();
    }
    CHECK(mismatches == 0);
    CHECK(wrong_length == 0);
  }
}

TEST_CASE("transduction properties") {
  Rng rng(99);
  for (int i = 0; i < 500; ++i) {
    const int l = 1 + static_cast<int>(rng() % 50);
    const Tokens x = sample_input(TaskId::reverse_string, rng, l);
    CHECK(ground_truth(TaskId::reverse_string, ground_truth(TaskId::reverse_string, x)) == x);

    const Tokens b = sample_input(TaskId::bucket_sort, rng, l);
    const Tokens sorted = ground_truth(TaskId::bucket_sort, b);
    CHECK(std::is_sorted(sorted.begin(), sorted.end()));
    CHECK(std::is_permutation(sorted.begin(), sorted.end(), b.begin(), b.end()));

    const Tokens d = ground_truth(TaskId::duplicate_string, x);
    CHECK(std::equal(d.begin(), d.begin() + l, d.begin() + l, d.end()));

    // Pure: repeated calls agree.
    CHECK(ground_truth(TaskId::bucket_sort, b) == sorted);
  }
}

TEST_CASE("sampling is deterministic in the seed") {
  for (TaskId t : all_tasks()) {
    Rng a(42), b(42), c(43);
    const auto x = sample(t, a, 17);
    CHECK(x.input == sample(t, b, 17).input);
    bool differs = false;
    for (int i = 0; i < 5 && !differs; ++i) differs = sample(t, c, 17).input != x.input;
    CHECK(differs);
  }
}

TEST_CASE("malformed inputs are rejected") {
  CHECK_THROWS_AS(ground_truth(TaskId::parity_check, Tokens{0, 2}), InvalidInput);
  CHECK_THROWS_AS(ground_truth(TaskId::parity_check, Tokens{}), InvalidInput);
  CHECK_THROWS_AS(ground_truth(TaskId::missing_duplicate, Tokens{0, 1, 0}), InvalidInput);
  CHECK_THROWS_AS(ground_truth(TaskId::binary_addition, Tokens{0, 1}), InvalidInput);
  CHECK_THROWS_AS(ground_truth(TaskId::mod_arith_brackets, expression("(1+2")), InvalidInput);
  CHECK_THROWS_AS(ground_truth(TaskId::stack_manipulation, Tokens{st::kPop, st::kA}), InvalidInput);
}

#pragma once

// Independent reference implementations used to cross-check the task suite and
// the differentiable memories. Written separately from src/ on purpose: different
// algorithms (shunting-yard, native 128-bit integers, plain std containers).

#include "chomsky/memory.hpp"
#include "chomsky/tasks.hpp"

#include <algorithm>
#include <deque>
#include <stdexcept>
#include <vector>

namespace oracle {

using chomsky::TaskId;
using chomsky::Tokens;
using u128 = unsigned __int128;

inline int mod5(long long v) { return static_cast<int>(((v % 5) + 5) % 5); }

// Shunting-yard over residues. A '-' is unary when it follows '(' or starts the
// expression; unary minus binds to the following operand at the term level, so
// "-a*b" = -(a*b), which agrees with "0 - a*b".
inline int shunting_yard(const std::vector<int>& tokens, int z) {
  namespace e = chomsky::expr;
  std::vector<long long> values;
  std::vector<int> ops;
  auto prec = [](int op) { return op == e::kTimes ? 2 : 1; };
  auto apply = [&](int op) {
    if (values.size() < 2) throw std::runtime_error("oracle: malformed expression");
    long long b = values.back();
    values.pop_back();
    long long a = values.back();
    values.pop_back();
    long long r = op == e::kPlus ? a + b : op == e::kMinus ? a - b : a * b;
    values.push_back(mod5(r));
  };
  bool expect_operand = true;
  for (int t : tokens) {
    if (t == e::kOpen) {
      ops.push_back(t);
      expect_operand = true;
    } else if (t == e::kClose) {
      while (!ops.empty() && ops.back() != e::kOpen) {
        apply(ops.back());
        ops.pop_back();
      }
      if (ops.empty()) throw std::runtime_error("oracle: unbalanced");
      ops.pop_back();
      expect_operand = false;
    } else if (t == e::kMinus && expect_operand) {
      values.push_back(0);  // unary minus as 0 - ...
      ops.push_back(e::kMinus);
    } else if (t == e::kPlus || t == e::kMinus || t == e::kTimes) {
      while (!ops.empty() && ops.back() != e::kOpen && prec(ops.back()) >= prec(t)) {
        apply(ops.back());
        ops.pop_back();
      }
      ops.push_back(t);
      expect_operand = true;
    } else {
      values.push_back(t == e::kVariable ? z : t);
      expect_operand = false;
    }
  }
  while (!ops.empty()) {
    if (ops.back() == e::kOpen) throw std::runtime_error("oracle: unbalanced");
    apply(ops.back());
    ops.pop_back();
  }
  if (values.size() != 1) throw std::runtime_error("oracle: malformed expression");
  return static_cast<int>(values.back());
}

inline u128 bits_value(const std::vector<int>& bits) {
  u128 v = 0;
  for (std::size_t i = bits.size(); i-- > 0;) v = (v << 1) | static_cast<u128>(bits[i]);
  return v;
}

inline Tokens value_bits(u128 v) {
  Tokens out;
  do {
    out.push_back(static_cast<int>(v & 1));
    v >>= 1;
  } while (v != 0);
  return out;
}

inline u128 isqrt(u128 n) {
  u128 lo = 0, hi = u128{1} << 64;  // sqrt of < 2^128 is < 2^64
  while (lo < hi) {
    u128 mid = lo + (hi - lo + 1) / 2;
    if (mid <= n / mid)
      lo = mid;
    else
      hi = mid - 1;
  }
  return lo;
}

inline Tokens answer(TaskId task, const Tokens& x) {
  namespace st = chomsky::stack_token;
  switch (task) {
    case TaskId::even_pairs: {
      int transitions = 0;
      for (std::size_t i = 1; i < x.size(); ++i) transitions += x[i] != x[i - 1];
      return {transitions % 2 == 0 ? 1 : 0};
    }
    case TaskId::parity_check: {
      int ones = 0;
      for (int t : x) ones ^= t;
      return {ones == 0 ? 1 : 0};
    }
    case TaskId::cycle_navigation: {
      long long pos = 0;
      for (int t : x) pos += t == 1 ? 1 : t == 2 ? 4 : 0;
      return {static_cast<int>(pos % 5)};
    }
    case TaskId::mod_arith_simple:
    case TaskId::mod_arith_brackets:
      return {shunting_yard(x, 0)};
    case TaskId::solve_equation: {
      std::vector<int> e(x.begin(), x.end() - 2);
      int found = -1, count = 0;
      for (int z = 0; z < 5; ++z)
        if (shunting_yard(e, z) == x.back()) {
          found = z;
          ++count;
        }
      if (count != 1) throw std::runtime_error("oracle: equation without a unique solution");
      return {found};
    }
    case TaskId::stack_manipulation: {
      std::deque<int> stack;  // front is the top
      for (int t : x) {
        if (t == st::kA || t == st::kB)
          stack.push_front(t);
        else if (t == st::kPushA)
          stack.push_front(st::kA);
        else if (t == st::kPushB)
          stack.push_front(st::kB);
        else if (!stack.empty())
          stack.pop_front();
      }
      return Tokens(stack.begin(), stack.end());
    }
    case TaskId::reverse_string:
      return Tokens(x.rbegin(), x.rend());
    case TaskId::duplicate_string: {
      Tokens out;
      for (int pass = 0; pass < 2; ++pass)
        for (int t : x) out.push_back(t);
      return out;
    }
    case TaskId::missing_duplicate: {
      const std::size_t n = x.size() / 2;
      for (std::size_t i = 0; i < n; ++i) {
        if (x[i] == chomsky::kMissingPlaceholder) return {x[i + n]};
        if (x[i + n] == chomsky::kMissingPlaceholder) return {x[i]};
      }
      throw std::runtime_error("oracle: no placeholder");
    }
    case TaskId::odds_first: {
      Tokens odd, even;
      for (std::size_t i = 0; i < x.size(); ++i) (i % 2 == 0 ? odd : even).push_back(x[i]);
      odd.insert(odd.end(), even.begin(), even.end());
      return odd;
    }
    case TaskId::binary_addition:
    case TaskId::binary_multiplication: {
      auto sep = std::find(x.begin(), x.end(), chomsky::kBinaryOperator);
      const u128 a = bits_value(std::vector<int>(x.begin(), sep));
      const u128 b = bits_value(std::vector<int>(sep + 1, x.end()));
      return value_bits(task == TaskId::binary_addition ? a + b : a * b);
    }
    case TaskId::compute_sqrt:
      return value_bits(isqrt(bits_value(x)));
    case TaskId::bucket_sort: {
      Tokens out = x;
      std::sort(out.begin(), out.end());
      return out;
    }
  }
  throw std::runtime_error("oracle: unknown task");
}

// Plain machines the differentiable memories must reduce to.
struct DiscreteStack {
  using Row = chomsky::RowVector<double>;
  std::deque<Row> rows;  // front is the top
  chomsky::Index depth, width;

  DiscreteStack(chomsky::Index d, chomsky::Index w) : depth(d), width(w) {
    for (chomsky::Index i = 0; i < d; ++i) rows.push_back(Row::Zero(w));
  }
  void apply(int action, const Row& v) {
    if (action == chomsky::kPush) {
      rows.push_front(v);
      rows.pop_back();
    } else if (action == chomsky::kPop) {
      rows.pop_front();
      rows.push_back(Row::Zero(width));
    }
  }
  chomsky::Matrix<double> cells() const {
    chomsky::Matrix<double> m(depth, width);
    for (chomsky::Index i = 0; i < depth; ++i) m.row(i) = rows[static_cast<std::size_t>(i)];
    return m;
  }
};

struct DiscreteTape {
  chomsky::Matrix<double> cells;
  chomsky::Index head = 0;

  DiscreteTape(chomsky::Index n, chomsky::Index w) : cells(chomsky::Matrix<double>::Zero(n, w)) {}
  void apply(int action, const chomsky::RowVector<double>& v, chomsky::Index jump) {
    const chomsky::Index n = cells.rows();
    if (action <= chomsky::kWriteStay) cells.row(head) = v;
    const chomsky::Index shift[] = {-1, 1, 0, -jump, jump};
    head = ((head + shift[action]) % n + n) % n;
  }
};

}  // namespace oracle

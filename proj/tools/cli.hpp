#pragma once

#include "chomsky/harness.hpp"

#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace chomsky::cli {

// Parses argv and runs one command. Returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// Score table for a results JSONL. `curve_exists` resolves the curve_file field.
std::string render_report(std::string_view jsonl, const std::function<bool(const std::string&)>& curve_exists);

struct Check {
  std::string name;
  bool passed = false;
  std::string detail;
};

// Ground truth vs the independent oracles, `samples` per task with l in [1, 100].
Check check_oracles(int samples);
// Backprop vs central differences for one architecture at toy size, in double.
double model_gradient_error(Architecture arch, PositionalEncoding pe, std::uint64_t seed);
Check check_gradients();
Check check_memories(int trajectories);
// Write, read into a fresh model, write again; false if the bytes differ or reading fails.
bool checkpoint_round_trip(bool corrupt_magic);

std::vector<Check> selftest();

}  // namespace chomsky::cli

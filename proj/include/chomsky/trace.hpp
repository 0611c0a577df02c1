#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace chomsky {

using TraceMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Per-step capture of a recurrent model's internals.
struct TraceStep {
  int token = -1;
  std::vector<double> hidden;
  std::vector<double> actions;  // stack: 3 probabilities; tapes: 5 per tape
  TraceMatrix memory;           // stack rows, or all tapes' cells stacked
  std::vector<double> head;     // tape heads concatenated (empty for stacks)
  std::vector<double> logits;   // empty at steps without a readout
};

struct Trace {
  std::string architecture;
  std::vector<TraceStep> steps;
  // Transformer only: one (positions x d_model) activation matrix per block.
  std::vector<TraceMatrix> layer_activations;
};

}  // namespace chomsky

#pragma once

#include "chomsky/harness.hpp"
#include "chomsky/trace.hpp"

#include <filesystem>

namespace chomsky {

// Runs `model` on one sample (input, computation tokens, empty slots) and
// captures every step of it. `logits` receives the output rows when non-null.
Trace record_trace(SequenceModel<float>& model, TaskId task, const Tokens& input, const BatchOptions& options = {},
                   Matrix<float>* logits = nullptr);

struct SymmetricEigen {
  Eigen::VectorXd values;  // descending
  TraceMatrix vectors;     // column i pairs with values(i)
};

// Cyclic Jacobi rotations until the largest off-diagonal entry is below `tolerance`.
SymmetricEigen jacobi_eigen(const TraceMatrix& symmetric, double tolerance = 1e-10, int max_sweeps = 100);

struct Pca {
  TraceMatrix projection;              // n x k
  TraceMatrix components;              // k x d, unit rows
  Eigen::VectorXd explained_variance;  // k, nonincreasing
  Eigen::RowVectorXd mean;             // d
  double total_variance = 0;
};

// Principal components of the rows of `points` (covariance normalised by n).
// Each component's largest-magnitude coordinate is positive.
Pca pca(const TraceMatrix& points, Index k);

// Single-linkage clusters among 2-D points, linking pairs closer than
// `radius_fraction` times the diameter of the point set.
int cluster_count(const TraceMatrix& points, double radius_fraction = 0.1);

// Hidden states stacked step by step, n_steps x hidden.
TraceMatrix hidden_states(const Trace& trace);

// Writes states.csv, actions.csv, memory.csv (and layers.csv for Transformers) into `dir`.
void export_trace(const Trace& trace, const std::filesystem::path& dir);
Trace import_trace(const std::filesystem::path& dir);

}  // namespace chomsky

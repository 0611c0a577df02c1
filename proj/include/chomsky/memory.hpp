#pragma once

#include "chomsky/autodiff.hpp"

#include <span>

namespace chomsky {

inline constexpr Index kCellWidth = 8;
inline constexpr Index kTrainingStackDepth = 128;
inline constexpr Index kTrainingTapeCells = 256;

// Column order of the action distributions.
enum StackAction : int { kPush = 0, kPop = 1, kNoop = 2 };
inline constexpr Index kStackActionCount = 3;

enum TapeAction : int { kWriteLeft = 0, kWriteRight = 1, kWriteStay = 2, kJumpLeft = 3, kJumpRight = 4 };
inline constexpr Index kTapeActionCount = 5;

template <typename Scalar>
using MatrixRef = Eigen::Ref<Matrix<Scalar>>;
template <typename Scalar>
using ConstMatrixRef = Eigen::Ref<const Matrix<Scalar>>;
template <typename Scalar>
using RowRef = Eigen::Ref<RowVector<Scalar>>;
template <typename Scalar>
using ConstRowRef = Eigen::Ref<const RowVector<Scalar>>;

// ---- single-memory kernels --------------------------------------------------
//
// Stack rows are ordered top first. out[i] = push*s[i-1] + pop*s[i+1] + noop*s[i]
// with s[-1] := value and s[depth] := 0.

template <typename Scalar>
void stack_update_into(ConstMatrixRef<Scalar> cells, ConstRowRef<Scalar> actions, ConstRowRef<Scalar> value,
                       MatrixRef<Scalar> out);

// Accumulates the vector-Jacobian product of stack_update_into.
template <typename Scalar>
void stack_update_vjp(ConstMatrixRef<Scalar> cells, ConstRowRef<Scalar> actions, ConstRowRef<Scalar> value,
                      ConstMatrixRef<Scalar> grad_out, MatrixRef<Scalar> grad_cells, RowRef<Scalar> grad_actions,
                      RowRef<Scalar> grad_value);

// cells'[c] = (1 - w*head[c]) cells[c] + w*head[c] value, w = total write probability.
template <typename Scalar>
void tape_write_into(ConstMatrixRef<Scalar> cells, ConstRowRef<Scalar> head, ConstRowRef<Scalar> actions,
                     ConstRowRef<Scalar> value, MatrixRef<Scalar> out);

template <typename Scalar>
void tape_write_vjp(ConstMatrixRef<Scalar> cells, ConstRowRef<Scalar> head, ConstRowRef<Scalar> actions,
                    ConstRowRef<Scalar> value, ConstMatrixRef<Scalar> grad_out, MatrixRef<Scalar> grad_cells,
                    RowRef<Scalar> grad_head, RowRef<Scalar> grad_actions, RowRef<Scalar> grad_value);

// head' = sum_d actions[d] * roll(head, shift_d) with shifts {-1, +1, 0, -jump, +jump}, circular.
template <typename Scalar>
void tape_move_into(ConstRowRef<Scalar> head, ConstRowRef<Scalar> actions, Index jump, RowRef<Scalar> out);

template <typename Scalar>
void tape_move_vjp(ConstRowRef<Scalar> head, ConstRowRef<Scalar> actions, Index jump, ConstRowRef<Scalar> grad_out,
                   RowRef<Scalar> grad_head, RowRef<Scalar> grad_actions);

// ---- value types --------------------------------------------------------------

template <typename Scalar>
struct DiffStack {
  Matrix<Scalar> cells;  // depth x width, row 0 is the top

  explicit DiffStack(Index depth = kTrainingStackDepth, Index width = kCellWidth)
      : cells(Matrix<Scalar>::Zero(depth, width)) {}

  Index depth() const { return cells.rows(); }
  Index width() const { return cells.cols(); }

  void update(const RowVector<Scalar>& actions, const RowVector<Scalar>& value);
  RowVector<Scalar> read() const { return cells.row(0); }
  // New rows are zero; existing rows keep their positions.
  void grow(Index new_depth);
};

template <typename Scalar>
struct DiffTape {
  Matrix<Scalar> cells;    // n_cells x width
  RowVector<Scalar> head;  // distribution over cells

  explicit DiffTape(Index n_cells = kTrainingTapeCells, Index width = kCellWidth);

  Index size() const { return cells.rows(); }
  Index width() const { return cells.cols(); }

  // Writes under the current head, then moves it.
  void update(const RowVector<Scalar>& actions, const RowVector<Scalar>& value, Index jump);
  RowVector<Scalar> read() const { return head * cells; }
  // Inserts zero cells opposite the head's mode so circular distances from the
  // head are preserved; returns the insertion index (original cells >= it shift up).
  Index grow(Index new_cells);
};

// ---- autodiff ops over batches (one memory per row) -------------------------

// cells: B x (depth*width), actions: B x 3, value: B x width.
template <typename Scalar>
Var<Scalar> stack_update(Var<Scalar> cells, Var<Scalar> actions, Var<Scalar> value, Index width);

template <typename Scalar>
Var<Scalar> stack_read(Var<Scalar> cells, Index width);

// cells: B x (n*width), head: B x n, actions: B x 5, value: B x width.
template <typename Scalar>
Var<Scalar> tape_write(Var<Scalar> cells, Var<Scalar> head, Var<Scalar> actions, Var<Scalar> value);

// jumps: one jump distance per batch row.
template <typename Scalar>
Var<Scalar> tape_move(Var<Scalar> head, Var<Scalar> actions, std::span<const int> jumps);

template <typename Scalar>
Var<Scalar> tape_read(Var<Scalar> cells, Var<Scalar> head);

}  // namespace chomsky

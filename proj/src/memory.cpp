#include "chomsky/memory.hpp"

#include <algorithm>

namespace chomsky {

namespace {

Index wrap(Index i, Index n) { return ((i % n) + n) % n; }

// out[c] = in[(c - shift) mod n]
template <typename Scalar>
void roll_into(ConstRowRef<Scalar> in, Index shift, RowVector<Scalar>& out) {
  const Index n = in.size();
  const Index s = wrap(shift, n);
  out.resize(n);
  out.segment(s, n - s) = in.segment(0, n - s);
  out.segment(0, s) = in.segment(n - s, s);
}

template <typename Scalar>
std::array<Index, kTapeActionCount> tape_shifts(Index jump) {
  return {-1, 1, 0, -jump, jump};
}

template <typename Scalar>
Scalar write_mass(ConstRowRef<Scalar> actions) {
  return actions(kWriteLeft) + actions(kWriteRight) + actions(kWriteStay);
}

template <typename Scalar>
using ConstMap = Eigen::Map<const Matrix<Scalar>>;
template <typename Scalar>
using MutMap = Eigen::Map<Matrix<Scalar>>;

}  // namespace

// ---- kernels ----------------------------------------------------------------

template <typename Scalar>
void stack_update_into(ConstMatrixRef<Scalar> cells, ConstRowRef<Scalar> actions, ConstRowRef<Scalar> value,
                       MatrixRef<Scalar> out) {
  const Index d = cells.rows();
  const Scalar push = actions(kPush), pop = actions(kPop), noop = actions(kNoop);
  out = noop * cells;
  out.row(0) += push * value;
  out.bottomRows(d - 1) += push * cells.topRows(d - 1);
  out.topRows(d - 1) += pop * cells.bottomRows(d - 1);
}

template <typename Scalar>
void stack_update_vjp(ConstMatrixRef<Scalar> cells, ConstRowRef<Scalar> actions, ConstRowRef<Scalar> value,
                      ConstMatrixRef<Scalar> grad_out, MatrixRef<Scalar> grad_cells, RowRef<Scalar> grad_actions,
                      RowRef<Scalar> grad_value) {
  const Index d = cells.rows();
  const Scalar push = actions(kPush), pop = actions(kPop), noop = actions(kNoop);
  grad_cells += noop * grad_out;
  grad_cells.topRows(d - 1) += push * grad_out.bottomRows(d - 1);
  grad_cells.bottomRows(d - 1) += pop * grad_out.topRows(d - 1);
  grad_value += push * grad_out.row(0);
  grad_actions(kPush) += grad_out.row(0).dot(value) +
                         grad_out.bottomRows(d - 1).cwiseProduct(cells.topRows(d - 1)).sum();
  grad_actions(kPop) += grad_out.topRows(d - 1).cwiseProduct(cells.bottomRows(d - 1)).sum();
  grad_actions(kNoop) += grad_out.cwiseProduct(cells).sum();
}

template <typename Scalar>
void tape_write_into(ConstMatrixRef<Scalar> cells, ConstRowRef<Scalar> head, ConstRowRef<Scalar> actions,
                     ConstRowRef<Scalar> value, MatrixRef<Scalar> out) {
  const Scalar w = write_mass<Scalar>(actions);
  for (Index c = 0; c < cells.rows(); ++c) {
    const Scalar k = w * head(c);
    out.row(c) = (Scalar(1) - k) * cells.row(c) + k * value;
  }
}

template <typename Scalar>
void tape_write_vjp(ConstMatrixRef<Scalar> cells, ConstRowRef<Scalar> head, ConstRowRef<Scalar> actions,
                    ConstRowRef<Scalar> value, ConstMatrixRef<Scalar> grad_out, MatrixRef<Scalar> grad_cells,
                    RowRef<Scalar> grad_head, RowRef<Scalar> grad_actions, RowRef<Scalar> grad_value) {
  const Scalar w = write_mass<Scalar>(actions);
  Scalar dw = 0;
  for (Index c = 0; c < cells.rows(); ++c) {
    const Scalar k = w * head(c);
    grad_cells.row(c) += (Scalar(1) - k) * grad_out.row(c);
    grad_value += k * grad_out.row(c);
    const Scalar g = grad_out.row(c).dot(value - cells.row(c));
    grad_head(c) += w * g;
    dw += head(c) * g;
  }
  grad_actions(kWriteLeft) += dw;
  grad_actions(kWriteRight) += dw;
  grad_actions(kWriteStay) += dw;
}

template <typename Scalar>
void tape_move_into(ConstRowRef<Scalar> head, ConstRowRef<Scalar> actions, Index jump, RowRef<Scalar> out) {
  const auto shifts = tape_shifts<Scalar>(jump);
  RowVector<Scalar> rolled;
  out.setZero();
  for (Index a = 0; a < kTapeActionCount; ++a) {
    roll_into<Scalar>(head, shifts[a], rolled);
    out += actions(a) * rolled;
  }
}

template <typename Scalar>
void tape_move_vjp(ConstRowRef<Scalar> head, ConstRowRef<Scalar> actions, Index jump, ConstRowRef<Scalar> grad_out,
                   RowRef<Scalar> grad_head, RowRef<Scalar> grad_actions) {
  const auto shifts = tape_shifts<Scalar>(jump);
  RowVector<Scalar> rolled;
  for (Index a = 0; a < kTapeActionCount; ++a) {
    roll_into<Scalar>(head, shifts[a], rolled);
    grad_actions(a) += grad_out.dot(rolled);
    roll_into<Scalar>(grad_out, -shifts[a], rolled);
    grad_head += actions(a) * rolled;
  }
}

// ---- value types --------------------------------------------------------------

template <typename Scalar>
void DiffStack<Scalar>::update(const RowVector<Scalar>& actions, const RowVector<Scalar>& value) {
  if (actions.size() != kStackActionCount || value.size() != width()) throw InvalidInput("stack update: bad shapes");
  Matrix<Scalar> next(cells.rows(), cells.cols());
  stack_update_into<Scalar>(cells, actions, value, next);
  cells = std::move(next);
}

template <typename Scalar>
void DiffStack<Scalar>::grow(Index new_depth) {
  if (new_depth < depth()) throw InvalidInput("stack grow: cannot shrink");
  Matrix<Scalar> bigger = Matrix<Scalar>::Zero(new_depth, width());
  bigger.topRows(depth()) = cells;
  cells = std::move(bigger);
}

template <typename Scalar>
DiffTape<Scalar>::DiffTape(Index n_cells, Index width)
    : cells(Matrix<Scalar>::Zero(n_cells, width)), head(RowVector<Scalar>::Zero(n_cells)) {
  if (n_cells < 1) throw InvalidInput("tape needs at least one cell");
  head(0) = 1;
}

template <typename Scalar>
void DiffTape<Scalar>::update(const RowVector<Scalar>& actions, const RowVector<Scalar>& value, Index jump) {
  if (actions.size() != kTapeActionCount || value.size() != width()) throw InvalidInput("tape update: bad shapes");
  if (jump < 1) throw InvalidInput("tape update: jump must be >= 1");
  Matrix<Scalar> next(cells.rows(), cells.cols());
  tape_write_into<Scalar>(cells, head, actions, value, next);
  RowVector<Scalar> moved(head.size());
  tape_move_into<Scalar>(head, actions, jump, moved);
  cells = std::move(next);
  head = std::move(moved);
}

template <typename Scalar>
Index DiffTape<Scalar>::grow(Index new_cells) {
  const Index n = size();
  if (new_cells < n) throw InvalidInput("tape grow: cannot shrink");
  if (new_cells == n) return n;
  Index mode = 0;
  head.maxCoeff(&mode);
  Index pivot = wrap(mode + (n + 1) / 2, n);
  if (pivot == 0) pivot = n;
  Matrix<Scalar> bigger = Matrix<Scalar>::Zero(new_cells, width());
  RowVector<Scalar> bigger_head = RowVector<Scalar>::Zero(new_cells);
  bigger.topRows(pivot) = cells.topRows(pivot);
  bigger.bottomRows(n - pivot) = cells.bottomRows(n - pivot);
  bigger_head.head(pivot) = head.head(pivot);
  bigger_head.tail(n - pivot) = head.tail(n - pivot);
  cells = std::move(bigger);
  head = std::move(bigger_head);
  return pivot;
}

// ---- autodiff ops -------------------------------------------------------------

template <typename Scalar>
Var<Scalar> stack_update(Var<Scalar> cells, Var<Scalar> actions, Var<Scalar> value, Index width) {
  const Index batch = cells.rows();
  if (width < 1 || cells.cols() % width != 0) throw InvalidInput("stack_update: cells not a multiple of width");
  if (actions.rows() != batch || actions.cols() != kStackActionCount || value.rows() != batch ||
      value.cols() != width)
    throw InvalidInput("stack_update: bad shapes");
  // Each row holds one stack flattened top first, so shifting by a cell is a
  // shift by `width` columns.
  const Index n = cells.cols(), rest = n - width;
  const auto& C = cells.value();
  const auto& A = actions.value();
  const auto& V = value.value();
  Matrix<Scalar> out(batch, n);
  for (Index r = 0; r < batch; ++r) {
    const Scalar push = A(r, kPush), pop = A(r, kPop), noop = A(r, kNoop);
    auto o = out.row(r);
    auto c = C.row(r);
    o = noop * c;
    o.head(width) += push * V.row(r);
    if (rest > 0) {
      o.tail(rest) += push * c.head(rest);
      o.head(rest) += pop * c.tail(rest);
    }
  }
  int ic = cells.id, ia = actions.id, iv = value.id;
  return cells.graph->add_node(std::move(out), {cells, actions, value}, [ic, ia, iv, width, rest](Graph<Scalar>& g, int self) {
    const auto& C = g.value(ic);
    const auto& A = g.value(ia);
    const auto& V = g.value(iv);
    const auto& G = g.grad(self);
    const bool need_c = g.requires_grad(ic), need_a = g.requires_grad(ia), need_v = g.requires_grad(iv);
    for (Index r = 0; r < C.rows(); ++r) {
      const Scalar push = A(r, kPush), pop = A(r, kPop), noop = A(r, kNoop);
      auto gr = G.row(r);
      auto c = C.row(r);
      if (need_c) {
        auto dc = g.grad(ic).row(r);
        dc += noop * gr;
        if (rest > 0) {
          dc.head(rest) += push * gr.tail(rest);
          dc.tail(rest) += pop * gr.head(rest);
        }
      }
      if (need_a) {
        auto da = g.grad(ia).row(r);
        da(kPush) += gr.head(width).dot(V.row(r));
        if (rest > 0) {
          da(kPush) += gr.tail(rest).dot(c.head(rest));
          da(kPop) += gr.head(rest).dot(c.tail(rest));
        }
        da(kNoop) += gr.dot(c);
      }
      if (need_v) g.grad(iv).row(r) += push * gr.head(width);
    }
  });
}

template <typename Scalar>
Var<Scalar> stack_read(Var<Scalar> cells, Index width) {
  return slice_cols(cells, 0, width);
}

template <typename Scalar>
Var<Scalar> tape_write(Var<Scalar> cells, Var<Scalar> head, Var<Scalar> actions, Var<Scalar> value) {
  const Index batch = cells.rows();
  const Index n = head.cols();
  const Index width = value.cols();
  if (head.rows() != batch || actions.rows() != batch || value.rows() != batch || cells.cols() != n * width ||
      actions.cols() != kTapeActionCount)
    throw InvalidInput("tape_write: bad shapes");
  const auto& C = cells.value();
  const auto& H = head.value();
  const auto& A = actions.value();
  const auto& V = value.value();
  Matrix<Scalar> out(batch, C.cols());
  for (Index b = 0; b < batch; ++b) {
    MutMap<Scalar> ob(out.data() + b * out.cols(), n, width);
    tape_write_into<Scalar>(ConstMap<Scalar>(C.data() + b * C.cols(), n, width), H.row(b), A.row(b), V.row(b), ob);
  }
  int ic = cells.id, ih = head.id, ia = actions.id, iv = value.id;
  return cells.graph->add_node(
      std::move(out), {cells, head, actions, value}, [ic, ih, ia, iv, n, width](Graph<Scalar>& g, int self) {
        const auto& C = g.value(ic);
        const auto& H = g.value(ih);
        const auto& A = g.value(ia);
        const auto& V = g.value(iv);
        const auto& G = g.grad(self);
        const Index batch = C.rows();
        Matrix<Scalar> dC = Matrix<Scalar>::Zero(batch, C.cols());
        Matrix<Scalar> dH = Matrix<Scalar>::Zero(batch, n);
        Matrix<Scalar> dA = Matrix<Scalar>::Zero(batch, A.cols());
        Matrix<Scalar> dV = Matrix<Scalar>::Zero(batch, width);
        for (Index b = 0; b < batch; ++b) {
          MutMap<Scalar> dcb(dC.data() + b * dC.cols(), n, width);
          tape_write_vjp<Scalar>(ConstMap<Scalar>(C.data() + b * C.cols(), n, width), H.row(b), A.row(b), V.row(b),
                                 ConstMap<Scalar>(G.data() + b * G.cols(), n, width), dcb, dH.row(b), dA.row(b),
                                 dV.row(b));
        }
        if (g.requires_grad(ic)) g.grad(ic) += dC;
        if (g.requires_grad(ih)) g.grad(ih) += dH;
        if (g.requires_grad(ia)) g.grad(ia) += dA;
        if (g.requires_grad(iv)) g.grad(iv) += dV;
      });
}

template <typename Scalar>
Var<Scalar> tape_move(Var<Scalar> head, Var<Scalar> actions, std::span<const int> jumps) {
  const Index batch = head.rows();
  if (actions.rows() != batch || actions.cols() != kTapeActionCount || static_cast<Index>(jumps.size()) != batch)
    throw InvalidInput("tape_move: bad shapes");
  for (int j : jumps)
    if (j < 1) throw InvalidInput("tape_move: jump must be >= 1");
  const auto& H = head.value();
  const auto& A = actions.value();
  Matrix<Scalar> out(batch, H.cols());
  for (Index b = 0; b < batch; ++b) tape_move_into<Scalar>(H.row(b), A.row(b), jumps[b], out.row(b));
  int ih = head.id, ia = actions.id;
  std::vector<int> js(jumps.begin(), jumps.end());
  return head.graph->add_node(std::move(out), {head, actions}, [ih, ia, js = std::move(js)](Graph<Scalar>& g, int self) {
    const auto& H = g.value(ih);
    const auto& A = g.value(ia);
    const auto& G = g.grad(self);
    Matrix<Scalar> dH = Matrix<Scalar>::Zero(H.rows(), H.cols());
    Matrix<Scalar> dA = Matrix<Scalar>::Zero(A.rows(), A.cols());
    for (Index b = 0; b < H.rows(); ++b) tape_move_vjp<Scalar>(H.row(b), A.row(b), js[b], G.row(b), dH.row(b), dA.row(b));
    if (g.requires_grad(ih)) g.grad(ih) += dH;
    if (g.requires_grad(ia)) g.grad(ia) += dA;
  });
}

template <typename Scalar>
Var<Scalar> tape_read(Var<Scalar> cells, Var<Scalar> head) {
  const Index batch = cells.rows();
  const Index n = head.cols();
  if (head.rows() != batch || n < 1 || cells.cols() % n != 0) throw InvalidInput("tape_read: bad shapes");
  const Index width = cells.cols() / n;
  const auto& C = cells.value();
  const auto& H = head.value();
  Matrix<Scalar> out(batch, width);
  for (Index b = 0; b < batch; ++b) out.row(b) = H.row(b) * ConstMap<Scalar>(C.data() + b * C.cols(), n, width);
  int ic = cells.id, ih = head.id;
  return cells.graph->add_node(std::move(out), {cells, head}, [ic, ih, n, width](Graph<Scalar>& g, int self) {
    const auto& C = g.value(ic);
    const auto& H = g.value(ih);
    const auto& G = g.grad(self);
    for (Index b = 0; b < C.rows(); ++b) {
      ConstMap<Scalar> cb(C.data() + b * C.cols(), n, width);
      if (g.requires_grad(ih)) g.grad(ih).row(b) += G.row(b) * cb.transpose();
      if (g.requires_grad(ic)) {
        auto& dC = g.grad(ic);
        MutMap<Scalar> dcb(dC.data() + b * dC.cols(), n, width);
        dcb.noalias() += H.row(b).transpose() * G.row(b);
      }
    }
  });
}

#define CHOMSKY_INSTANTIATE_MEMORY(S)                                                                          \
  template void stack_update_into<S>(ConstMatrixRef<S>, ConstRowRef<S>, ConstRowRef<S>, MatrixRef<S>);         \
  template void stack_update_vjp<S>(ConstMatrixRef<S>, ConstRowRef<S>, ConstRowRef<S>, ConstMatrixRef<S>,      \
                                    MatrixRef<S>, RowRef<S>, RowRef<S>);                                       \
  template void tape_write_into<S>(ConstMatrixRef<S>, ConstRowRef<S>, ConstRowRef<S>, ConstRowRef<S>,          \
                                   MatrixRef<S>);                                                              \
  template void tape_write_vjp<S>(ConstMatrixRef<S>, ConstRowRef<S>, ConstRowRef<S>, ConstRowRef<S>,           \
                                  ConstMatrixRef<S>, MatrixRef<S>, RowRef<S>, RowRef<S>, RowRef<S>);           \
  template void tape_move_into<S>(ConstRowRef<S>, ConstRowRef<S>, Index, RowRef<S>);                           \
  template void tape_move_vjp<S>(ConstRowRef<S>, ConstRowRef<S>, Index, ConstRowRef<S>, RowRef<S>, RowRef<S>); \
  template struct DiffStack<S>;                                                                                \
  template struct DiffTape<S>;                                                                                 \
  template Var<S> stack_update(Var<S>, Var<S>, Var<S>, Index);                                                 \
  template Var<S> stack_read(Var<S>, Index);                                                                   \
  template Var<S> tape_write(Var<S>, Var<S>, Var<S>, Var<S>);                                                  \
  template Var<S> tape_move(Var<S>, Var<S>, std::span<const int>);                                             \
  template Var<S> tape_read(Var<S>, Var<S>);

CHOMSKY_INSTANTIATE_MEMORY(float)
CHOMSKY_INSTANTIATE_MEMORY(double)

}  // namespace chomsky

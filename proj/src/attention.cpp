#include "chomsky/models.hpp"

#include <cmath>
#include <limits>

namespace chomsky {

template <typename Scalar>
Var<Scalar> attention(Var<Scalar> q, Var<Scalar> k, Var<Scalar> v, const AttentionOptions<Scalar>& o) {
  const Index B = o.batch, T = o.steps, H = o.heads;
  const Index D = q.cols();
  if (B < 1 || T < 1 || H < 1) throw InvalidInput("attention: batch, steps and heads must be positive");
  if (D % H != 0) throw InvalidInput("attention: width not divisible by heads");
  if (q.rows() != B * T || k.rows() != B * T || v.rows() != B * T || k.cols() != D || v.cols() != D)
    throw InvalidInput("attention: q, k, v must all be (batch*steps) x width");
  if (!o.lengths.empty() && static_cast<Index>(o.lengths.size()) != B)
    throw InvalidInput("attention: one length per sequence required");
  if (o.bias && (o.bias->rows() != H * T || o.bias->cols() != T))
    throw InvalidInput("attention: bias must be (heads*steps) x steps");
  if (o.dropout < 0 || o.dropout >= 1) throw InvalidInput("attention: dropout must be in [0, 1)");
  if (o.dropout > 0 && !o.rng) throw InvalidInput("attention: dropout needs an rng");
  const RelativeTerms<Scalar>* rel = o.relative;
  if (rel) {
    if (rel->content_bias.rows() != 1 || rel->content_bias.cols() != D || rel->position_bias.rows() != 1 ||
        rel->position_bias.cols() != D || rel->relative.rows() != 2 * T - 1 || rel->relative.cols() != D)
      throw InvalidInput("attention: relative terms have wrong shapes");
  }

  const Index dh = D / H;
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));
  const Scalar neg_inf = -std::numeric_limits<Scalar>::infinity();
  const bool keep = q.graph->recording();

  const auto& Q = q.value();
  const auto& K = k.value();
  const auto& V = v.value();
  Matrix<Scalar> out(B * T, D);
  std::vector<Matrix<Scalar>> probs, masks;
  if (keep) {
    probs.resize(B * H);
    if (o.dropout > 0) masks.resize(B * H);
  }
  const std::uint64_t threshold = keep_threshold(1.0 - static_cast<double>(o.dropout));
  const Scalar keep_scale = Scalar(1) / (Scalar(1) - o.dropout);

  Matrix<Scalar> S(T, T), Z;
  for (Index b = 0; b < B; ++b) {
    const Index len = o.lengths.empty() ? T : o.lengths[b];
    if (len < 1 || len > T) throw InvalidInput("attention: sequence length out of range");
    for (Index h = 0; h < H; ++h) {
      auto Qb = Q.block(b * T, h * dh, T, dh);
      auto Kb = K.block(b * T, h * dh, T, dh);
      auto Vb = V.block(b * T, h * dh, T, dh);
      if (rel) {
        Matrix<Scalar> Qu = Qb.rowwise() + rel->content_bias.value().row(0).segment(h * dh, dh);
        Matrix<Scalar> Qv = Qb.rowwise() + rel->position_bias.value().row(0).segment(h * dh, dh);
        S.noalias() = Qu * Kb.transpose();
        Z.noalias() = Qv * rel->relative.value().middleCols(h * dh, dh).transpose();
        for (Index i = 0; i < T; ++i)
          for (Index j = 0; j < T; ++j) S(i, j) += Z(i, i - j + T - 1);
      } else {
        S.noalias() = Qb * Kb.transpose();
      }
      S *= scale;
      if (o.bias) S += o.bias->middleRows(h * T, T);
      for (Index i = 0; i < T; ++i) {
        for (Index j = 0; j < T; ++j)
          if (j >= len || (o.causal && j > i)) S(i, j) = neg_inf;
      }
      softmax_rows_inplace(S);
      if (o.weights_out) o.weights_out->push_back(S);
      Matrix<Scalar> P = S;
      if (o.dropout > 0) {
        Matrix<Scalar> M(T, T);
        for (Index i = 0; i < T; ++i)
          for (Index j = 0; j < T; ++j) M(i, j) = (*o.rng)() < threshold ? keep_scale : Scalar(0);
        P = P.cwiseProduct(M);
        if (keep) masks[b * H + h] = std::move(M);
      }
      out.block(b * T, h * dh, T, dh).noalias() = P * Vb;
      if (keep) probs[b * H + h] = S;
    }
  }

  std::vector<Var<Scalar>> parents{q, k, v};
  if (rel) {
    parents.push_back(rel->content_bias);
    parents.push_back(rel->position_bias);
    parents.push_back(rel->relative);
  }
  const int iq = q.id, ik = k.id, iv = v.id;
  const int iu = rel ? rel->content_bias.id : -1;
  const int ipv = rel ? rel->position_bias.id : -1;
  const int ir = rel ? rel->relative.id : -1;
  return q.graph->add_node(
      std::move(out), std::span<const Var<Scalar>>(parents),
      [=, probs = std::move(probs), masks = std::move(masks)](Graph<Scalar>& g, int self) {
        const auto& G = g.grad(self);
        const auto& Q = g.value(iq);
        const auto& K = g.value(ik);
        const auto& V = g.value(iv);
        Matrix<Scalar> dQ = Matrix<Scalar>::Zero(B * T, D);
        Matrix<Scalar> dK = Matrix<Scalar>::Zero(B * T, D);
        Matrix<Scalar> dV = Matrix<Scalar>::Zero(B * T, D);
        Matrix<Scalar> du, dpv, dR;
        if (iu >= 0) {
          du = Matrix<Scalar>::Zero(1, D);
          dpv = Matrix<Scalar>::Zero(1, D);
          dR = Matrix<Scalar>::Zero(2 * T - 1, D);
        }
        Matrix<Scalar> dP, dS, dZ;
        for (Index b = 0; b < B; ++b) {
          for (Index h = 0; h < H; ++h) {
            const Matrix<Scalar>& P = probs[b * H + h];
            auto Gb = G.block(b * T, h * dh, T, dh);
            auto Qb = Q.block(b * T, h * dh, T, dh);
            auto Kb = K.block(b * T, h * dh, T, dh);
            auto Vb = V.block(b * T, h * dh, T, dh);
            dP.noalias() = Gb * Vb.transpose();
            if (masks.empty()) {
              dV.block(b * T, h * dh, T, dh).noalias() += P.transpose() * Gb;
            } else {
              const Matrix<Scalar>& M = masks[b * H + h];
              dV.block(b * T, h * dh, T, dh).noalias() += P.cwiseProduct(M).transpose() * Gb;
              dP = dP.cwiseProduct(M);
            }
            Eigen::Matrix<Scalar, Eigen::Dynamic, 1> row_dot = dP.cwiseProduct(P).rowwise().sum();
            dS = P.cwiseProduct(dP.colwise() - row_dot) * scale;
            if (iu >= 0) {
              const auto& u = g.value(iu);
              const auto& pv = g.value(ipv);
              const auto& R = g.value(ir);
              Matrix<Scalar> Qu = Qb.rowwise() + u.row(0).segment(h * dh, dh);
              Matrix<Scalar> Qv = Qb.rowwise() + pv.row(0).segment(h * dh, dh);
              Matrix<Scalar> dQc = dS * Kb;
              dK.block(b * T, h * dh, T, dh).noalias() += dS.transpose() * Qu;
              dZ = Matrix<Scalar>::Zero(T, 2 * T - 1);
              for (Index i = 0; i < T; ++i)
                for (Index j = 0; j < T; ++j) dZ(i, i - j + T - 1) = dS(i, j);
              Matrix<Scalar> dQr = dZ * R.middleCols(h * dh, dh);
              dR.middleCols(h * dh, dh).noalias() += dZ.transpose() * Qv;
              du.middleCols(h * dh, dh) += dQc.colwise().sum();
              dpv.middleCols(h * dh, dh) += dQr.colwise().sum();
              dQ.block(b * T, h * dh, T, dh) += dQc + dQr;
            } else {
              dQ.block(b * T, h * dh, T, dh).noalias() += dS * Kb;
              dK.block(b * T, h * dh, T, dh).noalias() += dS.transpose() * Qb;
            }
          }
        }
        if (g.requires_grad(iq)) g.grad(iq) += dQ;
        if (g.requires_grad(ik)) g.grad(ik) += dK;
        if (g.requires_grad(iv)) g.grad(iv) += dV;
        if (iu >= 0) {
          if (g.requires_grad(iu)) g.grad(iu) += du;
          if (g.requires_grad(ipv)) g.grad(ipv) += dpv;
          if (g.requires_grad(ir)) g.grad(ir) += dR;
        }
      });
}

namespace {

// angle for pair i of a head of width dh at position p
double rope_angle(Index p, Index i, Index dh) {
  return static_cast<double>(p) * std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(dh));
}

template <typename Scalar>
void rotate(const Matrix<Scalar>& in, Matrix<Scalar>& out, Index steps, Index heads, double sign) {
  const Index dh = in.cols() / heads;
  out = in;
  for (Index r = 0; r < in.rows(); ++r) {
    const Index p = r % steps;
    for (Index h = 0; h < heads; ++h) {
      for (Index i = 0; 2 * i + 1 < dh; ++i) {
        const double a = rope_angle(p, i, dh);
        const Scalar c = static_cast<Scalar>(std::cos(a));
        const Scalar s = static_cast<Scalar>(sign * std::sin(a));
        const Index j = h * dh + 2 * i;
        const Scalar x0 = in(r, j), x1 = in(r, j + 1);
        out(r, j) = x0 * c - x1 * s;
        out(r, j + 1) = x0 * s + x1 * c;
      }
    }
  }
}

}  // namespace

template <typename Scalar>
Var<Scalar> rotary_embedding(Var<Scalar> x, Index steps, Index heads) {
  if (steps < 1 || heads < 1 || x.cols() % heads != 0 || x.rows() % steps != 0)
    throw InvalidInput("rotary_embedding: shape does not match steps and heads");
  Matrix<Scalar> out;
  rotate(x.value(), out, steps, heads, 1.0);
  const int ix = x.id;
  return x.graph->add_node(std::move(out), {x}, [ix, steps, heads](Graph<Scalar>& g, int self) {
    if (!g.requires_grad(ix)) return;
    Matrix<Scalar> back;
    rotate(g.grad(self), back, steps, heads, -1.0);
    g.grad(ix) += back;
  });
}

template <typename Scalar>
Matrix<Scalar> sinusoid_table(std::span<const double> positions, Index dim) {
  if (dim < 1) throw InvalidInput("sinusoid_table: dim must be positive");
  Matrix<Scalar> out(static_cast<Index>(positions.size()), dim);
  for (Index r = 0; r < out.rows(); ++r) {
    for (Index c = 0; c < dim; ++c) {
      const Index i = c / 2;
      const double a = positions[r] / std::pow(10000.0, 2.0 * static_cast<double>(i) / static_cast<double>(dim));
      out(r, c) = static_cast<Scalar>(c % 2 == 0 ? std::sin(a) : std::cos(a));
    }
  }
  return out;
}

template <typename Scalar>
Matrix<Scalar> alibi_bias(Index steps, Index heads) {
  if (steps < 1 || heads < 1) throw InvalidInput("alibi_bias: steps and heads must be positive");
  Matrix<Scalar> out(heads * steps, steps);
  for (Index h = 0; h < heads; ++h) {
    const double slope = std::pow(2.0, -8.0 * static_cast<double>(h + 1) / static_cast<double>(heads));
    for (Index i = 0; i < steps; ++i)
      for (Index j = 0; j < steps; ++j)
        out(h * steps + i, j) = static_cast<Scalar>(-slope * static_cast<double>(std::abs(i - j)));
  }
  return out;
}

#define CHOMSKY_INSTANTIATE_ATTENTION(S)                                                \
  template Var<S> attention(Var<S>, Var<S>, Var<S>, const AttentionOptions<S>&);        \
  template Var<S> rotary_embedding(Var<S>, Index, Index);                               \
  template Matrix<S> sinusoid_table(std::span<const double>, Index);                    \
  template Matrix<S> alibi_bias(Index, Index);

CHOMSKY_INSTANTIATE_ATTENTION(float)
CHOMSKY_INSTANTIATE_ATTENTION(double)

}  // namespace chomsky

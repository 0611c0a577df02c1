#include "chomsky/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace chomsky {

// ---- ParamStore -------------------------------------------------------------

template <typename Scalar>
Parameter<Scalar>& ParamStore<Scalar>::add(std::string name, Matrix<Scalar> init) {
  if (index_.count(name)) throw InvalidInput("duplicate parameter name: " + name);
  auto p = std::make_unique<Parameter<Scalar>>();
  p->name = name;
  p->grad = Matrix<Scalar>::Zero(init.rows(), init.cols());
  p->m = Matrix<Scalar>::Zero(init.rows(), init.cols());
  p->v = Matrix<Scalar>::Zero(init.rows(), init.cols());
  p->value = std::move(init);
  index_.emplace(std::move(name), params_.size());
  params_.push_back(std::move(p));
  return *params_.back();
}

template <typename Scalar>
long ParamStore<Scalar>::find_index(std::string_view name) const {
  auto it = index_.find(name);
  return it == index_.end() ? -1 : static_cast<long>(it->second);
}

template <typename Scalar>
Parameter<Scalar>* ParamStore<Scalar>::find(std::string_view name) {
  long i = find_index(name);
  return i < 0 ? nullptr : params_[i].get();
}

template <typename Scalar>
Parameter<Scalar>& ParamStore<Scalar>::operator[](std::string_view name) {
  long i = find_index(name);
  if (i < 0) throw InvalidInput("unknown parameter: " + std::string(name));
  return *params_[i];
}

template <typename Scalar>
const Parameter<Scalar>& ParamStore<Scalar>::operator[](std::string_view name) const {
  long i = find_index(name);
  if (i < 0) throw InvalidInput("unknown parameter: " + std::string(name));
  return *params_[i];
}

template <typename Scalar>
void ParamStore<Scalar>::zero_grad() {
  for (auto& p : params_) p->grad.setZero();
}

template <typename Scalar>
Index ParamStore<Scalar>::parameter_count() const {
  Index n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

// ---- Graph ------------------------------------------------------------------

template <typename Scalar>
Var<Scalar> Graph<Scalar>::constant(Matrix<Scalar> value) {
  Node node;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

template <typename Scalar>
Var<Scalar> Graph<Scalar>::param(Parameter<Scalar>& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return {this, it->second};
  Node node;
  node.value = p.value;
  node.param = &p;
  node.requires_grad = recording_;
  nodes_.push_back(std::move(node));
  int id = static_cast<int>(nodes_.size()) - 1;
  param_nodes_.emplace(&p, id);
  return {this, id};
}

template <typename Scalar>
Var<Scalar> Graph<Scalar>::add_node(Matrix<Scalar> value, std::initializer_list<Var<Scalar>> parents,
                                    BackwardFn backward) {
  return add_node(std::move(value), std::span<const Var<Scalar>>(parents.begin(), parents.size()),
                  std::move(backward));
}

template <typename Scalar>
Var<Scalar> Graph<Scalar>::add_node(Matrix<Scalar> value, std::span<const Var<Scalar>> parents,
                                    BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  if (recording_) {
    for (const auto& p : parents) {
      if (p.graph != this) throw InvalidInput("operand belongs to a different graph");
      node.requires_grad = node.requires_grad || nodes_[p.id].requires_grad;
    }
    if (node.requires_grad) node.backward = std::move(backward);
  }
  nodes_.push_back(std::move(node));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

template <typename Scalar>
Matrix<Scalar>& Graph<Scalar>::grad(int id) {
  Node& n = nodes_[id];
  if (n.grad.size() != n.value.size()) n.grad = Matrix<Scalar>::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

template <typename Scalar>
void Graph<Scalar>::backward(Var<Scalar> loss) {
  if (loss.graph != this) throw InvalidInput("loss belongs to a different graph");
  if (loss.rows() != 1 || loss.cols() != 1) throw InvalidInput("backward requires a scalar loss");
  if (!recording_) throw InvalidInput("backward on a non-recording graph");
  grad(loss.id)(0, 0) += Scalar(1);
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.param) {
      if (n.param->grad.size() != n.grad.size()) n.param->grad = Matrix<Scalar>::Zero(n.grad.rows(), n.grad.cols());
      n.param->grad += n.grad;
    } else if (n.backward) {
      n.backward(*this, i);
    }
  }
}

// ---- primitives -------------------------------------------------------------

namespace {

template <typename Scalar>
void require_same_graph(Var<Scalar> a, Var<Scalar> b) {
  if (a.graph != b.graph) throw InvalidInput("operands belong to different graphs");
}

// Shape rule shared by the broadcasting elementwise ops.
template <typename Scalar>
bool row_broadcast(Var<Scalar> a, Var<Scalar> b, const char* op) {
  require_same_graph(a, b);
  if (a.rows() == b.rows() && a.cols() == b.cols()) return false;
  if (b.rows() == 1 && b.cols() == a.cols()) return true;
  throw InvalidInput(std::string(op) + ": incompatible shapes");
}

}  // namespace

template <typename Scalar>
Var<Scalar> matmul(Var<Scalar> a, Var<Scalar> b) {
  require_same_graph(a, b);
  if (a.cols() != b.rows()) throw InvalidInput("matmul: inner extents disagree");
  Matrix<Scalar> out = a.value() * b.value();
  int ia = a.id, ib = b.id;
  return a.graph->add_node(std::move(out), {a, b}, [ia, ib](Graph<Scalar>& g, int self) {
    const auto& G = g.grad(self);
    if (g.requires_grad(ia)) g.grad(ia).noalias() += G * g.value(ib).transpose();
    if (g.requires_grad(ib)) g.grad(ib).noalias() += g.value(ia).transpose() * G;
  });
}

template <typename Scalar>
Var<Scalar> add(Var<Scalar> a, Var<Scalar> b) {
  bool bc = row_broadcast(a, b, "add");
  Matrix<Scalar> out = a.value();
  if (bc)
    out.rowwise() += b.value().row(0);
  else
    out += b.value();
  int ia = a.id, ib = b.id;
  return a.graph->add_node(std::move(out), {a, b}, [ia, ib, bc](Graph<Scalar>& g, int self) {
    const auto& G = g.grad(self);
    if (g.requires_grad(ia)) g.grad(ia) += G;
    if (g.requires_grad(ib)) {
      if (bc)
        g.grad(ib) += G.colwise().sum();
      else
        g.grad(ib) += G;
    }
  });
}

template <typename Scalar>
Var<Scalar> sub(Var<Scalar> a, Var<Scalar> b) {
  bool bc = row_broadcast(a, b, "sub");
  Matrix<Scalar> out = a.value();
  if (bc)
    out.rowwise() -= b.value().row(0);
  else
    out -= b.value();
  int ia = a.id, ib = b.id;
  return a.graph->add_node(std::move(out), {a, b}, [ia, ib, bc](Graph<Scalar>& g, int self) {
    const auto& G = g.grad(self);
    if (g.requires_grad(ia)) g.grad(ia) += G;
    if (g.requires_grad(ib)) {
      if (bc)
        g.grad(ib) -= G.colwise().sum();
      else
        g.grad(ib) -= G;
    }
  });
}

template <typename Scalar>
Var<Scalar> mul(Var<Scalar> a, Var<Scalar> b) {
  bool bc = row_broadcast(a, b, "mul");
  Matrix<Scalar> out;
  if (bc)
    out = a.value().array().rowwise() * b.value().row(0).array();
  else
    out = a.value().cwiseProduct(b.value());
  int ia = a.id, ib = b.id;
  return a.graph->add_node(std::move(out), {a, b}, [ia, ib, bc](Graph<Scalar>& g, int self) {
    const auto& G = g.grad(self);
    const auto& A = g.value(ia);
    const auto& B = g.value(ib);
    if (g.requires_grad(ia)) {
      if (bc)
        g.grad(ia).array() += G.array().rowwise() * B.row(0).array();
      else
        g.grad(ia) += G.cwiseProduct(B);
    }
    if (g.requires_grad(ib)) {
      if (bc)
        g.grad(ib) += G.cwiseProduct(A).colwise().sum();
      else
        g.grad(ib) += G.cwiseProduct(A);
    }
  });
}

template <typename Scalar>
Var<Scalar> scale(Var<Scalar> a, Scalar s) {
  int ia = a.id;
  return a.graph->add_node(a.value() * s, {a}, [ia, s](Graph<Scalar>& g, int self) {
    if (g.requires_grad(ia)) g.grad(ia) += s * g.grad(self);
  });
}

template <typename Scalar>
Var<Scalar> tanh(Var<Scalar> a) {
  int ia = a.id;
  Matrix<Scalar> out = a.value().array().tanh().matrix();
  return a.graph->add_node(std::move(out), {a}, [ia](Graph<Scalar>& g, int self) {
    if (!g.requires_grad(ia)) return;
    const auto& y = g.value(self);
    g.grad(ia).array() += g.grad(self).array() * (Scalar(1) - y.array().square());
  });
}

template <typename Scalar>
Var<Scalar> sigmoid(Var<Scalar> a) {
  int ia = a.id;
  Matrix<Scalar> out = (Scalar(1) / (Scalar(1) + (-a.value().array()).exp())).matrix();
  return a.graph->add_node(std::move(out), {a}, [ia](Graph<Scalar>& g, int self) {
    if (!g.requires_grad(ia)) return;
    const auto& y = g.value(self);
    g.grad(ia).array() += g.grad(self).array() * y.array() * (Scalar(1) - y.array());
  });
}

template <typename Scalar>
Var<Scalar> relu(Var<Scalar> a) {
  int ia = a.id;
  Matrix<Scalar> out = a.value().cwiseMax(Scalar(0));
  return a.graph->add_node(std::move(out), {a}, [ia](Graph<Scalar>& g, int self) {
    if (!g.requires_grad(ia)) return;
    const auto& x = g.value(ia);
    g.grad(ia).array() += (x.array() > Scalar(0)).template cast<Scalar>() * g.grad(self).array();
  });
}

template <typename Scalar>
void softmax_rows_inplace(Matrix<Scalar>& m) {
  for (Index r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    row.array() -= row.maxCoeff();
    // Vectorised exp may return a denormal for -inf; masked entries must be exactly 0.
    row = (row.array() == -std::numeric_limits<Scalar>::infinity()).select(Scalar(0), row.array().exp()).matrix();
    row /= row.sum();
  }
}

template <typename Scalar>
Var<Scalar> softmax(Var<Scalar> a) {
  int ia = a.id;
  Matrix<Scalar> out = a.value();
  softmax_rows_inplace(out);
  return a.graph->add_node(std::move(out), {a}, [ia](Graph<Scalar>& g, int self) {
    if (!g.requires_grad(ia)) return;
    const auto& y = g.value(self);
    const auto& G = g.grad(self);
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> dots = G.cwiseProduct(y).rowwise().sum();
    g.grad(ia).array() += y.array() * (G.colwise() - dots).array();
  });
}

template <typename Scalar>
Var<Scalar> sum(Var<Scalar> a) {
  int ia = a.id;
  Matrix<Scalar> out(1, 1);
  out(0, 0) = a.value().sum();
  return a.graph->add_node(std::move(out), {a}, [ia](Graph<Scalar>& g, int self) {
    if (g.requires_grad(ia)) g.grad(ia).array() += g.grad(self)(0, 0);
  });
}

template <typename Scalar>
Var<Scalar> transpose(Var<Scalar> a) {
  int ia = a.id;
  Matrix<Scalar> out = a.value().transpose();
  return a.graph->add_node(std::move(out), {a}, [ia](Graph<Scalar>& g, int self) {
    if (g.requires_grad(ia)) g.grad(ia) += g.grad(self).transpose();
  });
}

template <typename Scalar>
Var<Scalar> concat_cols(std::span<const Var<Scalar>> parts) {
  if (parts.empty()) throw InvalidInput("concat_cols: no operands");
  Graph<Scalar>* graph = parts[0].graph;
  Index rows = parts[0].rows(), cols = 0;
  std::vector<int> ids;
  std::vector<Index> offsets;
  for (const auto& p : parts) {
    if (p.graph != graph || p.rows() != rows) throw InvalidInput("concat_cols: incompatible operands");
    ids.push_back(p.id);
    offsets.push_back(cols);
    cols += p.cols();
  }
  Matrix<Scalar> out(rows, cols);
  for (std::size_t i = 0; i < parts.size(); ++i) out.middleCols(offsets[i], parts[i].cols()) = parts[i].value();
  return graph->add_node(std::move(out), parts, [ids, offsets](Graph<Scalar>& g, int self) {
    const auto& G = g.grad(self);
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (g.requires_grad(ids[i])) g.grad(ids[i]) += G.middleCols(offsets[i], g.value(ids[i]).cols());
  });
}

template <typename Scalar>
Var<Scalar> concat_rows(std::span<const Var<Scalar>> parts) {
  if (parts.empty()) throw InvalidInput("concat_rows: no operands");
  Graph<Scalar>* graph = parts[0].graph;
  Index rows = 0, cols = parts[0].cols();
  std::vector<int> ids;
  std::vector<Index> offsets;
  for (const auto& p : parts) {
    if (p.graph != graph || p.cols() != cols) throw InvalidInput("concat_rows: incompatible operands");
    ids.push_back(p.id);
    offsets.push_back(rows);
    rows += p.rows();
  }
  Matrix<Scalar> out(rows, cols);
  for (std::size_t i = 0; i < parts.size(); ++i) out.middleRows(offsets[i], parts[i].rows()) = parts[i].value();
  return graph->add_node(std::move(out), parts, [ids, offsets](Graph<Scalar>& g, int self) {
    const auto& G = g.grad(self);
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (g.requires_grad(ids[i])) g.grad(ids[i]) += G.middleRows(offsets[i], g.value(ids[i]).rows());
  });
}

template <typename Scalar>
Var<Scalar> slice_cols(Var<Scalar> a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw InvalidInput("slice_cols: out of range");
  int ia = a.id;
  Matrix<Scalar> out = a.value().middleCols(start, count);
  return a.graph->add_node(std::move(out), {a}, [ia, start, count](Graph<Scalar>& g, int self) {
    if (g.requires_grad(ia)) g.grad(ia).middleCols(start, count) += g.grad(self);
  });
}

template <typename Scalar>
Var<Scalar> slice_rows(Var<Scalar> a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) throw InvalidInput("slice_rows: out of range");
  int ia = a.id;
  Matrix<Scalar> out = a.value().middleRows(start, count);
  return a.graph->add_node(std::move(out), {a}, [ia, start, count](Graph<Scalar>& g, int self) {
    if (g.requires_grad(ia)) g.grad(ia).middleRows(start, count) += g.grad(self);
  });
}

template <typename Scalar>
Var<Scalar> gather_rows(Var<Scalar> a, std::span<const int> rows) {
  const auto& A = a.value();
  Matrix<Scalar> out(static_cast<Index>(rows.size()), A.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= A.rows()) throw InvalidInput("gather_rows: index out of range");
    out.row(static_cast<Index>(i)) = A.row(rows[i]);
  }
  int ia = a.id;
  std::vector<int> idx(rows.begin(), rows.end());
  return a.graph->add_node(std::move(out), {a}, [ia, idx = std::move(idx)](Graph<Scalar>& g, int self) {
    if (!g.requires_grad(ia)) return;
    const auto& G = g.grad(self);
    auto& dA = g.grad(ia);
    for (std::size_t i = 0; i < idx.size(); ++i) dA.row(idx[i]) += G.row(static_cast<Index>(i));
  });
}

template <typename Scalar>
Var<Scalar> layer_norm(Var<Scalar> x, Var<Scalar> gain, Var<Scalar> bias) {
  require_same_graph(x, gain);
  require_same_graph(x, bias);
  const Index d = x.cols();
  if (d < 2) throw InvalidInput("layer_norm: feature extent must be >= 2");
  if (gain.rows() != 1 || gain.cols() != d || bias.rows() != 1 || bias.cols() != d)
    throw InvalidInput("layer_norm: gain/bias must be 1xD");
  constexpr Scalar eps = Scalar(1e-5);
  const auto& X = x.value();
  Matrix<Scalar> xhat(X.rows(), d);
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv_std(X.rows());
  for (Index r = 0; r < X.rows(); ++r) {
    auto row = xhat.row(r);
    row.array() = X.row(r).array() - X.row(r).mean();
    inv_std(r) = Scalar(1) / std::sqrt(row.squaredNorm() / static_cast<Scalar>(d) + eps);
    row *= inv_std(r);
  }
  Matrix<Scalar> out = xhat.array().rowwise() * gain.value().row(0).array();
  out.rowwise() += bias.value().row(0);
  int ix = x.id, ig = gain.id, ib = bias.id;
  return x.graph->add_node(
      std::move(out), {x, gain, bias},
      [ix, ig, ib, xhat = std::move(xhat), inv_std = std::move(inv_std)](Graph<Scalar>& g, int self) {
        const auto& G = g.grad(self);
        if (g.requires_grad(ig)) g.grad(ig) += G.cwiseProduct(xhat).colwise().sum();
        if (g.requires_grad(ib)) g.grad(ib) += G.colwise().sum();
        if (!g.requires_grad(ix)) return;
        Matrix<Scalar> dxhat = G.array().rowwise() * g.value(ig).row(0).array();
        auto& dX = g.grad(ix);
        for (Index r = 0; r < dxhat.rows(); ++r) {
          Scalar m1 = dxhat.row(r).mean();
          Scalar m2 = dxhat.row(r).cwiseProduct(xhat.row(r)).mean();
          dX.row(r).array() += inv_std(r) * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
        }
      });
}

template <typename Scalar>
Var<Scalar> cross_entropy(Var<Scalar> logits, std::span<const int> targets, std::span<const Scalar> mask) {
  const auto& L = logits.value();
  const Index rows = L.rows(), k = L.cols();
  if (static_cast<Index>(targets.size()) != rows || static_cast<Index>(mask.size()) != rows)
    throw InvalidInput("cross_entropy: targets/mask length must equal logit rows");
  Scalar denom = 0;
  for (Scalar m : mask) denom += m;
  if (!(denom > 0)) throw InvalidInput("cross_entropy: mask selects no position");

  Matrix<Scalar> probs(rows, k);
  Scalar total = 0;
  for (Index r = 0; r < rows; ++r) {
    if (mask[r] == 0) {
      probs.row(r).setZero();
      continue;
    }
    if (targets[r] < 0 || targets[r] >= k) throw InvalidInput("cross_entropy: target out of range");
    Scalar mx = L.row(r).maxCoeff();
    auto shifted = (L.row(r).array() - mx).eval();
    Scalar lse = std::log(shifted.exp().sum());
    total += mask[r] * (lse - shifted(targets[r]));
    probs.row(r) = (shifted - lse).exp().matrix();
  }
  Matrix<Scalar> out(1, 1);
  out(0, 0) = total / denom;
  int il = logits.id;
  std::vector<int> tgt(targets.begin(), targets.end());
  std::vector<Scalar> msk(mask.begin(), mask.end());
  return logits.graph->add_node(
      std::move(out), {logits},
      [il, denom, probs = std::move(probs), tgt = std::move(tgt), msk = std::move(msk)](Graph<Scalar>& g, int self) {
        if (!g.requires_grad(il)) return;
        Scalar upstream = g.grad(self)(0, 0);
        auto& dL = g.grad(il);
        for (Index r = 0; r < probs.rows(); ++r) {
          if (msk[r] == 0) continue;
          Scalar w = upstream * msk[r] / denom;
          dL.row(r) += w * probs.row(r);
          dL(r, tgt[r]) -= w;
        }
      });
}

template <typename Scalar>
Var<Scalar> dropout(Var<Scalar> a, Scalar p, Rng& rng) {
  if (p <= 0) return a;
  if (p >= 1) throw InvalidInput("dropout: rate must be < 1");
  const std::uint64_t threshold = keep_threshold(1.0 - static_cast<double>(p));
  Matrix<Scalar> mask(a.rows(), a.cols());
  const Scalar kept = Scalar(1) / (Scalar(1) - p);
  for (Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng() < threshold ? kept : Scalar(0);
  Matrix<Scalar> out = a.value().cwiseProduct(mask);
  int ia = a.id;
  return a.graph->add_node(std::move(out), {a}, [ia, mask = std::move(mask)](Graph<Scalar>& g, int self) {
    if (g.requires_grad(ia)) g.grad(ia) += g.grad(self).cwiseProduct(mask);
  });
}

// ---- optimizer --------------------------------------------------------------

template <typename Scalar>
void adam_step(ParamStore<Scalar>& store, Scalar lr) {
  const long t = ++store.step_;
  const double b1 = kAdamBeta1, b2 = kAdamBeta2;
  const Scalar c1 = static_cast<Scalar>(1.0 - std::pow(b1, static_cast<double>(t)));
  const Scalar c2 = static_cast<Scalar>(1.0 - std::pow(b2, static_cast<double>(t)));
  const Scalar eps = static_cast<Scalar>(kAdamEpsilon);
  for (auto& pp : store.params_) {
    auto& p = *pp;
    if (p.grad.size() != p.value.size()) p.grad = Matrix<Scalar>::Zero(p.value.rows(), p.value.cols());
    p.m = Scalar(b1) * p.m + Scalar(1 - b1) * p.grad;
    p.v = Scalar(b2) * p.v + Scalar(1 - b2) * p.grad.cwiseAbs2();
    p.value.array() -= lr * (p.m.array() / c1) / ((p.v.array() / c2).sqrt() + eps);
    p.grad.setZero();
  }
}

// ---- verification -----------------------------------------------------------

template <typename Scalar>
double grad_check(const LossFn<Scalar>& f, ParamStore<Scalar>& store, Scalar h) {
  store.zero_grad();
  {
    Graph<Scalar> g;
    auto loss = f(g, store);
    g.backward(loss);
  }
  auto eval = [&] {
    Graph<Scalar> g(false);
    return static_cast<double>(f(g, store).item());
  };
  double worst = 0;
  for (std::size_t i = 0; i < store.size(); ++i) {
    auto& p = store.at(i);
    double diff = 0, analytic_sq = 0, numeric_sq = 0;
    for (Index j = 0; j < p.value.size(); ++j) {
      Scalar orig = p.value.data()[j];
      p.value.data()[j] = orig + h;
      double up = eval();
      p.value.data()[j] = orig - h;
      double down = eval();
      p.value.data()[j] = orig;
      double numeric = (up - down) / (2.0 * static_cast<double>(h));
      double analytic = static_cast<double>(p.grad.data()[j]);
      diff += (analytic - numeric) * (analytic - numeric);
      analytic_sq += analytic * analytic;
      numeric_sq += numeric * numeric;
    }
    double denom = std::max({std::sqrt(analytic_sq), std::sqrt(numeric_sq), 1e-8});
    worst = std::max(worst, std::sqrt(diff) / denom);
  }
  store.zero_grad();
  return worst;
}

template <typename Scalar>
Matrix<Scalar> glorot_uniform(Index rows, Index cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix<Scalar> m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(dist(rng));
  return m;
}

#define CHOMSKY_INSTANTIATE_AUTODIFF(S)                                                            \
  template class ParamStore<S>;                                                                    \
  template class Graph<S>;                                                                         \
  template Var<S> matmul(Var<S>, Var<S>);                                                          \
  template Var<S> add(Var<S>, Var<S>);                                                             \
  template Var<S> sub(Var<S>, Var<S>);                                                             \
  template Var<S> mul(Var<S>, Var<S>);                                                             \
  template Var<S> scale(Var<S>, S);                                                                \
  template Var<S> tanh(Var<S>);                                                                    \
  template Var<S> sigmoid(Var<S>);                                                                 \
  template Var<S> relu(Var<S>);                                                                    \
  template Var<S> softmax(Var<S>);                                                                 \
  template Var<S> sum(Var<S>);                                                                     \
  template Var<S> transpose(Var<S>);                                                               \
  template Var<S> concat_cols(std::span<const Var<S>>);                                            \
  template Var<S> concat_rows(std::span<const Var<S>>);                                            \
  template Var<S> slice_cols(Var<S>, Index, Index);                                                \
  template Var<S> slice_rows(Var<S>, Index, Index);                                                \
  template Var<S> gather_rows(Var<S>, std::span<const int>);                                       \
  template Var<S> layer_norm(Var<S>, Var<S>, Var<S>);                                              \
  template Var<S> cross_entropy(Var<S>, std::span<const int>, std::span<const S>);                 \
  template Var<S> dropout(Var<S>, S, Rng&);                                                        \
  template void softmax_rows_inplace(Matrix<S>&);                                                  \
  template void adam_step(ParamStore<S>&, S);                                                      \
  template double grad_check(const LossFn<S>&, ParamStore<S>&, S);                                 \
  template Matrix<S> glorot_uniform(Index, Index, Rng&);

CHOMSKY_INSTANTIATE_AUTODIFF(float)
CHOMSKY_INSTANTIATE_AUTODIFF(double)

}  // namespace chomsky

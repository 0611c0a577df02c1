#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace chomsky {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Rng = std::mt19937_64;

/// Raised for inputs that violate an operation's shape or domain contract.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

template <typename Scalar>
struct Parameter {
  std::string name;
  Matrix<Scalar> value;
  Matrix<Scalar> grad;
  Matrix<Scalar> m;  // Adam first moment
  Matrix<Scalar> v;  // Adam second moment
};

// Named trainable tensors plus their optimizer state. Parameters are never
// removed, so references returned by add() stay valid for the store's lifetime.
template <typename Scalar>
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;
  ParamStore(ParamStore&&) = default;
  ParamStore& operator=(ParamStore&&) = default;

  Parameter<Scalar>& add(std::string name, Matrix<Scalar> init);
  Parameter<Scalar>& operator[](std::string_view name);
  const Parameter<Scalar>& operator[](std::string_view name) const;
  Parameter<Scalar>* find(std::string_view name);
  bool contains(std::string_view name) const { return find_index(name) >= 0; }

  std::size_t size() const { return params_.size(); }
  Parameter<Scalar>& at(std::size_t i) { return *params_[i]; }
  const Parameter<Scalar>& at(std::size_t i) const { return *params_[i]; }

  long step() const { return step_; }
  void zero_grad();
  Index parameter_count() const;

 private:
  long find_index(std::string_view name) const;

  std::vector<std::unique_ptr<Parameter<Scalar>>> params_;
  std::map<std::string, std::size_t, std::less<>> index_;
  long step_ = 0;

  template <typename S>
  friend void adam_step(ParamStore<S>&, S);
};

template <typename Scalar>
class Graph;

// Handle to a node of a Graph. Cheap to copy; only valid while its graph lives.
template <typename Scalar>
struct Var {
  Graph<Scalar>* graph = nullptr;
  int id = -1;

  const Matrix<Scalar>& value() const { return graph->value(id); }
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  Scalar item() const;
  bool valid() const { return graph != nullptr && id >= 0; }
};

// Define-by-run tape. Nodes are appended in evaluation order, so every parent
// id is smaller than its child's and a reverse sweep visits each node once.
template <typename Scalar>
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, int self)>;

  explicit Graph(bool recording = true) : recording_(recording) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var<Scalar> constant(Matrix<Scalar> value);
  Var<Scalar> param(Parameter<Scalar>& p);
  Var<Scalar> param(ParamStore<Scalar>& store, std::string_view name) { return param(store[name]); }

  // Appends a computed node. `backward` reads this node's grad and adds into
  // its parents' grads via grad(parent).
  Var<Scalar> add_node(Matrix<Scalar> value, std::initializer_list<Var<Scalar>> parents, BackwardFn backward);
  Var<Scalar> add_node(Matrix<Scalar> value, std::span<const Var<Scalar>> parents, BackwardFn backward);

  const Matrix<Scalar>& value(int id) const { return nodes_[id].value; }
  Matrix<Scalar>& grad(int id);
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  bool recording() const { return recording_; }
  std::size_t size() const { return nodes_.size(); }

  // Reverse sweep from a 1x1 loss; parameter gradients accumulate into their stores.
  void backward(Var<Scalar> loss);

 private:
  struct Node {
    Matrix<Scalar> value;
    Matrix<Scalar> grad;
    BackwardFn backward;
    Parameter<Scalar>* param = nullptr;
    bool requires_grad = false;
  };

  std::deque<Node> nodes_;  // deque: value references stay valid as the graph grows
  std::unordered_map<const Parameter<Scalar>*, int> param_nodes_;
  bool recording_;
};

template <typename Scalar>
Scalar Var<Scalar>::item() const {
  if (rows() != 1 || cols() != 1) throw InvalidInput("item() on a non-scalar node");
  return value()(0, 0);
}

// ---- primitives -----------------------------------------------------------

template <typename Scalar> Var<Scalar> matmul(Var<Scalar> a, Var<Scalar> b);
// `b` may match `a` or be a 1xN row broadcast over a's rows.
template <typename Scalar> Var<Scalar> add(Var<Scalar> a, Var<Scalar> b);
template <typename Scalar> Var<Scalar> sub(Var<Scalar> a, Var<Scalar> b);
template <typename Scalar> Var<Scalar> mul(Var<Scalar> a, Var<Scalar> b);
template <typename Scalar> Var<Scalar> scale(Var<Scalar> a, Scalar s);
template <typename Scalar> Var<Scalar> tanh(Var<Scalar> a);
template <typename Scalar> Var<Scalar> sigmoid(Var<Scalar> a);
template <typename Scalar> Var<Scalar> relu(Var<Scalar> a);
template <typename Scalar> Var<Scalar> softmax(Var<Scalar> a);
template <typename Scalar> Var<Scalar> sum(Var<Scalar> a);
template <typename Scalar> Var<Scalar> transpose(Var<Scalar> a);
template <typename Scalar> Var<Scalar> concat_cols(std::span<const Var<Scalar>> parts);
template <typename Scalar> Var<Scalar> concat_rows(std::span<const Var<Scalar>> parts);
template <typename Scalar> Var<Scalar> slice_cols(Var<Scalar> a, Index start, Index count);
template <typename Scalar> Var<Scalar> slice_rows(Var<Scalar> a, Index start, Index count);
// Row gather; with a parameter table this is an embedding lookup.
template <typename Scalar> Var<Scalar> gather_rows(Var<Scalar> a, std::span<const int> rows);
template <typename Scalar> Var<Scalar> layer_norm(Var<Scalar> x, Var<Scalar> gain, Var<Scalar> bias);
// Masked mean of -log softmax(logits)[target] over rows with mask > 0.
template <typename Scalar>
Var<Scalar> cross_entropy(Var<Scalar> logits, std::span<const int> targets, std::span<const Scalar> mask);
// Inverted dropout; identity when p == 0. The Bernoulli mask is drawn from `rng`.
template <typename Scalar> Var<Scalar> dropout(Var<Scalar> a, Scalar p, Rng& rng);

// Draws from Bernoulli(keep) cost one engine call: compare rng() < keep_threshold(keep).
inline std::uint64_t keep_threshold(double keep) {
  if (keep >= 1.0) return ~std::uint64_t{0};
  return static_cast<std::uint64_t>(keep * 18446744073709551616.0);
}

template <typename Scalar> Var<Scalar> operator+(Var<Scalar> a, Var<Scalar> b) { return add(a, b); }
template <typename Scalar> Var<Scalar> operator-(Var<Scalar> a, Var<Scalar> b) { return sub(a, b); }

template <typename Scalar> void softmax_rows_inplace(Matrix<Scalar>& m);

// ---- optimizer --------------------------------------------------------------

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEpsilon = 1e-8;

// One bias-corrected Adam update of every parameter; gradients are zeroed afterwards.
template <typename Scalar> void adam_step(ParamStore<Scalar>& store, Scalar lr);

// ---- verification -----------------------------------------------------------

template <typename Scalar>
using LossFn = std::function<Var<Scalar>(Graph<Scalar>&, ParamStore<Scalar>&)>;

// Max over parameter tensors of ||backprop - central difference|| /
// max(||backprop||, ||central||, 1e-8), Euclidean norms.
template <typename Scalar>
double grad_check(const LossFn<Scalar>& f, ParamStore<Scalar>& store, Scalar h);

// Glorot-uniform matrix in +-sqrt(6 / (fan_in + fan_out)).
template <typename Scalar>
Matrix<Scalar> glorot_uniform(Index rows, Index cols, Rng& rng);

}  // namespace chomsky

#include "chomsky/autodiff.hpp"

#include <doctest.h>

#include <cmath>

using namespace chomsky;

namespace {

template <typename S>
Matrix<S> mat(Index r, Index c, std::initializer_list<S> v) {
  Matrix<S> m(r, c);
  Index i = 0;
  for (S x : v) m.data()[i++] = x;
  return m;
}

template <typename S>
Matrix<S> random_matrix(Rng& rng, Index r, Index c) {
  std::uniform_real_distribution<double> u(-1, 1);
  Matrix<S> m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(u(rng));
  return m;
}

// Loss of one primitive applied to parameters "a" (and "b" when present),
// contracted with a fixed random weight so every output entry matters.
template <typename S>
using Unary = std::function<Var<S>(Graph<S>&, Var<S>)>;
template <typename S>
using Binary = std::function<Var<S>(Graph<S>&, Var<S>, Var<S>)>;

template <typename S>
double check_unary(const Unary<S>& op, Index r, Index c, std::uint64_t seed, S h) {
  Rng rng(seed);
  ParamStore<S> store;
  store.add("a", random_matrix<S>(rng, r, c));
  Matrix<S> w;
  LossFn<S> f = [&](Graph<S>& g, ParamStore<S>& p) {
    auto y = op(g, g.param(p, "a"));
    if (w.rows() != y.rows() || w.cols() != y.cols()) {
      Rng wr(seed + 1);
      w = random_matrix<S>(wr, y.rows(), y.cols());
    }
    return sum(mul(y, g.constant(w)));
  };
  return grad_check(f, store, h);
}

template <typename S>
double check_binary(const Binary<S>& op, Index ra, Index ca, Index rb, Index cb, std::uint64_t seed, S h) {
  Rng rng(seed);
  ParamStore<S> store;
  store.add("a", random_matrix<S>(rng, ra, ca));
  store.add("b", random_matrix<S>(rng, rb, cb));
  Matrix<S> w;
  LossFn<S> f = [&](Graph<S>& g, ParamStore<S>& p) {
    auto y = op(g, g.param(p, "a"), g.param(p, "b"));
    if (w.rows() != y.rows() || w.cols() != y.cols()) {
      Rng wr(seed + 1);
      w = random_matrix<S>(wr, y.rows(), y.cols());
    }
    return sum(mul(y, g.constant(w)));
  };
  return grad_check(f, store, h);
}

template <typename S>
void check_every_primitive(double tolerance, S h) {
  CAPTURE(sizeof(S));
  const std::vector<int> rows{2, 0, 3, 3, 1};
  const std::vector<int> targets{1, 0, 3};
  const std::vector<S> mask{S(1), S(0), S(1)};

  CHECK(check_binary<S>([](Graph<S>&, Var<S> a, Var<S> b) { return matmul(a, b); }, 3, 4, 4, 2, 1, h) <= tolerance);
  CHECK(check_binary<S>([](Graph<S>&, Var<S> a, Var<S> b) { return add(a, b); }, 3, 4, 3, 4, 2, h) <= tolerance);
  CHECK(check_binary<S>([](Graph<S>&, Var<S> a, Var<S> b) { return add(a, b); }, 3, 4, 1, 4, 3, h) <= tolerance);
  CHECK(check_binary<S>([](Graph<S>&, Var<S> a, Var<S> b) { return sub(a, b); }, 3, 4, 1, 4, 4, h) <= tolerance);
  CHECK(check_binary<S>([](Graph<S>&, Var<S> a, Var<S> b) { return mul(a, b); }, 3, 4, 3, 4, 5, h) <= tolerance);
  CHECK(check_binary<S>([](Graph<S>&, Var<S> a, Var<S> b) { return mul(a, b); }, 3, 4, 1, 4, 6, h) <= tolerance);
  CHECK(check_unary<S>([](Graph<S>&, Var<S> a) { return scale(a, S(-2.5)); }, 3, 4, 7, h) <= tolerance);
  CHECK(check_unary<S>([](Graph<S>&, Var<S> a) { return tanh(a); }, 3, 4, 8, h) <= tolerance);
  CHECK(check_unary<S>([](Graph<S>&, Var<S> a) { return sigmoid(a); }, 3, 4, 9, h) <= tolerance);
  CHECK(check_unary<S>([](Graph<S>&, Var<S> a) { return relu(a); }, 3, 4, 10, h) <= tolerance);
  CHECK(check_unary<S>([](Graph<S>&, Var<S> a) { return softmax(a); }, 3, 4, 11, h) <= tolerance);
  CHECK(check_unary<S>([](Graph<S>&, Var<S> a) { return transpose(a); }, 3, 4, 12, h) <= tolerance);
  CHECK(check_unary<S>([](Graph<S>&, Var<S> a) { return slice_cols(a, 1, 2); }, 3, 4, 13, h) <= tolerance);
  CHECK(check_unary<S>([](Graph<S>&, Var<S> a) { return slice_rows(a, 1, 2); }, 3, 4, 14, h) <= tolerance);
  CHECK(check_unary<S>([&](Graph<S>&, Var<S> a) { return gather_rows(a, rows); }, 4, 3, 15, h) <= tolerance);
  CHECK(check_binary<S>(
            [](Graph<S>&, Var<S> a, Var<S> b) {
              const Var<S> parts[] = {a, b, a};
              return concat_cols<S>(parts);
            },
            3, 2, 3, 4, 16, h) <= tolerance);
  CHECK(check_binary<S>(
            [](Graph<S>&, Var<S> a, Var<S> b) {
              const Var<S> parts[] = {b, a};
              return concat_rows<S>(parts);
            },
            2, 3, 4, 3, 17, h) <= tolerance);
  CHECK(check_binary<S>(
            [](Graph<S>& g, Var<S> a, Var<S> b) {
              return layer_norm(a, b, g.constant(Matrix<S>::Constant(1, 5, S(0.1))));
            },
            3, 5, 1, 5, 18, h) <= tolerance);
  CHECK(check_unary<S>(
            [&](Graph<S>&, Var<S> a) { return cross_entropy(a, std::span<const int>(targets), std::span<const S>(mask)); },
            3, 4, 19, h) <= tolerance);
  CHECK(check_unary<S>(
            [](Graph<S>&, Var<S> a) {
              Rng r(77);
              return dropout(a, S(0.3), r);
            },
            3, 4, 20, h) <= tolerance);
}

}  // namespace

TEST_CASE("matmul values") {
  Graph<double> g(false);
  const Matrix<double> a_value = mat<double>(2, 2, {1, 2, 3, 4});
  auto a = g.constant(a_value);
  // Copies: a node's value reference dies when the graph grows.
  const Matrix<double> identity_product = matmul(a, g.constant(Matrix<double>::Identity(2, 2))).value();
  CHECK(identity_product == a_value);
  CHECK(matmul(a, g.constant(mat<double>(2, 1, {5, 6}))).value() == mat<double>(2, 1, {17, 39}));
  CHECK_THROWS_AS(matmul(a, g.constant(Matrix<double>::Zero(3, 1))), InvalidInput);

  Rng rng(3);
  const auto A = random_matrix<double>(rng, 3, 3), B = random_matrix<double>(rng, 3, 3);
  const auto C = matmul(g.constant(A), g.constant(B)).value();
  double worst = 0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0;
      for (int k = 0; k < 3; ++k) s += A(i, k) * B(k, j);
      worst = std::max(worst, std::abs(s - C(i, j)));
    }
  CHECK(worst <= 1e-12);
}

TEST_CASE("softmax values") {
  Graph<double> g(false);
  auto half = softmax(g.constant(mat<double>(1, 2, {0, 0}))).value();
  CHECK(half(0, 0) == doctest::Approx(0.5));
  auto q = softmax(g.constant(mat<double>(1, 2, {0, std::log(3.0)}))).value();
  CHECK(q(0, 0) == doctest::Approx(0.25));
  CHECK(q(0, 1) == doctest::Approx(0.75));

  Rng rng(4);
  const auto x = random_matrix<double>(rng, 5, 7);
  const auto p = softmax(g.constant(x)).value();
  const auto shifted = softmax(g.constant((x.array() + 123.0).matrix())).value();
  CHECK((p - shifted).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(p.minCoeff() >= 0);
  for (Index r = 0; r < p.rows(); ++r) CHECK(std::abs(p.row(r).sum() - 1) <= 1e-6);
  const auto big = softmax(g.constant(mat<double>(1, 3, {1000, 0, -1000}))).value();
  CHECK(std::isfinite(big(0, 1)));
  CHECK(big(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("cross entropy values") {
  Graph<double> g(false);
  const std::vector<int> t{2, 0};
  const std::vector<double> all{1, 1};
  auto perfect = cross_entropy(g.constant(mat<double>(2, 3, {0, 0, 40, 40, 0, 0})), std::span<const int>(t),
                               std::span<const double>(all));
  CHECK(perfect.item() <= 1e-6);
  auto uniform = cross_entropy(g.constant(Matrix<double>::Zero(2, 4)), std::span<const int>(t),
                               std::span<const double>(all));
  CHECK(uniform.item() == doctest::Approx(std::log(4.0)));
  const std::vector<double> none{0, 0};
  CHECK_THROWS_AS(cross_entropy(g.constant(Matrix<double>::Zero(2, 4)), std::span<const int>(t),
                                std::span<const double>(none)),
                  InvalidInput);

  Rng rng(5);
  const auto x = random_matrix<double>(rng, 3, 4);
  const std::vector<int> targets{3, 1, 0};
  const std::vector<double> mask{1, 0, 1};
  double direct = 0;
  for (int r : {0, 2}) {
    double z = 0;
    for (int k = 0; k < 4; ++k) z += std::exp(x(r, k));
    direct -= x(r, targets[r]) - std::log(z);
  }
  direct /= 2;
  auto ce = cross_entropy(g.constant(x), std::span<const int>(targets), std::span<const double>(mask));
  CHECK(std::abs(ce.item() - direct) <= 1e-10);
}

TEST_CASE("layer norm values") {
  Graph<double> g(false);
  auto gain2 = g.constant(Matrix<double>::Ones(1, 2));
  auto bias2 = g.constant(Matrix<double>::Zero(1, 2));
  auto flat = layer_norm(g.constant(mat<double>(1, 2, {3, 3})), gain2, bias2).value();
  CHECK(flat.cwiseAbs().maxCoeff() == 0);
  auto unit = layer_norm(g.constant(mat<double>(1, 2, {1, -1})), gain2, bias2).value();
  CHECK(unit(0, 0) == doctest::Approx(1).epsilon(1e-5));
  CHECK(unit(0, 1) == doctest::Approx(-1).epsilon(1e-5));

  Rng rng(6);
  const auto x = random_matrix<double>(rng, 6, 16);
  auto y = layer_norm(g.constant(x), g.constant(Matrix<double>::Ones(1, 16)), g.constant(Matrix<double>::Zero(1, 16)))
               .value();
  for (Index r = 0; r < y.rows(); ++r) {
    const double mean = y.row(r).mean();
    CHECK(std::abs(mean) <= 1e-6);
    CHECK(std::abs((y.row(r).array() - mean).square().mean() - 1) <= 1e-4);
  }
  CHECK_THROWS_AS(layer_norm(g.constant(Matrix<double>::Zero(2, 1)), g.constant(Matrix<double>::Ones(1, 1)),
                             g.constant(Matrix<double>::Zero(1, 1))),
                  InvalidInput);
}

TEST_CASE("backward basics") {
  ParamStore<double> store;
  auto& x = store.add("x", mat<double>(1, 1, {3}));
  auto& unused = store.add("unused", mat<double>(1, 1, {5}));
  {
    Graph<double> g;
    auto v = g.param(x);
    g.backward(mul(v, v));
  }
  CHECK(x.grad(0, 0) == doctest::Approx(6));
  CHECK((unused.grad.size() == 0 || unused.grad(0, 0) == 0));

  store.zero_grad();
  x.value(0, 0) = 0;
  {
    Graph<double> g;
    g.backward(tanh(g.param(x)));
  }
  CHECK(x.grad(0, 0) == doctest::Approx(1));

  Graph<double> g;
  CHECK_THROWS_AS(g.backward(g.constant(Matrix<double>::Zero(2, 1))), InvalidInput);
  Graph<double> eval(false);
  CHECK_THROWS_AS(eval.backward(eval.constant(Matrix<double>::Zero(1, 1))), InvalidInput);
}

TEST_CASE("backward is linear over independent subgraphs") {
  Rng rng(8);
  ParamStore<double> store;
  auto& a = store.add("a", random_matrix<double>(rng, 3, 3));
  auto& b = store.add("b", random_matrix<double>(rng, 3, 2));
  auto fa = [&](Graph<double>& g) { return sum(tanh(matmul(g.param(a), g.param(a)))); };
  auto fb = [&](Graph<double>& g) { return sum(sigmoid(g.param(b))); };
  {
    Graph<double> g;
    g.backward(add(fa(g), fb(g)));
  }
  const Matrix<double> joint_a = a.grad, joint_b = b.grad;
  store.zero_grad();
  {
    Graph<double> g;
    g.backward(fa(g));
  }
  {
    Graph<double> g;
    g.backward(fb(g));
  }
  CHECK((joint_a - a.grad).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK((joint_b - b.grad).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("adam updates") {
  ParamStore<double> store;
  auto& p = store.add("p", mat<double>(1, 2, {0.5, -1}));
  store.zero_grad();
  adam_step(store, 0.1);
  CHECK(p.value == mat<double>(1, 2, {0.5, -1}));

  ParamStore<double> one;
  auto& q = one.add("q", mat<double>(1, 1, {0}));
  q.grad = mat<double>(1, 1, {1});
  adam_step(one, 0.1);
  CHECK(q.value(0, 0) == doctest::Approx(-0.1 / (1 + 1e-8)).epsilon(1e-12));
  CHECK(q.grad(0, 0) == 0);

  // Scalar reference over two identical steps.
  ParamStore<double> two;
  auto& r = two.add("r", mat<double>(1, 1, {0.3}));
  double theta = 0.3, m = 0, v = 0;
  for (int t = 1; t <= 2; ++t) {
    const double grad = 0.7;
    r.grad = mat<double>(1, 1, {grad});
    adam_step(two, 0.01);
    m = 0.9 * m + 0.1 * grad;
    v = 0.999 * v + 0.001 * grad * grad;
    theta -= 0.01 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
  }
  CHECK(std::abs(r.value(0, 0) - theta) <= 1e-12);
  CHECK(two.step() == 2);
}

TEST_CASE("grad check on closed forms") {
  Rng rng(9);
  ParamStore<double> store;
  store.add("t", random_matrix<double>(rng, 3, 4));
  LossFn<double> square = [](Graph<double>& g, ParamStore<double>& p) {
    auto t = g.param(p, "t");
    return sum(mul(t, t));
  };
  CHECK(grad_check(square, store, 1e-5) <= 1e-9);

  ParamStore<double> ce;
  ce.add("w", random_matrix<double>(rng, 4, 5));
  const Matrix<double> x = random_matrix<double>(rng, 3, 4);
  const std::vector<int> targets{0, 4, 2};
  const std::vector<double> mask{1, 1, 1};
  LossFn<double> composite = [&](Graph<double>& g, ParamStore<double>& p) {
    return cross_entropy(matmul(g.constant(x), g.param(p, "w")), std::span<const int>(targets),
                         std::span<const double>(mask));
  };
  CHECK(grad_check(composite, ce, 1e-5) <= 1e-6);
}

TEST_CASE("every primitive matches finite differences in double") { check_every_primitive<double>(1e-6, 1e-6); }

TEST_CASE("every primitive matches finite differences in float") { check_every_primitive<float>(1e-3, 1e-2f); }

TEST_CASE("dropout") {
  Graph<float> g(false);
  Rng a(1), b(1);
  const Matrix<float> x = Matrix<float>::Ones(50, 40);
  CHECK(dropout(g.constant(x), 0.0f, a).value() == x);
  const auto d1 = dropout(g.constant(x), 0.25f, a).value();
  const auto d2 = dropout(g.constant(x), 0.25f, b).value();
  CHECK(d1 == d2);
  const double kept = (d1.array() > 0).cast<double>().mean();
  CHECK(kept == doctest::Approx(0.75).epsilon(0.05));
  CHECK(d1.maxCoeff() == doctest::Approx(1 / 0.75f));
  CHECK_THROWS_AS(dropout(g.constant(x), 1.0f, a), InvalidInput);
}

#include <cmath>

#include "doctest.h"
#include "gridgin/nn.hpp"
#include "gridgin/rng.hpp"

using namespace gridgin;
using namespace gridgin::nn;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (double& v : m.values()) v = uniform(rng, -scale, scale);
  return m;
}

// Path 0-1-2-3 plus a chord 1-3.
Adjacency toy_adjacency() {
  Adjacency a;
  const std::vector<std::vector<std::pair<int, int>>> inc{{{1, 0}}, {{0, 0}, {2, 1}, {3, 3}}, {{1, 1}, {3, 2}},
                                                          {{2, 2}, {1, 3}}};
  a.offset = {0};
  for (const auto& list : inc) {
    for (auto [n, e] : list) {
      a.neighbor.push_back(n);
      a.edge.push_back(e);
    }
    a.offset.push_back(static_cast<std::int32_t>(a.neighbor.size()));
  }
  return a;
}

}  // namespace

TEST_CASE("identity layer in eval mode is a ReLU") {
  Mlp mlp("m", {3, 3});
  auto& l = mlp.layers[0];
  l.dense.weight.value = Matrix(3, 3);
  for (std::size_t i = 0; i < 3; ++i) l.dense.weight.value(i, i) = 1.0;
  l.bn.epsilon = 0.0;
  mlp.set_mode(Mode::Eval);
  Matrix x(2, 3);
  x.values() = {1.0, -2.0, 3.0, -0.5, 0.0, 4.0};
  Tape t(false);
  const auto& y = t.value(mlp.forward(t, t.constant(x)));
  CHECK(y.values() == std::vector<double>{1.0, 0.0, 3.0, 0.0, 0.0, 4.0});
}

TEST_CASE("zero weights give the activated shifted bias") {
  Mlp mlp("m", {2, 2});
  auto& l = mlp.layers[0];
  l.dense.bias.value.values() = {0.5, -1.0};
  l.bn.beta.value.values() = {0.25, 0.5};
  l.bn.epsilon = 0.0;
  mlp.set_mode(Mode::Eval);
  Tape t(false);
  const auto& y = t.value(mlp.forward(t, t.constant(Matrix(3, 2, 7.0))));
  for (std::size_t r = 0; r < 3; ++r) {
    CHECK(y(r, 0) == 0.75);
    CHECK(y(r, 1) == 0.0);
  }
}

TEST_CASE("eval mode output does not depend on the batch") {
  Rng rng(1);
  Mlp mlp("m", {4, 8, 3});
  mlp.init(rng);
  mlp.set_mode(Mode::Eval);
  const Matrix row = random_matrix(1, 4, rng);
  Matrix two(2, 4);
  for (std::size_t c = 0; c < 4; ++c) two(0, c) = two(1, c) = row(0, c);
  Tape t(false);
  const Matrix a = t.value(mlp.forward(t, t.constant(row)));
  const Matrix b = t.value(mlp.forward(t, t.constant(two)));
  for (std::size_t c = 0; c < 3; ++c) {
    CHECK(b(0, c) == a(0, c));
    CHECK(b(1, c) == a(0, c));
  }
}

TEST_CASE("forward rejects mismatched shapes") {
  Mlp mlp("m", {3, 2});
  Tape t;
  CHECK_THROWS_AS(mlp.forward(t, t.constant(Matrix(2, 4))), ShapeError);
  CHECK_THROWS_AS(add(t, t.constant(Matrix(2, 2)), t.constant(Matrix(2, 3))), ShapeError);
  const std::vector<double> y{1.0};
  CHECK_THROWS_AS(bce_loss(t, t.constant(Matrix(2, 1, 0.5)), y), ShapeError);
}

TEST_CASE("binary cross-entropy") {
  const std::vector<double> half{0.5};
  const std::vector<double> one{1.0};
  CHECK(bce(half, one) == doctest::Approx(std::log(2.0)));
  const std::vector<double> sure{1.0};
  CHECK(bce(sure, one) == doctest::Approx(0.0).epsilon(1e-6));
  const std::vector<double> p{0.9, 0.1};
  const std::vector<double> y{1.0, 0.0};
  CHECK(bce(p, y) == doctest::Approx(-std::log(0.9)));
  CHECK(bce(p, y) == doctest::Approx(0.1054).epsilon(1e-3));
  const std::vector<double> zero{0.0};
  CHECK(std::isfinite(bce(zero, one)));
}

TEST_CASE("backward of a square") {
  // x = 1*e + 1 and y = (1 + e) x, so y = (1 + e)^2 and dy/de = 2 (1 + e).
  Param e("e", 1, 1);
  Param bias("b", 1, 1);
  e.value(0, 0) = 2.0;
  bias.value(0, 0) = 1.0;
  Tape t;
  const Var x = linear(t, t.constant(Matrix(1, 1, 1.0)), e, bias);
  const Var y = scale_one_plus(t, x, e);
  CHECK(t.value(y)(0, 0) == 9.0);
  t.backward(y);
  CHECK(e.grad(0, 0) == 6.0);
}

TEST_CASE("ReLU passes no gradient at negative inputs") {
  Param w("w", 1, 1);
  Param b("b", 1, 1);
  w.value(0, 0) = -1.0;
  Tape t;
  const Var y = relu(t, linear(t, t.constant(Matrix(1, 1, 2.0)), w, b));
  t.backward(y);
  CHECK(w.grad(0, 0) == 0.0);
  CHECK(b.grad(0, 0) == 0.0);
}

TEST_CASE("unreachable parameters get zero gradient") {
  Rng rng(2);
  Dense used("used", 2, 1);
  Dense unused("unused", 2, 1);
  used.init(rng);
  unused.init(rng);
  Tape t;
  const Var x = t.constant(random_matrix(3, 2, rng));
  const Var y = pool_rows(t, used.forward(t, x), std::vector<std::size_t>{0, 3}, Pooling::Sum);
  unused.forward(t, x);
  t.backward(y);
  CHECK(unused.weight.grad.values() == std::vector<double>(2, 0.0));
  CHECK(used.weight.grad.values() != std::vector<double>(2, 0.0));
}

TEST_CASE("gradient check of a linear model is exact") {
  Rng rng(3);
  Dense d("d", 5, 1);
  d.init(rng);
  const Matrix x = random_matrix(6, 5, rng);
  std::vector<Param*> params{&d.weight, &d.bias};
  const double err = grad_check(
      [&](Tape& t) { return pool_rows(t, d.forward(t, t.constant(x)), std::vector<std::size_t>{0, 6}, Pooling::Sum); },
      params, 100, 7);
  CHECK(err <= 1e-9);
}

TEST_CASE("gradient check of a two-layer MLP with BCE") {
  Rng rng(4);
  Mlp mlp("m", {4, 16, 1}, true);
  mlp.init(rng);
  const Matrix x = random_matrix(12, 4, rng);
  std::vector<double> y;
  for (int i = 0; i < 12; ++i) y.push_back(i % 3 == 0 ? 1.0 : 0.0);
  for (Mode mode : {Mode::Train, Mode::Eval}) {
    const double err =
        grad_check([&](Tape& t) { return bce_loss(t, sigmoid(t, mlp.forward(t, t.constant(x), mode)), y); },
                   mlp.parameters(), 150, 11);
    CHECK(err <= 1e-4);
  }
}

TEST_CASE("gradient check of graph ops and pooling") {
  Rng rng(5);
  const Adjacency adj = toy_adjacency();
  Dense node("n", 3, 4);
  Dense edge("e", 2, 4);
  Dense out("o", 12, 1);
  Param eps("eps", 1, 1);
  node.init(rng);
  edge.init(rng);
  out.init(rng);
  eps.value(0, 0) = 0.3;
  const Matrix xn = random_matrix(4, 3, rng);
  const Matrix xe = random_matrix(4, 2, rng);
  const std::vector<std::size_t> seg{0, 2, 4};
  std::vector<Param*> params{&node.weight, &node.bias, &edge.weight, &edge.bias, &out.weight, &out.bias, &eps};
  for (Pooling p : {Pooling::Sum, Pooling::Mean, Pooling::Max}) {
    const double err = grad_check(
        [&](Tape& t) {
          const Var h = neighbor_sum(t, node.forward(t, t.constant(xn)), adj);
          const Var g = edge.forward(t, t.constant(xe));
          const Var a = relu_message_sum(t, h, g, adj);
          const Var h2 = add(t, scale_one_plus(t, h, eps), a);
          const std::vector<Var> parts{pool_rows(t, h, seg, p), pool_rows(t, h2, seg, p), pool_rows(t, a, seg, p)};
          const Var z = sigmoid(t, out.forward(t, concat_cols(t, parts)));
          return bce_loss(t, z, std::vector<double>{1.0, 0.0});
        },
        params, 120, 13);
    CHECK(err <= 1e-4);
  }
}

TEST_CASE("aggregation examples") {
  Adjacency one;
  one.offset = {0, 1, 1};
  one.neighbor = {1};
  one.edge = {0};
  Tape t(false);
  Matrix h(2, 2);
  h.values() = {0.0, 0.0, 1.0, -2.0};
  Matrix g(1, 2);
  g.values() = {0.0, 1.0};
  const auto& a = t.value(relu_message_sum(t, t.constant(h), t.constant(g), one));
  CHECK(a(0, 0) == 1.0);
  CHECK(a(0, 1) == 0.0);
  CHECK(a(1, 0) == 0.0);  // isolated node

  Adjacency two;
  two.offset = {0, 2, 2, 2};
  two.neighbor = {1, 2};
  two.edge = {0, 1};
  Matrix h3(3, 2);
  h3.values() = {0.0, 0.0, 0.5, 1.5, 0.5, 1.5};
  Matrix g2(2, 2);
  g2.values() = {0.25, -0.5, 0.25, -0.5};
  const auto& b = t.value(relu_message_sum(t, t.constant(h3), t.constant(g2), two));
  CHECK(b(0, 0) == 1.5);
  CHECK(b(0, 1) == 2.0);
}

TEST_CASE("pooling examples") {
  Tape t(false);
  Matrix x(2, 2);
  x.values() = {1.0, 2.0, 3.0, 4.0};
  const std::vector<std::size_t> seg{0, 2};
  CHECK(t.value(pool_rows(t, t.constant(x), seg, Pooling::Sum)).values() == std::vector<double>{4.0, 6.0});
  CHECK(t.value(pool_rows(t, t.constant(x), seg, Pooling::Mean)).values() == std::vector<double>{2.0, 3.0});
  CHECK(t.value(pool_rows(t, t.constant(x), seg, Pooling::Max)).values() == std::vector<double>{3.0, 4.0});
  CHECK_THROWS_AS(pool_rows(t, t.constant(x), std::vector<std::size_t>{0, 3}, Pooling::Sum), ShapeError);
}

TEST_CASE("batch norm in training mode standardises each feature") {
  Rng rng(6);
  BatchNorm1d bn("bn", 3);
  bn.gamma.value.values() = {2.0, -0.5, 1.0};
  bn.beta.value.values() = {1.0, 0.0, -3.0};
  bn.epsilon = 1e-12;
  Matrix x = random_matrix(32, 3, rng, 5.0);
  Tape t(false);
  const auto& y = t.value(bn.forward(t, t.constant(x), Mode::Train));
  for (std::size_t c = 0; c < 3; ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < 32; ++r) mean += y(r, c);
    mean /= 32.0;
    double var = 0.0;
    for (std::size_t r = 0; r < 32; ++r) var += (y(r, c) - mean) * (y(r, c) - mean);
    CHECK(std::abs(mean - bn.beta.value(0, c)) <= 1e-5);
    CHECK(std::abs(std::sqrt(var / 32.0) - std::abs(bn.gamma.value(0, c))) <= 1e-5);
    CHECK(bn.running_var(0, c) >= 0.0);
  }
  // Running statistics move towards the batch statistics.
  CHECK(bn.running_mean(0, 0) != 0.0);
  const Matrix before = bn.running_mean;
  bn.forward(t, t.constant(x), Mode::Eval);
  CHECK(bn.running_mean == before);
}

TEST_CASE("adam") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    Param p("p", 2, 2);
    p.value.values() = {1.0, -2.0, 3.0, 0.5};
    const Matrix before = p.value;
    std::vector<Param*> ps{&p};
    auto s = make_adam(ps);
    adam_step(ps, s);
    CHECK(p.value == before);
    CHECK(s.step == 1);
  }
  SUBCASE("first step moves by the learning rate against the gradient sign") {
    Param p("p", 1, 3);
    p.grad.values() = {0.3, -7.0, 1e-3};
    std::vector<Param*> ps{&p};
    auto s = make_adam(ps, AdamOptions{.lr = 0.01});
    adam_step(ps, s);
    CHECK(p.value(0, 0) == doctest::Approx(-0.01).epsilon(1e-6));
    CHECK(p.value(0, 1) == doctest::Approx(0.01).epsilon(1e-6));
    CHECK(p.value(0, 2) == doctest::Approx(-0.01).epsilon(1e-4));
  }
  SUBCASE("steps decrease a convex quadratic") {
    Param p("p", 1, 2);
    p.value.values() = {3.0, -2.0};
    std::vector<Param*> ps{&p};
    auto s = make_adam(ps, AdamOptions{.lr = 0.1});
    auto loss = [&] { return p.value(0, 0) * p.value(0, 0) + 4.0 * p.value(0, 1) * p.value(0, 1); };
    const double l0 = loss();
    for (int i = 0; i < 2; ++i) {
      p.grad.values() = {2.0 * p.value(0, 0), 8.0 * p.value(0, 1)};
      adam_step(ps, s);
    }
    CHECK(loss() < l0);
  }
  SUBCASE("state must match the parameters") {
    Param p("p", 1, 1);
    Param q("q", 1, 1);
    std::vector<Param*> one{&p};
    std::vector<Param*> two{&p, &q};
    auto s = make_adam(one);
    CHECK_THROWS_AS(adam_step(two, s), ShapeError);
  }
}

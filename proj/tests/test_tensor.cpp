#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "collagan/adam.hpp"
#include "collagan/layers.hpp"
#include "collagan/ops.hpp"
#include "support.hpp"

using namespace collagan;
using testing::numeric_gradient;
using testing::random_tensor;
using testing::relative_error;

TEST_CASE("tensor shape must match the value count") {
  CHECK_THROWS_AS(Tensor(Shape{2, 2}, std::vector<float>{1, 2, 3}), ShapeError);
  const Tensor t(Shape{2, 3});
  CHECK(t.numel() == 6);
  CHECK(shape_numel(Shape{}) == 1);
  CHECK(Tensor::scalar(3.0f).item() == 3.0f);
  CHECK_THROWS_AS(t.item(), ShapeError);
}

TEST_CASE("add and mul on small vectors") {
  const Tensor a(Shape{2}, {1, 2});
  const Tensor b(Shape{2}, {3, 4});
  const Tensor c = ops::add(a, b);
  CHECK(c[0] == 4.0f);
  CHECK(c[1] == 6.0f);

  Tensor x(Shape{3}, {1.5f, -2.0f, 7.0f});
  x.set_requires_grad(true);
  Graph<float> g;
  GraphScope<float> scope(g);
  const Tensor y = ops::mul(x, Tensor::zeros(Shape{3}));
  for (float v : y.data()) CHECK(v == 0.0f);
  g.backward(ops::sum(y));
  for (float v : x.grad()) CHECK(v == 0.0f);
}

TEST_CASE("binary ops report both shapes on mismatch") {
  const Tensor a(Shape{2, 3});
  const Tensor b(Shape{3, 2});
  try {
    ops::add(a, b);
    FAIL("expected a shape error");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("add") != std::string::npos);
    CHECK(msg.find("(2,3)") != std::string::npos);
    CHECK(msg.find("(3,2)") != std::string::npos);
  }
}

TEST_CASE("gradient of sum is all ones and of x*x is 2x") {
  Graph<float> g;
  GraphScope<float> scope(g);
  Tensor x(Shape{2, 2}, {1, -2, 3, 4});
  x.set_requires_grad(true);
  g.backward(ops::sum(x));
  for (float v : x.grad()) CHECK(v == 1.0f);

  Graph<float> g2;
  GraphScope<float> scope2(g2);
  Tensor y(Shape{1}, {3});
  y.set_requires_grad(true);
  g2.backward(ops::sum(ops::mul(y, y)));
  CHECK(y.grad()[0] == doctest::Approx(6.0));
}

TEST_CASE("backward rejects non-scalar and detached losses") {
  Graph<float> g;
  GraphScope<float> scope(g);
  Tensor x(Shape{3}, {1, 2, 3});
  x.set_requires_grad(true);
  const Tensor y = ops::mul_scalar(x, 2.0f);
  CHECK_THROWS_AS(g.backward(y), ShapeError);
  CHECK_THROWS_AS(g.backward(ops::sum(x).detach()), Error);
  CHECK_THROWS_AS(g.backward(Tensor::scalar(1.0f)), Error);
}

TEST_CASE("backward overwrites rather than accumulates") {
  Tensor x(Shape{2}, {1, 2});
  x.set_requires_grad(true);
  for (int rep = 0; rep < 3; ++rep) {
    Graph<float> g;
    GraphScope<float> scope(g);
    g.backward(ops::sum(ops::mul_scalar(x, 3.0f)));
    CHECK(x.grad()[0] == 3.0f);
    CHECK(x.grad()[1] == 3.0f);
  }
}

TEST_CASE("recorded nodes are in topological order") {
  std::mt19937_64 rng(3);
  Graph<double> g;
  GraphScope<double> scope(g);
  Tensor64 a = random_tensor<double>({4}, rng);
  Tensor64 b = random_tensor<double>({4}, rng);
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  const Tensor64 c = ops::mul(ops::add(a, b), ops::exp(a));
  const Tensor64 loss = ops::sum(ops::sub(c, ops::square(b)));
  REQUIRE(g.size() >= 5);
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (const auto& in : g.node(i).inputs) {
      if (in->producer == &g) CHECK(in->node_index < i);
    }
  }
  g.backward(loss);
  CHECK(a.has_grad());
  CHECK(b.has_grad());
}

TEST_CASE("no-grad scope records nothing") {
  Graph<float> g;
  GraphScope<float> scope(g);
  Tensor x(Shape{2}, {1, 2});
  x.set_requires_grad(true);
  {
    NoGradScope<float> off;
    const Tensor y = ops::square(x);
    CHECK_FALSE(y.has_producer());
  }
  CHECK(g.size() == 0);
}

TEST_CASE("log of softmax matches central differences on random 8-vectors") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor64 logits = random_tensor<double>({1, 8}, rng, -2.0, 2.0);
    Tensor64 weights = random_tensor<double>({1, 8}, rng);
    logits.set_requires_grad(true);
    auto value = [&] {
      double lse = 0.0, mx = -1e300;
      for (double v : logits.data()) mx = std::max(mx, v);
      for (double v : logits.data()) lse += std::exp(v - mx);
      lse = mx + std::log(lse);
      double s = 0.0;
      for (std::size_t i = 0; i < 8; ++i) s += weights[i] * (logits[i] - lse);
      return s;
    };
    Graph<double> g;
    GraphScope<double> scope(g);
    g.backward(ops::sum(ops::mul(ops::log(ops::softmax(logits)), weights)));
    CHECK(relative_error(logits.grad(), numeric_gradient(value, logits, 1e-6)) < 1e-4);
  }
}

TEST_CASE("backward is linear in the loss") {
  std::mt19937_64 rng(5);
  Tensor64 x = random_tensor<double>({6}, rng, 0.2, 1.5);
  x.set_requires_grad(true);
  auto grad_of = [&](double a, double b) {
    Graph<double> g;
    GraphScope<double> scope(g);
    const Tensor64 l1 = ops::sum(ops::log(x));
    const Tensor64 l2 = ops::mean(ops::mul(ops::exp(x), x));
    g.backward(ops::weighted_sum<double>({l1, l2}, {a, b}));
    return std::vector<double>(x.grad().begin(), x.grad().end());
  };
  const auto g1 = grad_of(1.0, 0.0);
  const auto g2 = grad_of(0.0, 1.0);
  const auto mix = grad_of(2.5, -0.75);
  for (std::size_t i = 0; i < g1.size(); ++i) CHECK(mix[i] == doctest::Approx(2.5 * g1[i] - 0.75 * g2[i]).epsilon(1e-12));
}

// Pre-activations stay clear of the leaky-ReLU kink so a step of 1e-3
// cannot cross it.
TEST_CASE("conv, norm, relu, sum composite matches central differences in 64-bit") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor64 x, w, b, scale, shift;
    for (int attempt = 0;; ++attempt) {
      REQUIRE(attempt < 100);
      x = random_tensor<double>({1, 2, 5, 5}, rng);
      w = random_tensor<double>({3, 2, 3, 3}, rng);
      b = random_tensor<double>({3}, rng);
      scale = random_tensor<double>({3}, rng, 0.5, 1.5);
      shift = random_tensor<double>({3}, rng, -0.5, 0.5);
      NoGradScope<double> off;
      const auto z = nn::instance_norm(nn::conv2d(x, w, b, 1, 1), scale, shift);
      double closest = 1e300;
      for (double v : z.data()) closest = std::min(closest, std::abs(v));
      if (closest >= 0.02) break;
    }
    std::vector<Tensor64*> leaves{&x, &w, &b, &scale, &shift};
    auto forward = [&] {
      return ops::sum(ops::leaky_relu(nn::instance_norm(nn::conv2d(x, w, b, 1, 1), scale, shift), 0.0));
    };
    for (auto* t : leaves) t->set_requires_grad(true);
    {
      Graph<double> g;
      GraphScope<double> scope(g);
      g.backward(forward());
    }
    // The conv bias has an exactly zero gradient under instance norm, so the
    // error is normalized over all leaves together.
    std::vector<double> analytic, numeric;
    for (auto* t : leaves) {
      analytic.insert(analytic.end(), t->grad().begin(), t->grad().end());
      const auto n = numeric_gradient(
          [&] {
            NoGradScope<double> off;
            return forward().item();
          },
          *t, 1e-3);
      numeric.insert(numeric.end(), n.begin(), n.end());
    }
    CHECK(relative_error(analytic, numeric) < 1e-5);
  }
}

TEST_CASE("adam leaves parameters unchanged under zero gradients") {
  Tensor64 p(Shape{3}, {1, -2, 3});
  p.set_requires_grad(true);
  Adam<double> adam({p}, AdamConfig{});
  Graph<double> g;
  GraphScope<double> scope(g);
  g.backward(ops::mul_scalar(ops::sum(p), 0.0));
  adam.step();
  CHECK(adam.steps() == 1);
  CHECK(p[0] == 1.0);
  CHECK(p[1] == -2.0);
  CHECK(p[2] == 3.0);
  CHECK(adam.first_moments()[0].shape() == p.shape());
  CHECK(adam.second_moments()[0].shape() == p.shape());
}

TEST_CASE("first adam step moves by lr against the gradient sign") {
  for (double gval : {3.7, -0.02}) {
    Tensor64 p(Shape{1}, {0.5});
    p.set_requires_grad(true);
    AdamConfig cfg;
    cfg.lr = 1e-3;
    Adam<double> adam({p}, cfg);
    Graph<double> g;
    GraphScope<double> scope(g);
    g.backward(ops::sum(ops::mul_scalar(p, gval)));
    adam.step();
    const double expected = 0.5 - cfg.lr * (gval > 0 ? 1.0 : -1.0);
    CHECK(std::abs(p[0] - expected) <= cfg.lr * 1e-4);
  }
}

TEST_CASE("adam trajectory on a quadratic matches a reference implementation") {
  AdamConfig cfg;
  cfg.lr = 0.05;
  Tensor64 p(Shape{2}, {1.3, -0.4});
  p.set_requires_grad(true);
  Adam<double> adam({p}, cfg);

  double theta[2] = {1.3, -0.4}, m[2] = {0, 0}, v[2] = {0, 0};
  for (int t = 1; t <= 5; ++t) {
    Graph<double> g;
    GraphScope<double> scope(g);
    g.backward(ops::mul_scalar(ops::sum(ops::square(p)), 0.5));
    adam.step();
    for (int i = 0; i < 2; ++i) {
      const double grad = theta[i];
      m[i] = cfg.beta1 * m[i] + (1 - cfg.beta1) * grad;
      v[i] = cfg.beta2 * v[i] + (1 - cfg.beta2) * grad * grad;
      const double mhat = m[i] / (1 - std::pow(cfg.beta1, t));
      const double vhat = v[i] / (1 - std::pow(cfg.beta2, t));
      theta[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
      CHECK(std::abs(p[i] - theta[i]) < 1e-12);
    }
  }
  CHECK(adam.steps() == 5);
}

TEST_CASE("adam refuses a non-finite gradient and modifies nothing") {
  Tensor64 a(Shape{2}, {1, 2});
  Tensor64 b(Shape{1}, {4});
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  Adam<double> adam({a, b}, AdamConfig{});
  Graph<double> g;
  GraphScope<double> scope(g);
  const Tensor64 nan_scale = Tensor64::full(Shape{1}, std::numeric_limits<double>::quiet_NaN());
  g.backward(ops::add(ops::sum(a), ops::sum(ops::mul(b, nan_scale))));
  CHECK_THROWS_AS(adam.step(), NumericalError);
  CHECK(adam.steps() == 0);
  CHECK(a[0] == 1.0);
  CHECK(b[0] == 4.0);
}

TEST_CASE("fixed seed gives bitwise-identical forward, backward and adam trajectories") {
  auto run = [] {
    std::mt19937_64 rng(99);
    Tensor x = random_tensor<float>({2, 3, 8, 8}, rng);
    Tensor w = random_tensor<float>({4, 3, 3, 3}, rng);
    Tensor b = random_tensor<float>({4}, rng);
    w.set_requires_grad(true);
    b.set_requires_grad(true);
    AdamConfig cfg;
    cfg.lr = 1e-2;
    Adam<float> adam({w, b}, cfg);
    std::vector<float> trace;
    for (int step = 0; step < 4; ++step) {
      Graph<float> g;
      GraphScope<float> scope(g);
      const Tensor y = nn::dropout(nn::conv2d(x, w, b, 1, 1), 0.3, nn::Mode::train, rng);
      const Tensor loss = ops::mean(ops::square(y));
      trace.push_back(loss.item());
      g.backward(loss);
      trace.insert(trace.end(), w.grad().begin(), w.grad().end());
      adam.step();
      trace.insert(trace.end(), w.data().begin(), w.data().end());
    }
    return trace;
  };
  const auto a = run();
  const auto b = run();
  REQUIRE(a.size() == b.size());
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);
}

TEST_CASE("forward ops keep finite inputs finite") {
  std::mt19937_64 rng(8);
  const Tensor x = random_tensor<float>({3, 5}, rng, -30.0, 30.0);
  CHECK(all_finite<float>(ops::sigmoid(x).data()));
  CHECK(all_finite<float>(ops::softmax(x).data()));
  CHECK(all_finite<float>(ops::log(ops::clamp_min(ops::softmax(x), 1e-12f)).data()));
  CHECK(all_finite<float>(ops::exp(ops::clamp(x, -20.0f, 20.0f)).data()));
}

TEST_CASE("structural ops round-trip") {
  std::mt19937_64 rng(2);
  const Tensor a = random_tensor<float>({2, 3, 4}, rng);
  const Tensor b = random_tensor<float>({2, 5, 4}, rng);
  const Tensor c = ops::concat<float>({a, b}, 1);
  CHECK(c.shape() == Shape{2, 8, 4});
  CHECK(testing::same_bytes(ops::slice(c, 1, 0, 3), a));
  CHECK(testing::same_bytes(ops::slice(c, 1, 3, 8), b));
  CHECK(ops::flatten(c).shape() == Shape{2, 32});
  CHECK_THROWS_AS(ops::slice(c, 1, 4, 9), ShapeError);
  CHECK_THROWS_AS(ops::concat<float>({a, random_tensor<float>({3, 3, 4}, rng)}, 1), ShapeError);
  CHECK_THROWS_AS(a.reshape({5, 5}), ShapeError);

  const Tensor p(Shape{2, 3}, {0.1f, 0.2f, 0.7f, 0.5f, 0.4f, 0.1f});
  const Tensor picked = ops::pick(p, {2, 0});
  CHECK(picked[0] == 0.7f);
  CHECK(picked[1] == 0.5f);
  CHECK_THROWS_AS(ops::pick(p, {3, 0}), ShapeError);
}

TEST_CASE("matmul against a direct dot-product loop") {
  std::mt19937_64 rng(4);
  const Tensor64 a = random_tensor<double>({3, 4}, rng);
  const Tensor64 b = random_tensor<double>({4, 2}, rng);
  const Tensor64 c = ops::matmul(a, b);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 4; ++k) s += a[i * 4 + k] * b[k * 2 + j];
      CHECK(c[i * 2 + j] == doctest::Approx(s).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(ops::matmul(a, a), ShapeError);
}

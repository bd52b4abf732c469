#include <doctest.h>

#include <cmath>
#include <random>

#include "collagan/layers.hpp"
#include "collagan/ops.hpp"
#include "support.hpp"

using namespace collagan;
using testing::max_abs_diff;
using testing::numeric_gradient;
using testing::random_tensor;

namespace {

// Direct sliding-window accumulation with zero padding.
Tensor64 naive_conv(const Tensor64& x, const Tensor64& w, const Tensor64& b, std::size_t stride, std::size_t pad) {
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t O = w.dim(0), K = w.dim(2);
  const std::size_t oh = (H + 2 * pad - K) / stride + 1, ow = (W + 2 * pad - K) / stride + 1;
  Tensor64 y(Shape{B, O, oh, ow});
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          double s = b[o];
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t ki = 0; ki < K; ++ki)
              for (std::size_t kj = 0; kj < K; ++kj) {
                const long r = long(i * stride + ki) - long(pad), q = long(j * stride + kj) - long(pad);
                if (r < 0 || q < 0 || r >= long(H) || q >= long(W)) continue;
                s += w[((o * C + c) * K + ki) * K + kj] * x[((n * C + c) * H + r) * W + q];
              }
          y[((n * O + o) * oh + i) * ow + j] = s;
        }
  return y;
}

double dot(const Tensor64& a, const Tensor64& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST_CASE("1x1 identity kernel reproduces the input") {
  std::mt19937_64 rng(1);
  const Tensor x = random_tensor<float>({2, 3, 5, 5}, rng);
  Tensor w(Shape{3, 3, 1, 1});
  for (std::size_t c = 0; c < 3; ++c) w[c * 3 + c] = 1.0f;
  const Tensor y = nn::conv2d(x, w, Tensor(Shape{3}), 1, 0);
  CHECK(testing::same_bytes(y, x));
}

TEST_CASE("3x3 all-ones kernel on a constant field sums to 9c") {
  const Tensor x = Tensor::full({1, 1, 6, 6}, 0.7f);
  const Tensor y = nn::conv2d(x, Tensor::ones({1, 1, 3, 3}), Tensor(Shape{1}), 1, 0);
  CHECK(y.shape() == Shape{1, 1, 4, 4});
  for (float v : y.data()) CHECK(v == doctest::Approx(9 * 0.7).epsilon(1e-6));
}

TEST_CASE("conv2d matches a direct sliding-window oracle") {
  std::mt19937_64 rng(2);
  const Tensor64 x = random_tensor<double>({1, 3, 8, 8}, rng);
  const Tensor64 w = random_tensor<double>({4, 3, 3, 3}, rng);
  const Tensor64 b = random_tensor<double>({4}, rng);
  for (std::size_t stride : {1u, 2u}) {
    for (std::size_t pad : {0u, 1u}) {
      const Tensor64 y = nn::conv2d(x, w, b, stride, pad);
      const Tensor64 ref = naive_conv(x, w, b, stride, pad);
      REQUIRE(y.shape() == ref.shape());
      CHECK(max_abs_diff(y, ref) < 1e-6);
    }
  }
  // float path against the same oracle
  const Tensor yf = nn::conv2d(testing::to_float(x), testing::to_float(w), testing::to_float(b), 1, 1);
  CHECK(max_abs_diff(cast_tensor<double>(yf), naive_conv(x, w, b, 1, 1)) < 1e-5);
}

TEST_CASE("conv2d output extent and channel mismatch error") {
  const Tensor x(Shape{1, 2, 9, 9});
  CHECK(nn::conv2d(x, Tensor(Shape{3, 2, 4, 4}), Tensor(Shape{3}), 2, 1).shape() == Shape{1, 3, 4, 4});
  CHECK(nn::conv2d(x, Tensor(Shape{3, 2, 3, 3}), Tensor(Shape{3}), 1, 1).shape() == Shape{1, 3, 9, 9});
  try {
    nn::conv2d(x, Tensor(Shape{3, 5, 3, 3}), Tensor(Shape{3}), 1, 1, "enc0.conv3");
    FAIL("expected a channel mismatch");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("enc0.conv3") != std::string::npos);
  }
}

TEST_CASE("transposed convolution doubles the spatial size") {
  const Tensor x = Tensor::full({1, 1, 4, 4}, 0.3f);
  const Tensor y = nn::conv_transpose2d(x, Tensor::ones({1, 1, 2, 2}), Tensor(Shape{1}), 2);
  CHECK(y.shape() == Shape{1, 1, 8, 8});
  for (float v : y.data()) CHECK(v == doctest::Approx(0.3f));
}

// <conv(z), x> = <z, conv_transpose(x)> when the transposed kernel is the
// conv kernel with its channel axes swapped.
TEST_CASE("transposed convolution is the adjoint of strided convolution") {
  std::mt19937_64 rng(3);
  const std::size_t cin = 3, cout = 2;
  const Tensor64 wt = random_tensor<double>({cout, cin, 2, 2}, rng);
  Tensor64 wc(Shape{cin, cout, 2, 2});
  for (std::size_t o = 0; o < cout; ++o)
    for (std::size_t i = 0; i < cin; ++i)
      for (std::size_t k = 0; k < 4; ++k) wc[(i * cout + o) * 4 + k] = wt[(o * cin + i) * 4 + k];
  const Tensor64 x = random_tensor<double>({2, cin, 4, 4}, rng);
  const Tensor64 z = random_tensor<double>({2, cout, 8, 8}, rng);
  const Tensor64 up = nn::conv_transpose2d(x, wt, Tensor64(Shape{cout}), 2);
  const Tensor64 down = naive_conv(z, wc, Tensor64(Shape{cin}), 2, 0);
  CHECK(dot(down, x) == doctest::Approx(dot(z, up)).epsilon(1e-12));

  // element-wise: the gradient of <conv(z), x> with respect to z
  Tensor64 zz = z.clone();
  const auto grad = numeric_gradient([&] { return dot(naive_conv(zz, wc, Tensor64(Shape{cin}), 2, 0), x); }, zz, 1e-5);
  double worst = 0.0;
  for (std::size_t i = 0; i < grad.size(); ++i) worst = std::max(worst, std::abs(grad[i] - up[i]));
  CHECK(worst < 1e-6);
}

TEST_CASE("instance norm") {
  std::mt19937_64 rng(4);
  const Tensor64 ones = Tensor64::ones({3}), zeros = Tensor64::zeros({3});

  SUBCASE("constant channel maps to zero") {
    const Tensor64 y = nn::instance_norm(Tensor64::full({1, 3, 4, 4}, 2.5), ones, zeros);
    for (double v : y.data()) CHECK(v == 0.0);
  }
  SUBCASE("per-slice mean zero and variance one, matching the direct formula") {
    const Tensor64 x = random_tensor<double>({2, 3, 5, 5}, rng, -3.0, 2.0);
    const Tensor64 scale = random_tensor<double>({3}, rng, 0.5, 2.0);
    const Tensor64 shift = random_tensor<double>({3}, rng);
    const Tensor64 y = nn::instance_norm(x, ones, zeros);
    const Tensor64 ya = nn::instance_norm(x, scale, shift);
    for (std::size_t s = 0; s < 6; ++s) {
      double mu = 0.0, var = 0.0, ym = 0.0, yv = 0.0;
      for (std::size_t k = 0; k < 25; ++k) mu += x[s * 25 + k] / 25;
      for (std::size_t k = 0; k < 25; ++k) var += (x[s * 25 + k] - mu) * (x[s * 25 + k] - mu) / 25;
      for (std::size_t k = 0; k < 25; ++k) ym += y[s * 25 + k] / 25;
      for (std::size_t k = 0; k < 25; ++k) yv += (y[s * 25 + k] - ym) * (y[s * 25 + k] - ym) / 25;
      CHECK(std::abs(ym) < 1e-6);
      CHECK(std::abs(yv - 1.0) < 1e-4);
      const std::size_t c = s % 3;
      for (std::size_t k = 0; k < 25; ++k) {
        const double ref = scale[c] * (x[s * 25 + k] - mu) / std::sqrt(var + 1e-5) + shift[c];
        CHECK(std::abs(ya[s * 25 + k] - ref) < 1e-6);
      }
    }
  }
  // eps breaks exact invariance; slices keep a variance well above it.
  SUBCASE("invariant to per-slice affine maps up to sign") {
    const Tensor64 x = random_tensor<double>({1, 3, 6, 6}, rng, -3.0, 3.0);
    const Tensor64 base = nn::instance_norm(x, ones, zeros);
    for (double a : {3.0, -1.5, 40.0}) {
      Tensor64 t = x.clone();
      for (auto& v : t.data()) v = a * v + 1.7;
      const Tensor64 y = nn::instance_norm(t, ones, zeros);
      for (std::size_t i = 0; i < y.numel(); ++i) CHECK(std::abs(y[i] - (a > 0 ? 1 : -1) * base[i]) < 1e-5);
    }
  }
}

TEST_CASE("leaky relu") {
  const Tensor x(Shape{3}, {5.0f, -1.0f, 0.0f});
  const Tensor y = ops::leaky_relu(x, 0.2f);
  CHECK(y[0] == 5.0f);
  CHECK(y[1] == doctest::Approx(-0.2f));
  CHECK(y[2] == 0.0f);
  std::mt19937_64 rng(5);
  const Tensor r = random_tensor<float>({50}, rng);
  CHECK(testing::same_bytes(ops::leaky_relu(r, 1.0f), r));

  Tensor z(Shape{1}, {0.0f});
  z.set_requires_grad(true);
  Graph<float> g;
  GraphScope<float> scope(g);
  g.backward(ops::sum(ops::leaky_relu(z, 0.2f)));
  CHECK(z.grad()[0] == 1.0f);
}

TEST_CASE("average pooling") {
  const Tensor pooled = nn::avg_pool2(Tensor::full({1, 2, 4, 4}, 0.25f));
  CHECK(pooled.shape() == Shape{1, 2, 2, 2});
  for (float v : pooled.data()) CHECK(v == 0.25f);
  const Tensor block(Shape{1, 1, 2, 2}, {1, 2, 3, 4});
  CHECK(nn::avg_pool2(block)[0] == 2.5f);
  CHECK_THROWS_AS(nn::avg_pool2(Tensor(Shape{1, 1, 3, 4})), ShapeError);

  std::mt19937_64 rng(6);
  Tensor64 x = random_tensor<double>({1, 1, 4, 4}, rng);
  const Tensor64 w = random_tensor<double>({1, 1, 2, 2}, rng);
  x.set_requires_grad(true);
  {
    Graph<double> g;
    GraphScope<double> scope(g);
    g.backward(ops::sum(ops::mul(nn::avg_pool2(x), w)));
  }
  const std::vector<double> analytic(x.grad().begin(), x.grad().end());
  const auto numeric = numeric_gradient(
      [&] {
        NoGradScope<double> off;
        return ops::sum(ops::mul(nn::avg_pool2(x), w)).item();
      },
      x, 1e-6);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 4; ++c) {
      const double expected = w[(r / 2) * 2 + c / 2] / 4.0;
      CHECK(analytic[r * 4 + c] == doctest::Approx(expected).epsilon(1e-12));
      CHECK(numeric[r * 4 + c] == doctest::Approx(expected).epsilon(1e-8));
    }
}

TEST_CASE("dropout") {
  std::mt19937_64 rng(7);
  const Tensor x = random_tensor<float>({1000}, rng, 0.5, 1.5);
  CHECK(testing::same_bytes(nn::dropout(x, 0.0, nn::Mode::train, rng), x));
  CHECK(testing::same_bytes(nn::dropout(x, 0.0, nn::Mode::eval, rng), x));
  CHECK(testing::same_bytes(nn::dropout(x, 0.5, nn::Mode::eval, rng), x));
  CHECK_THROWS_AS(nn::dropout(x, 1.0, nn::Mode::train, rng), ShapeError);

  const Tensor big = Tensor::ones({100000});
  const Tensor y = nn::dropout(big, 0.5, nn::Mode::train, rng);
  std::size_t zeros = 0;
  double total = 0.0;
  for (float v : y.data()) {
    if (v == 0.0f) ++zeros;
    else CHECK(v == 2.0f);
    total += v;
  }
  const double zero_fraction = double(zeros) / 1e5;
  CHECK(zero_fraction > 0.49);
  CHECK(zero_fraction < 0.51);
  CHECK(std::abs(total / 1e5 - 1.0) < 0.02);
}

TEST_CASE("fully connected") {
  std::mt19937_64 rng(8);
  const Tensor64 x = random_tensor<double>({2, 4}, rng);
  Tensor64 eye(Shape{4, 4});
  for (std::size_t i = 0; i < 4; ++i) eye[i * 5] = 1.0;
  CHECK(testing::same_bytes(nn::fully_connected(x, eye, Tensor64(Shape{4})), x));

  const Tensor64 w = random_tensor<double>({3, 4}, rng);
  const Tensor64 b = random_tensor<double>({3}, rng);
  const Tensor64 y0 = nn::fully_connected(Tensor64(Shape{1, 4}), w, b);
  for (std::size_t i = 0; i < 3; ++i) CHECK(y0[i] == b[i]);

  const Tensor64 y = nn::fully_connected(x, w, b);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t o = 0; o < 3; ++o) {
      double s = b[o];
      for (std::size_t i = 0; i < 4; ++i) s += w[o * 4 + i] * x[n * 4 + i];
      CHECK(std::abs(y[n * 3 + o] - s) < 1e-6);
    }
  CHECK_THROWS_AS(nn::fully_connected(x, random_tensor<double>({3, 5}, rng), b), ShapeError);
}

TEST_CASE("channel concatenation") {
  std::mt19937_64 rng(9);
  const Tensor a = random_tensor<float>({1, 2, 4, 4}, rng);
  const Tensor b = random_tensor<float>({1, 3, 4, 4}, rng);
  CHECK(testing::same_bytes(nn::concat_channels<float>({a}), a));
  const Tensor c = nn::concat_channels<float>({a, b});
  CHECK(c.shape() == Shape{1, 5, 4, 4});
  CHECK(testing::same_bytes(ops::slice(c, 1, 0, 2), a));
  CHECK(testing::same_bytes(ops::slice(c, 1, 2, 5), b));
  CHECK_THROWS_AS(nn::concat_channels<float>({a, Tensor(Shape{1, 3, 4, 2})}), ShapeError);
}

TEST_CASE("sigmoid and softmax") {
  CHECK(ops::sigmoid(Tensor::scalar(0.0f)).item() == 0.5f);
  const Tensor p = ops::softmax(Tensor::full({1, 4}, 3.0f));
  for (float v : p.data()) CHECK(v == doctest::Approx(0.25f));

  std::mt19937_64 rng(10);
  const Tensor64 logits = random_tensor<double>({3, 6}, rng, -5.0, 5.0);
  Tensor64 shifted = logits.clone();
  for (auto& v : shifted.data()) v += 123.0;
  CHECK(max_abs_diff(ops::softmax(logits), ops::softmax(shifted)) < 1e-7);
  const Tensor64 s = ops::softmax(logits);
  for (std::size_t r = 0; r < 3; ++r) {
    double row = 0.0;
    for (std::size_t c = 0; c < 6; ++c) row += s[r * 6 + c];
    CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
  }
  const Tensor big = ops::softmax(Tensor(Shape{1, 2}, {1000.0f, 0.0f}));
  CHECK(big[0] == 1.0f);
  const Tensor sig = ops::sigmoid(Tensor(Shape{2}, {-80.0f, 80.0f}));
  CHECK(std::isfinite(sig[0]));
  CHECK(sig[1] <= 1.0f);
}

TEST_CASE("same-padded conv keeps the shape and pool then transpose restores it") {
  std::mt19937_64 rng(11);
  const Tensor x = random_tensor<float>({2, 3, 8, 8}, rng);
  CHECK(nn::conv2d(x, random_tensor<float>({5, 3, 3, 3}, rng), Tensor(Shape{5}), 1, 1).shape() == Shape{2, 5, 8, 8});
  const Tensor up = nn::conv_transpose2d(nn::avg_pool2(x), random_tensor<float>({3, 3, 2, 2}, rng), Tensor(Shape{3}), 2);
  CHECK(up.shape() == x.shape());
}

TEST_CASE("parameter initialization is reproducible and bounded") {
  auto build = [](std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    nn::ParameterStore<float> store;
    store.add("a.weight", Shape{16, 8, 3, 3}, nn::Init::truncated_normal, rng);
    store.add("a.bias", Shape{16}, nn::Init::zeros, rng);
    store.add("n.scale", Shape{16}, nn::Init::ones, rng);
    return store;
  };
  const auto s1 = build(5), s2 = build(5), s3 = build(6);
  CHECK(testing::fingerprint(s1) == testing::fingerprint(s2));
  CHECK(testing::fingerprint(s1) != testing::fingerprint(s3));
  CHECK(s1.parameter_count() == 16 * 8 * 9 + 32);
  double sq = 0.0;
  for (float v : s1.get("a.weight").data()) {
    CHECK(std::abs(v) <= 0.04f);
    sq += double(v) * v;
  }
  // a normal truncated at two standard deviations has std 0.88 of the parent
  const double std_dev = std::sqrt(sq / (16 * 8 * 9));
  CHECK(std_dev > 0.015);
  CHECK(std_dev < 0.02);
  for (float v : s1.get("a.bias").data()) CHECK(v == 0.0f);
  for (float v : s1.get("n.scale").data()) CHECK(v == 1.0f);
  CHECK_THROWS_AS(s1.get("missing"), Error);
}

TEST_CASE("reflected filtering mirrors without repeating the edge") {
  CHECK(nn::reflect_index(-1, 5) == 1);
  CHECK(nn::reflect_index(-3, 5) == 3);
  CHECK(nn::reflect_index(5, 5) == 3);
  CHECK(nn::reflect_index(6, 5) == 2);
  const Tensor row(Shape{1, 1, 1, 4}, {1, 2, 3, 4});
  const Tensor y = nn::filter_reflect<float>(row, {1.0f, 0.0f, 0.0f}, 3);
  // out[j] = x[j-1] with x[-1] mirrored to x[1]
  CHECK(y[0] == 2.0f);
  CHECK(y[1] == 1.0f);
  CHECK(y[3] == 3.0f);
}

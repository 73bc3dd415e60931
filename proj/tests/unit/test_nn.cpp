#include <doctest.h>

#include <random>

#include "gradcheck.hpp"
#include "pcnet/nn/ops.hpp"
#include "pcnet/nn/parameters.hpp"

using namespace pcnet;
using namespace pcnet::nn;
using pcnet::testing::gradient_error;
using pcnet::testing::probe;
using pcnet::testing::random_tensor;

TEST_SUITE("nn") {

TEST_CASE("broadcast arithmetic matches elementwise loops") {
  std::mt19937_64 rng(1);
  Tensor a = random_tensor({2, 3, 4, 5}, rng);
  Tensor b = random_tensor({2, 1, 4, 5}, rng);
  Tensor c = mul(a, b);
  for (int n = 0; n < 2; ++n)
    for (int ch = 0; ch < 3; ++ch)
      for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 5; ++x)
          CHECK(c.at(n, ch, y, x) == a.at(n, ch, y, x) * b.at(n, 0, y, x));
}

TEST_CASE("elementwise and reduction gradients") {
  std::mt19937_64 rng(2);
  Tensor a = random_tensor({2, 3, 4, 4}, rng);
  Tensor b = random_tensor({1, 3, 1, 4}, rng);
  auto f = [&] { return probe(sigmoid(add(mul(a, b), sub(relu(a), abs(b))))); };
  CHECK(gradient_error(f, a, 1e-6) < 1e-6);
  CHECK(gradient_error(f, b, 1e-6) < 1e-6);
  auto g = [&] { return probe(channel_mean(scale(add_scalar(a, 0.3), 2.0))); };
  CHECK(gradient_error(g, a, 1e-6) < 1e-6);
}

TEST_CASE("convolution gradients") {
  std::mt19937_64 rng(3);
  Tensor x = random_tensor({2, 3, 7, 6}, rng);
  Tensor w = random_tensor({4, 3, 3, 3}, rng);
  Tensor bias = random_tensor({1, 4, 1, 1}, rng);
  for (int stride : {1, 2}) {
    auto f = [&] { return probe(conv2d(x, w, bias, stride, 1)); };
    CHECK(gradient_error(f, x, 1e-6) < 1e-6);
    CHECK(gradient_error(f, w, 1e-6) < 1e-6);
    CHECK(gradient_error(f, bias, 1e-6) < 1e-6);
  }
  Tensor dw = random_tensor({3, 1, 3, 3}, rng);
  Tensor db = random_tensor({1, 3, 1, 1}, rng);
  auto g = [&] { return probe(depthwise_conv2d(x, dw, db, 1)); };
  CHECK(gradient_error(g, x, 1e-6) < 1e-6);
  CHECK(gradient_error(g, dw, 1e-6) < 1e-6);
  CHECK(gradient_error(g, db, 1e-6) < 1e-6);
  Tensor pw = random_tensor({5, 3, 1, 1}, rng);
  auto p = [&] { return probe(pointwise(x, pw, Tensor())); };
  CHECK(gradient_error(p, x, 1e-6) < 1e-6);
  CHECK(gradient_error(p, pw, 1e-6) < 1e-6);
}

TEST_CASE("conv2d matches direct summation") {
  std::mt19937_64 rng(4);
  Tensor x = random_tensor({1, 2, 5, 5}, rng);
  Tensor w = random_tensor({3, 2, 3, 3}, rng);
  Tensor y = conv2d(x, w, Tensor(), 2, 1);
  REQUIRE(y.shape() == Shape{1, 3, 3, 3});
  for (int o = 0; o < 3; ++o)
    for (int oy = 0; oy < 3; ++oy)
      for (int ox = 0; ox < 3; ++ox) {
        double s = 0;
        for (int c = 0; c < 2; ++c)
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
              const int iy = oy * 2 - 1 + ky, ix = ox * 2 - 1 + kx;
              if (iy < 0 || iy >= 5 || ix < 0 || ix >= 5) continue;
              s += w.at(o, c, ky, kx) * x.at(0, c, iy, ix);
            }
        CHECK(y.at(0, o, oy, ox) == doctest::Approx(s).epsilon(1e-12));
      }
}

TEST_CASE("normalization, pooling and resize gradients") {
  std::mt19937_64 rng(5);
  Tensor x = random_tensor({2, 4, 6, 6}, rng);
  Tensor gamma = random_tensor({1, 4, 1, 1}, rng);
  Tensor beta = random_tensor({1, 4, 1, 1}, rng);
  auto ln = [&] { return probe(layer_norm_channels(x, gamma, beta)); };
  CHECK(gradient_error(ln, x, 1e-6) < 1e-5);
  CHECK(gradient_error(ln, gamma, 1e-6) < 1e-6);
  CHECK(gradient_error(ln, beta, 1e-6) < 1e-6);
  auto pool = [&] { return probe(avg_pool(x, 2, 3)); };
  CHECK(gradient_error(pool, x, 1e-6) < 1e-6);
  for (auto [h, w] : {std::pair{3, 3}, std::pair{12, 9}, std::pair{5, 7}}) {
    auto rs = [&] { return probe(resize_bilinear(x, h, w)); };
    CHECK(gradient_error(rs, x, 1e-6) < 1e-6);
  }
}

TEST_CASE("bilinear resize of a checkerboard halves to its mean") {
  std::vector<double> v(64);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) v[y * 8 + x] = (x + y) % 2;
  Tensor t = resize_bilinear(Tensor::from({1, 1, 8, 8}, v), 4, 4);
  for (double d : t.data()) CHECK(d == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("matmul and softmax") {
  std::mt19937_64 rng(6);
  Tensor a = random_tensor({2, 3, 2, 2}, rng);  // [N, 3, 4]
  Tensor b = random_tensor({2, 3, 5, 1}, rng);  // [N, 3, 5]
  for (bool ta : {true}) {
    auto f = [&] { return probe(matmul(a, b, ta, false)); };  // [N, 4, 5]
    CHECK(gradient_error(f, a, 1e-6) < 1e-6);
    CHECK(gradient_error(f, b, 1e-6) < 1e-6);
  }
  Tensor m = matmul(a, b, true, false);
  REQUIRE(m.shape() == Shape{2, 4, 5, 1});
  for (int n = 0; n < 2; ++n)
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 5; ++j) {
        double s = 0;
        for (int k = 0; k < 3; ++k) s += a.data()[(n * 3 + k) * 4 + i] * b.data()[(n * 3 + k) * 5 + j];
        CHECK(m.at(n, i, j, 0) == doctest::Approx(s).epsilon(1e-12));
      }
  Tensor c = random_tensor({2, 5, 2, 2}, rng);
  auto g = [&] { return probe(matmul(a, c, false, true)); };
  CHECK(gradient_error(g, c, 1e-6) < 1e-6);
  auto s = [&] { return probe(softmax_rows(m)); };
  CHECK(gradient_error(s, a, 1e-6) < 1e-6);
  Tensor sm = softmax_rows(m);
  for (int n = 0; n < 2; ++n)
    for (int i = 0; i < 4; ++i) {
      double row = 0;
      for (int j = 0; j < 5; ++j) row += sm.at(n, i, j, 0);
      CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("concat and slice gradients") {
  std::mt19937_64 rng(7);
  Tensor a = random_tensor({2, 2, 3, 3}, rng);
  Tensor b = random_tensor({2, 3, 3, 3}, rng);
  auto f = [&] { return probe(slice_channels(concat_channels({a, b}), 1, 3)); };
  CHECK(gradient_error(f, a, 1e-6) < 1e-6);
  CHECK(gradient_error(f, b, 1e-6) < 1e-6);
}

TEST_CASE("grid sampling gradients w.r.t. image and coordinates") {
  std::mt19937_64 rng(8);
  Tensor x = random_tensor({2, 2, 6, 7}, rng);
  Tensor grid = random_tensor({2, 2, 4, 5}, rng, 0.2, 5.7);
  auto f = [&] { return probe(grid_sample(x, grid)); };
  CHECK(gradient_error(f, x, 1e-6) < 1e-6);
  CHECK(gradient_error(f, grid, 1e-6) < 1e-5);
  Tensor h = Tensor::from({1, 9, 1, 1}, {1.01, 0.02, 0.3, -0.01, 0.98, -0.2, 1e-3, -2e-3, 1});
  auto g = [&] { return probe(homography_grid(h, 5, 6)); };
  CHECK(gradient_error(g, h, 1e-7) < 1e-5);
}

TEST_CASE("no-grad scope records nothing") {
  Tensor a = Tensor::full({1, 1, 2, 2}, 1.0, true);
  Tensor y;
  {
    NoGradGuard guard;
    y = mul(a, a);
  }
  CHECK_FALSE(y.requires_grad());
  CHECK(grad_enabled());
}

TEST_CASE("AdamW first step moves each weight by about lr") {
  ParameterStore store;
  Tensor& w = store.add("w", {1, 1, 1, 3});
  w.values() = {1.0, -2.0, 0.5};
  Tensor& frozen = store.add("f", {1, 1, 1, 1});
  frozen.values() = {3.0};
  store.set_frozen("f", true);
  AdamW opt(store, {.lr = 0.1, .weight_decay = 0.0});
  Tensor loss = sum_all(mul(w, w));
  loss.backward();
  opt.step();
  CHECK(w.values()[0] == doctest::Approx(0.9));
  CHECK(w.values()[1] == doctest::Approx(-1.9));
  CHECK(w.values()[2] == doctest::Approx(0.4));
  CHECK(frozen.values()[0] == 3.0);
}

TEST_CASE("AdamW learning-rate scale applies by name prefix") {
  ParameterStore store;
  Tensor& a = store.add("adapter.w", {1, 1, 1, 1});
  Tensor& b = store.add("head.w", {1, 1, 1, 1});
  a.values() = {1.0};
  b.values() = {1.0};
  AdamW opt(store, {.lr = 0.1, .weight_decay = 0.0});
  opt.set_lr_scale("adapter.", 0.1);
  sum_all(add(mul(a, a), mul(b, b))).backward();
  opt.step();
  CHECK(a.values()[0] == doctest::Approx(0.99));
  CHECK(b.values()[0] == doctest::Approx(0.9));
}

TEST_CASE("gradient clipping rescales to the global norm") {
  ParameterStore store;
  Tensor& w = store.add("w", {1, 1, 1, 2});
  w.values() = {3.0, 4.0};
  Tensor& f = store.add("f", {1, 1, 1, 1});
  f.values() = {100.0};
  store.set_frozen("f", true);
  sum_all(add(sum_all(mul(w, w)), sum_all(mul(f, f)))).backward();
  // d/dw of w.w is 2w = (6, 8); the frozen tensor does not count.
  CHECK(store.clip_grad_norm(0.0) == doctest::Approx(10.0));
  CHECK(w.grad()[0] == 6.0);
  CHECK(store.clip_grad_norm(5.0) == doctest::Approx(10.0));
  CHECK(w.grad()[0] == doctest::Approx(3.0));
  CHECK(w.grad()[1] == doctest::Approx(4.0));
  CHECK(store.clip_grad_norm(5.0) == doctest::Approx(5.0));
}

}  // TEST_SUITE

#include <doctest.h>

#include <random>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "pcnet/core/errors.hpp"
#include "pcnet/nn/ops.hpp"
#include "pcnet/she/geometry.hpp"

using namespace pcnet;
using namespace pcnet::she;

namespace {

Image random_image(int c, int h, int w, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0, 1);
  Image img(c, h, w);
  for (double& v : img.data()) v = u(rng);
  return img;
}

}  // namespace

TEST_SUITE("she") {

TEST_CASE("DLT hand-checkable cases") {
  const std::array<Point2, 4> sq{{{0, 0}, {1, 0}, {1, 1}, {0, 1}}};
  CHECK(solve_dlt(sq, sq) == Homography::identity());
  const Homography t = solve_dlt(sq, {{{2, 3}, {3, 3}, {3, 4}, {2, 4}}});
  const Homography s = solve_dlt(sq, {{{0, 0}, {2, 0}, {2, 1}, {0, 1}}});
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) {
      CHECK(t(r, c) == doctest::Approx(Homography::translation(2, 3)(r, c)).epsilon(1e-12));
      CHECK(s(r, c) == doctest::Approx(Homography::scaling(2, 1)(r, c)).epsilon(1e-12));
    }
  CHECK_THROWS_AS(solve_dlt(sq, {{{0, 0}, {1, 1}, {2, 2}, {0, 1}}}), DegenerateHomography);
}

TEST_CASE("corner displacement round trip") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-12, 12);
  for (int t = 0; t < 200; ++t) {
    CornerDisplacement d;
    for (auto& p : d.d) p = {u(rng), u(rng)};
    const Homography h = displacement_to_homography(d, 128, 96);
    const CornerDisplacement back = homography_to_displacement(h, 128, 96);
    for (int j = 0; j < 4; ++j) {
      CHECK(std::abs(back.d[j].x - d.d[j].x) < 1e-6);
      CHECK(std::abs(back.d[j].y - d.d[j].y) < 1e-6);
    }
  }
  CHECK(displacement_to_homography(CornerDisplacement::zero(), 32, 32) == Homography::identity());
}

TEST_CASE("identity and integer-shift warps are exact") {
  std::mt19937_64 rng(22);
  const Image img = random_image(2, 12, 14, rng);
  const WarpResult id = warp_image(img, Homography::identity());
  CHECK(id.warped == img);
  for (double v : id.valid.data()) CHECK(v == 1.0);

  const WarpResult sh = warp_image(img, Homography::translation(5, 0));
  for (int c = 0; c < 2; ++c)
    for (int y = 0; y < 12; ++y)
      for (int x = 0; x < 14; ++x) {
        const bool in = x + 5 <= 13;
        CHECK(sh.warped.at(c, y, x) == (in ? img.at(c, y, x + 5) : 0.0));
        CHECK(sh.valid.at(0, y, x) == (in ? 1.0 : 0.0));
      }
}

TEST_CASE("warp matches the per-pixel oracle for random homographies") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(-4, 4);
  for (int t = 0; t < 20; ++t) {
    const Image img = random_image(1, 16, 16, rng);
    CornerDisplacement d;
    for (auto& p : d.d) p = {u(rng), u(rng)};
    const Homography h = displacement_to_homography(d, 16, 16);
    const WarpResult got = warp_image(img, h);
    const auto [want, valid] = testing::brute_force_warp(img, h.matrix());
    CHECK(got.valid == valid);
    double worst = 0;
    for (std::size_t i = 0; i < want.size(); ++i)
      worst = std::max(worst, std::abs(got.warped.data()[i] - want.data()[i]));
    CHECK(worst < 1e-6);
    for (std::size_t i = 0; i < want.size(); ++i)
      if (got.valid.data()[i] == 0) CHECK(got.warped.data()[i] == 0.0);
  }
}

TEST_CASE("differentiable DLT agrees with the solver and its gradient") {
  std::mt19937_64 rng(24);
  auto d = testing::random_tensor({2, 8, 1, 1}, rng, -5, 5);
  for (bool inverse : {false, true}) {
    const nn::Tensor h = dlt_from_displacement(d, 64, 48, inverse);
    for (int s = 0; s < 2; ++s) {
      CornerDisplacement cd;
      for (int j = 0; j < 4; ++j) cd.d[j] = {d.at(s, 2 * j, 0, 0), d.at(s, 2 * j + 1, 0, 0)};
      Homography want = displacement_to_homography(cd, 64, 48);
      if (inverse) want = want.inverse();
      for (int k = 0; k < 9; ++k)
        CHECK(h.at(s, k, 0, 0) == doctest::Approx(want.values()[k]).epsilon(1e-9));
    }
    auto f = [&] { return testing::probe(dlt_from_displacement(d, 64, 48, inverse)); };
    CHECK(testing::gradient_error(f, d, 1e-6) < 1e-5);
  }
}

TEST_CASE("warp gradient w.r.t. corner displacements") {
  std::mt19937_64 rng(25);
  Image img(1, 32, 32);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x)
      img.at(0, y, x) = 0.5 + 0.3 * std::sin(0.3 * x + 0.1 * y) + 0.2 * std::cos(0.2 * y);
  const nn::Tensor src = image_to_tensor(img);
  auto d = testing::random_tensor({1, 8, 1, 1}, rng, -2, 2);
  // Interior pixels only.
  std::vector<double> mask(32 * 32, 0.0);
  std::uniform_int_distribution<int> pick(6, 25);
  for (int k = 0; k < 40; ++k) mask[pick(rng) * 32 + pick(rng)] = 1.0;
  const nn::Tensor m = nn::Tensor::from({1, 1, 32, 32}, mask);
  auto f = [&] {
    const nn::Tensor h = dlt_from_displacement(d, 32, 32, false);
    return nn::sum_all(nn::mul(warp_tensor(src, h, 32, 32).warped, m));
  };
  CHECK(testing::gradient_error(f, d, 1e-4) < 1e-3);
}

TEST_CASE("conjugation gradient") {
  std::mt19937_64 rng(26);
  auto h = testing::random_tensor({2, 9, 1, 1}, rng);
  Mat3 l = Mat3::Identity() * 2, r = Mat3::Identity() * 0.5;
  l(0, 2) = 1;
  r(1, 2) = -3;
  auto f = [&] { return testing::probe(conjugate_homography(h, l, r)); };
  CHECK(testing::gradient_error(f, h, 1e-6) < 1e-8);
}

}  // TEST_SUITE

#include <catch_amalgamated.hpp>

#include "avc/losses.hpp"
#include "test_util.hpp"

using namespace avc;
using Catch::Approx;

namespace {
Tensor randu(Shape s, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
  Tensor t(std::move(s));
  fill_uniform(t, rng, lo, hi);
  return t;
}
}  // namespace

TEST_CASE("gan loss reference values and clamping") {
  CHECK(loss::gan_loss(0.8, 0.3) == Approx(std::log(0.8) + std::log(0.7)).epsilon(1e-12));
  CHECK(loss::gan_loss(0.5, 0.5) == Approx(2.0 * std::log(0.5)).epsilon(1e-12));
  // saturated inputs stay finite through the clamp
  CHECK(std::isfinite(loss::gan_loss(1.0, 0.0)));
  CHECK(std::isfinite(loss::gan_loss(0.0, 1.0)));
  CHECK(loss::gan_loss(1.0, 0.0) == Approx(2.0 * std::log(1.0 - loss::kProbEps)));

  auto v = loss::gan_loss_var(ag::constant(Tensor({1}, {0.8})),
                              ag::constant(Tensor({1}, {0.3})));
  CHECK(v->value.data[0] == Approx(loss::gan_loss(0.8, 0.3)).epsilon(1e-12));
  // batch form averages each term
  auto vb = loss::gan_loss_var(ag::constant(Tensor({2}, {0.8, 0.6})),
                               ag::constant(Tensor({2}, {0.3, 0.2})));
  double expect = 0.5 * (std::log(0.8) + std::log(0.6)) +
                  0.5 * (std::log(0.7) + std::log(0.8));
  CHECK(vb->value.data[0] == Approx(expect).epsilon(1e-12));
}

TEST_CASE("generator surrogate is the non-saturating form") {
  auto v = loss::generator_gan_loss_var(ag::constant(Tensor({2}, {0.25, 0.5})));
  CHECK(v->value.data[0] ==
        Approx(-0.5 * (std::log(0.25) + std::log(0.5))).epsilon(1e-12));
}

TEST_CASE("gan loss gradients match finite differences") {
  auto f = [](const std::vector<ag::Var>& v) { return loss::gan_loss_var(v[0], v[1]); };
  std::mt19937_64 rng(1);
  CHECK(testutil::max_grad_rel_error(
            f, {randu({4}, rng, 0.1, 0.9), randu({4}, rng, 0.1, 0.9)}) < 1e-6);
  auto g = [](const std::vector<ag::Var>& v) { return loss::generator_gan_loss_var(v[0]); };
  CHECK(testutil::max_grad_rel_error(g, {randu({4}, rng, 0.1, 0.9)}) < 1e-6);
}

TEST_CASE("perceptual loss basics") {
  std::mt19937_64 rng(2);
  loss::FeatureExtractor ext(3, 11);
  Tensor a = randu({3, 8, 8}, rng), b = randu({3, 8, 8}, rng);
  CHECK(loss::perceptual_loss(ext, a, a) == Approx(0.0).margin(1e-15));
  double v = loss::perceptual_loss(ext, a, b);
  CHECK(v > 0.0);
  CHECK(loss::perceptual_loss(ext, b, a) == Approx(v).epsilon(1e-12));
  // the extractor is a pure function of its seed
  loss::FeatureExtractor ext2(3, 11), ext3(3, 12);
  CHECK(loss::perceptual_loss(ext2, a, b) == v);
  CHECK(loss::perceptual_loss(ext3, a, b) != v);
  CHECK(ext.params.checksum() == ext2.params.checksum());
}

TEST_CASE("perceptual loss gradients match finite differences") {
  std::mt19937_64 rng(3);
  loss::FeatureExtractor ext(3, 11);
  Tensor real = randu({1, 3, 8, 8}, rng);
  auto f = [&](const std::vector<ag::Var>& v) {
    return loss::perceptual_loss_var(ext, ag::constant(real), v[0]);
  };
  CHECK(testutil::max_grad_rel_error(f, {randu({1, 3, 8, 8}, rng)}) < 1e-5);
}

TEST_CASE("lip crop and lip loss against a brute-force oracle") {
  std::mt19937_64 rng(4);
  Tensor a = randu({3, 8, 8}, rng), b = randu({3, 8, 8}, rng);
  attn::Region reg{2, 3, 7, 6};

  Tensor ca = loss::crop_lip(a, reg);
  REQUIRE(ca.shape == Shape{3, 3, 5});
  CHECK(ca.at3(0, 0, 0) == a.at3(0, 3, 2));
  CHECK(ca.at3(2, 2, 4) == a.at3(2, 5, 6));

  double acc = 0.0;
  std::size_t cnt = 0;
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = reg.y0; y < reg.y1; ++y)
      for (std::size_t x = reg.x0; x < reg.x1; ++x) {
        acc += std::fabs(a.at3(c, y, x) - b.at3(c, y, x));
        ++cnt;
      }
  CHECK(loss::lip_loss(a, b, reg) == Approx(acc / double(cnt)).epsilon(1e-12));
  CHECK(loss::lip_loss(a, a, reg) == 0.0);
  CHECK_THROWS_AS(loss::lip_loss(a, b, attn::Region{0, 0, 9, 4}), std::out_of_range);
}

TEST_CASE("lip loss gradients match finite differences") {
  std::mt19937_64 rng(5);
  attn::Region reg{1, 2, 6, 7};
  Tensor real = randu({1, 3, 8, 8}, rng);
  auto f = [&](const std::vector<ag::Var>& v) {
    return loss::lip_loss_var(ag::constant(real), v[0], reg);
  };
  CHECK(testutil::max_grad_rel_error(f, {randu({1, 3, 8, 8}, rng)}) < 1e-5);
}

TEST_CASE("mi loss negates the estimate and enforces the pair source") {
  mi::MIEstimate gen_est{0.42, mi::Representation::JS, mi::PairSource::GeneratedPairs};
  CHECK(loss::mi_loss(gen_est) == -0.42);
  mi::MIEstimate real_est{0.42, mi::Representation::JS, mi::PairSource::RealPairs};
  CHECK_THROWS_AS(loss::mi_loss(real_est), std::logic_error);
}

TEST_CASE("total loss is the weighted sum") {
  loss::LossWeights unit{1.0, 1.0, 1.0};
  CHECK(loss::total_loss(1.0, 2.0, 3.0, 4.0, unit) == Approx(10.0));
  loss::LossWeights dflt;
  CHECK(loss::total_loss(1.0, 2.0, 3.0, 4.0, dflt) ==
        Approx(1.0 + 1.0 * 2.0 + 10.0 * 3.0 + 0.1 * 4.0));
  CHECK(loss::total_loss(1.0, 2.0, 3.0, 4.0, {0.0, 0.0, 0.0}) == Approx(1.0));
  CHECK_THROWS_AS(loss::total_loss(1.0, 2.0, 3.0,
                                   std::numeric_limits<double>::quiet_NaN(), dflt),
                  std::invalid_argument);
  loss::LossWeights bad{-1.0, 1.0, 1.0};
  CHECK_THROWS_AS(loss::total_loss(1.0, 2.0, 3.0, 4.0, bad), std::invalid_argument);

  auto v = loss::total_loss_var(
      ag::constant(Tensor::scalar(1.0)), ag::constant(Tensor::scalar(2.0)),
      ag::constant(Tensor::scalar(3.0)), ag::constant(Tensor::scalar(4.0)), dflt);
  CHECK(v->value.data[0] == Approx(33.4).epsilon(1e-12));
}

TEST_CASE("combined objective gradient matches finite differences") {
  std::mt19937_64 rng(6);
  loss::FeatureExtractor ext(3, 11);
  attn::Region reg{2, 2, 6, 6};
  Tensor real = randu({1, 3, 8, 8}, rng);
  Tensor dprob = randu({1}, rng, 0.2, 0.8);
  loss::LossWeights w{0.7, 2.0, 0.0};
  auto f = [&](const std::vector<ag::Var>& v) {
    auto gan = loss::generator_gan_loss_var(ag::sigmoid(ag::mean_all(v[0])));
    auto perc = loss::perceptual_loss_var(ext, ag::constant(real), v[0]);
    auto lip = loss::lip_loss_var(ag::constant(real), v[0], reg);
    return loss::total_loss_var(gan, perc, lip, nullptr, w);
  };
  CHECK(testutil::max_grad_rel_error(f, {randu({1, 3, 8, 8}, rng)}) < 1e-5);
}

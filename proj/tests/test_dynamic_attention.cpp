#include <catch_amalgamated.hpp>

#include "avc/dynamic_attention.hpp"
#include "test_util.hpp"

using namespace avc;
using Catch::Approx;

namespace {
const attn::AttentionSchedule kSched{0.8, 0.2, 5, 20, 45, 50};
}

TEST_CASE("schedule rate hits its anchor points") {
  CHECK(attn::schedule_rate(kSched, 0.0) == 0.8);
  CHECK(attn::schedule_rate(kSched, 5.0) == 0.8);
  CHECK(attn::schedule_rate(kSched, 20.0) == 0.2);
  CHECK(attn::schedule_rate(kSched, 30.0) == 0.2);
  CHECK(attn::schedule_rate(kSched, 12.5) == Approx(0.5).margin(1e-12));
  // exactly one after the fix point, not merely close
  CHECK(attn::schedule_rate(kSched, 45.0) == 1.0);
  CHECK(attn::schedule_rate(kSched, 47.3) == 1.0);
  CHECK(attn::schedule_rate(kSched, 49.999) == 1.0);
}

TEST_CASE("schedule rejects out-of-range epochs and bad configs") {
  CHECK_THROWS_AS(attn::schedule_rate(kSched, -0.1), std::out_of_range);
  CHECK_THROWS_AS(attn::schedule_rate(kSched, 50.0), std::out_of_range);
  attn::AttentionSchedule bad = kSched;
  bad.end_rate = 0.9;  // not below start
  CHECK_THROWS_AS(attn::schedule_rate(bad, 1.0), std::invalid_argument);
  bad = kSched;
  bad.decay_end_epoch = 4;
  CHECK_THROWS_AS(attn::schedule_rate(bad, 1.0), std::invalid_argument);
}

TEST_CASE("schedule is non-increasing before the fix point") {
  double prev = 2.0;
  for (int i = 0; i < 1000; ++i) {
    double e = 45.0 * double(i) / 1000.0;
    double r = attn::schedule_rate(kSched, e);
    CHECK(r <= prev + 1e-15);
    CHECK(r >= 0.2);
    CHECK(r <= 0.8);
    prev = r;
  }
}

TEST_CASE("initial mask is rate inside the region and one outside") {
  attn::Region reg{2, 3, 6, 7};
  auto m = attn::initial_mask(8, 8, reg, 0.25);
  std::size_t inside = 0;
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 8; ++x) {
      if (reg.contains(x, y)) {
        CHECK(m.weights.at2(y, x) == 0.25);
        ++inside;
      } else {
        CHECK(m.weights.at2(y, x) == 1.0);
      }
    }
  CHECK(inside == 16);
  CHECK_THROWS_AS(attn::initial_mask(8, 8, attn::Region{0, 0, 9, 4}, 0.5),
                  std::out_of_range);
  CHECK_THROWS_AS(attn::initial_mask(8, 8, reg, 1.5), std::out_of_range);
}

TEST_CASE("apply_mask gates only the region") {
  std::mt19937_64 rng(1);
  Tensor img({3, 8, 8});
  fill_uniform(img, rng, 0.0, 1.0);
  attn::Region reg{1, 1, 5, 5};

  auto full = attn::apply_mask(img, attn::initial_mask(8, 8, reg, 1.0));
  CHECK(full.data == img.data);  // rate 1 is bitwise identity

  auto zeroed = attn::apply_mask(img, attn::initial_mask(8, 8, reg, 0.0));
  auto halved = attn::apply_mask(img, attn::initial_mask(8, 8, reg, 0.5));
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < 8; ++y)
      for (std::size_t x = 0; x < 8; ++x) {
        if (reg.contains(x, y)) {
          CHECK(zeroed.at3(c, y, x) == 0.0);
          CHECK(halved.at3(c, y, x) == Approx(0.5 * img.at3(c, y, x)).margin(1e-15));
        } else {
          CHECK(zeroed.at3(c, y, x) == img.at3(c, y, x));
          CHECK(halved.at3(c, y, x) == img.at3(c, y, x));
        }
      }
  CHECK_THROWS_AS(attn::apply_mask(Tensor({3, 4, 4}), attn::initial_mask(8, 8, reg, 0.5)),
                  std::invalid_argument);
}

TEST_CASE("predicted mask interpolates between rate and one") {
  std::mt19937_64 rng(2);
  attn::Region reg{1, 2, 6, 7};
  auto prev = attn::initial_mask(8, 8, reg, 0.3);
  Tensor frame({3, 8, 8});
  fill_uniform(frame, rng, 0.0, 1.0);

  attn::MaskPredictor pred(3, rng);
  // saturate the score head: s ~ 1 -> weights fall to the rate
  for (double& v : pred.params["c2.w"].data) v = 0.0;
  pred.params["c2.b"][0] = 60.0;
  auto high = attn::predict_mask(prev, frame, pred);
  CHECK(high.rate == 0.3);
  CHECK(high.region.x0 == reg.x0);
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 8; ++x) {
      if (reg.contains(x, y))
        CHECK(high.weights.at2(y, x) == Approx(0.3).margin(1e-12));
      else
        CHECK(high.weights.at2(y, x) == 1.0);
    }

  // s ~ 0 -> the mask opens fully
  pred.params["c2.b"][0] = -60.0;
  auto low = attn::predict_mask(prev, frame, pred);
  for (std::size_t y = reg.y0; y < reg.y1; ++y)
    for (std::size_t x = reg.x0; x < reg.x1; ++x)
      CHECK(low.weights.at2(y, x) == Approx(1.0).margin(1e-12));

  // generic scores stay within [rate, 1]
  std::mt19937_64 rng2(3);
  attn::MaskPredictor pred2(3, rng2);
  auto mid = attn::predict_mask(prev, frame, pred2);
  for (std::size_t y = reg.y0; y < reg.y1; ++y)
    for (std::size_t x = reg.x0; x < reg.x1; ++x) {
      CHECK(mid.weights.at2(y, x) >= 0.3);
      CHECK(mid.weights.at2(y, x) <= 1.0);
    }
}

TEST_CASE("graph-level masking agrees with the tensor-level path") {
  std::mt19937_64 rng(4);
  attn::Region reg{2, 2, 7, 6};
  attn::MaskPredictor pred(3, rng);
  Tensor frame({3, 8, 8}), identity({3, 8, 8});
  fill_uniform(frame, rng, 0.0, 1.0);
  fill_uniform(identity, rng, 0.0, 1.0);
  double rate = 0.4;

  auto prev = attn::initial_mask(8, 8, reg, rate);
  auto mask = attn::predict_mask(prev, frame, pred);
  Tensor expected = attn::apply_mask(identity, mask);

  auto id_b = ag::constant(identity.reshaped({1, 3, 8, 8}));
  auto score = pred.score(nn::lift(pred.params, false),
                          ag::constant(frame.reshaped({1, 3, 8, 8})));
  auto masked = attn::apply_predicted_mask_var(id_b, score, reg, rate);
  for (std::size_t i = 0; i < expected.numel(); ++i)
    CHECK(masked->value.data[i] == Approx(expected.data[i]).margin(1e-12));
}

TEST_CASE("mask gradients reach the predictor") {
  std::mt19937_64 rng(5);
  attn::Region reg{1, 1, 7, 7};
  attn::MaskPredictor pred(3, rng);
  Tensor frame({1, 3, 8, 8}), identity({1, 3, 8, 8});
  fill_uniform(frame, rng, 0.0, 1.0);
  fill_uniform(identity, rng, 0.0, 1.0);
  auto f = [&](const std::vector<ag::Var>& v) {
    nn::VarParams vp;
    vp.m["c1.w"] = v[0];
    vp.m["c1.b"] = ag::constant(pred.params["c1.b"]);
    vp.m["c2.w"] = v[1];
    vp.m["c2.b"] = ag::constant(pred.params["c2.b"]);
    auto score = pred.score(vp, ag::constant(frame));
    return ag::mean_all(
        ag::square(attn::apply_predicted_mask_var(ag::constant(identity), score, reg, 0.3)));
  };
  CHECK(testutil::max_grad_rel_error(f, {pred.params["c1.w"], pred.params["c2.w"]}) < 1e-5);
}

TEST_CASE("rate one makes the whole pipeline a bitwise no-op") {
  std::mt19937_64 rng(6);
  attn::Region reg{2, 2, 6, 6};
  Tensor img({3, 8, 8});
  fill_uniform(img, rng, 0.0, 1.0);
  auto m = attn::initial_mask(8, 8, reg, 1.0);
  CHECK(attn::apply_mask(img, m).data == img.data);
  // the fine mask cannot reopen anything: weights are 1 regardless of s
  attn::MaskPredictor pred(3, rng);
  auto fine = attn::predict_mask(m, img, pred);
  CHECK(attn::apply_mask(img, fine).data == img.data);
}

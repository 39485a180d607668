#pragma once

#include "avc/nn.hpp"

// Lip-area attention: a coarse rate mask on the identity input, the
// high -> low -> 1 epoch schedule, and the fine-grained mask predictor.
namespace avc::attn {

struct Region {
  std::size_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // half-open [x0,x1) x [y0,y1)

  void validate(std::size_t H, std::size_t W) const {
    if (x0 >= x1 || y0 >= y1 || x1 > W || y1 > H)
      throw std::out_of_range("attention region out of bounds");
  }
  bool contains(std::size_t x, std::size_t y) const {
    return x >= x0 && x < x1 && y >= y0 && y < y1;
  }
};

struct AttentionMask {
  Tensor weights;  // [H,W], 1 outside region, [rate,1] inside
  double rate = 1.0;
  Region region;
};

struct AttentionSchedule {
  double start_rate = 0.8;  // paper range 0.7..0.9
  double end_rate = 0.2;    // paper range 0.1..0.3
  std::size_t decay_start_epoch = 5;
  std::size_t decay_end_epoch = 20;
  std::size_t fix_to_one_epoch = 45;
  std::size_t total_epochs = 50;

  void validate() const {
    if (!(decay_start_epoch < decay_end_epoch && decay_end_epoch <= fix_to_one_epoch &&
          fix_to_one_epoch <= total_epochs))
      throw std::invalid_argument("attention schedule epochs out of order");
    if (!(start_rate > end_rate))
      throw std::invalid_argument("start_rate must exceed end_rate");
    if (start_rate < 0 || start_rate > 1 || end_rate < 0 || end_rate > 1)
      throw std::invalid_argument("rates must lie in [0,1]");
  }
};

// start_rate before decay, linear decay to end_rate, then exactly 1.0 from
// fix_to_one_epoch on. Accepts fractional epochs for mid-epoch queries.
inline double schedule_rate(const AttentionSchedule& s, double epoch) {
  s.validate();
  if (epoch < 0 || epoch >= double(s.total_epochs))
    throw std::out_of_range("epoch outside schedule");
  if (epoch >= double(s.fix_to_one_epoch)) return 1.0;
  if (epoch <= double(s.decay_start_epoch)) return s.start_rate;
  if (epoch >= double(s.decay_end_epoch)) return s.end_rate;
  double t = (epoch - double(s.decay_start_epoch)) /
             double(s.decay_end_epoch - s.decay_start_epoch);
  return s.start_rate + t * (s.end_rate - s.start_rate);
}

inline AttentionMask initial_mask(std::size_t H, std::size_t W, Region region, double rate) {
  region.validate(H, W);
  if (rate < 0.0 || rate > 1.0) throw std::out_of_range("rate outside [0,1]");
  AttentionMask m;
  m.rate = rate;
  m.region = region;
  m.weights = Tensor::full({H, W}, 1.0);
  for (std::size_t y = region.y0; y < region.y1; ++y)
    for (std::size_t x = region.x0; x < region.x1; ++x)
      m.weights.at2(y, x) = rate;
  return m;
}

inline Tensor apply_mask(const Tensor& image, const AttentionMask& mask) {
  if (image.rank() != 3 || image.shape[1] != mask.weights.shape[0] ||
      image.shape[2] != mask.weights.shape[1])
    throw std::invalid_argument("apply_mask: shape mismatch");
  Tensor out = image;
  for (std::size_t c = 0; c < image.shape[0]; ++c)
    for (std::size_t y = 0; y < image.shape[1]; ++y)
      for (std::size_t x = 0; x < image.shape[2]; ++x)
        out.at3(c, y, x) *= mask.weights.at2(y, x);
  return out;
}

// Small per-pixel lip-shape scorer, trained jointly with the generator.
struct MaskPredictor {
  std::size_t width = 8;
  nn::Params params;

  MaskPredictor() = default;
  MaskPredictor(std::size_t channels, std::mt19937_64& rng, std::size_t width_ = 8)
      : width(width_) {
    params.t["c1.w"] = nn::init_weight({width, channels, 3, 3}, rng);
    params.t["c1.b"] = Tensor::zeros({width});
    params.t["c2.w"] = nn::init_weight({1, width, 3, 3}, rng);
    params.t["c2.b"] = Tensor::zeros({1});
  }

  // frame [N,C,H,W] -> score map s in [0,1], shape [N,1,H,W]
  ag::Var score(const nn::VarParams& vp, const ag::Var& frame) const {
    using namespace ag;
    Var h = leaky_relu(conv2d(frame, vp.at("c1.w"), vp.at("c1.b"), 1, 1));
    return sigmoid(conv2d(h, vp.at("c2.w"), vp.at("c2.b"), 1, 1));
  }

  Tensor score_t(const Tensor& frame) const {
    auto vp = nn::lift(params, false);
    return score(vp, ag::constant(frame.rank() == 3
                                      ? frame.reshaped({1, frame.shape[0], frame.shape[1],
                                                        frame.shape[2]})
                                      : frame))
        ->value;
  }
};

// Fine-grained mask: inside the region the weight becomes
// rate + (1-rate)*(1-s); outside it stays 1. The rate is carried over
// from the previous mask unchanged.
inline AttentionMask predict_mask(const AttentionMask& prev, const Tensor& generated_frame,
                                  const MaskPredictor& predictor) {
  if (generated_frame.rank() != 3 ||
      generated_frame.shape[1] != prev.weights.shape[0] ||
      generated_frame.shape[2] != prev.weights.shape[1])
    throw std::invalid_argument("predict_mask: shape mismatch");
  Tensor s = predictor.score_t(generated_frame);  // [1,1,H,W]
  AttentionMask out;
  out.rate = prev.rate;
  out.region = prev.region;
  out.weights = Tensor::full(prev.weights.shape, 1.0);
  for (std::size_t y = prev.region.y0; y < prev.region.y1; ++y)
    for (std::size_t x = prev.region.x0; x < prev.region.x1; ++x) {
      double sv = s.at4(0, 0, y, x);
      out.weights.at2(y, x) = prev.rate + (1.0 - prev.rate) * (1.0 - sv);
    }
  return out;
}

// Differentiable masking used in the training graph: the identity batch is
// multiplied by rate + (1-rate)*(1-s) inside the region (s from the
// predictor, gradient flows into it), 1 elsewhere.
inline ag::Var apply_predicted_mask_var(const ag::Var& identity_batch, const ag::Var& score_map,
                                        const Region& region, double rate) {
  using namespace ag;
  const Shape& s = identity_batch->value.shape;
  // region indicator as a constant pixel map
  Tensor ind({s[0], 1, s[2], s[3]});
  for (std::size_t n = 0; n < s[0]; ++n)
    for (std::size_t y = 0; y < s[2]; ++y)
      for (std::size_t x = 0; x < s[3]; ++x)
        ind.at4(n, 0, y, x) = region.contains(x, y) ? 1.0 : 0.0;
  auto region_c = constant(ind);
  Tensor ones_t({s[0], 1, s[2], s[3]});
  for (double& v : ones_t.data) v = 1.0;
  auto ones = constant(ones_t);
  // w = 1 outside; rate + (1-rate)*(1-s) inside
  auto inside = add_scalar(scale(score_map, -(1.0 - rate)), 1.0);  // 1-(1-rate)*s
  auto w = add(mul(region_c, inside), sub(ones, region_c));
  return mul_pixelmap(identity_batch, w);
}

}  // namespace avc::attn

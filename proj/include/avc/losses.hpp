#pragma once

#include "avc/dynamic_attention.hpp"
#include "avc/mi_estimators.hpp"
#include "avc/nn.hpp"

// Training objectives: adversarial, perceptual, lip-crop L1, MI, and the
// weighted total.
namespace avc::loss {

struct LossWeights {
  double lambda_perc = 1.0;
  double lambda_lip = 10.0;
  double lambda_mi = 0.1;

  void validate() const {
    for (double v : {lambda_perc, lambda_lip, lambda_mi})
      if (!(std::isfinite(v) && v >= 0.0))
        throw std::invalid_argument("loss weights must be finite and >= 0");
  }
};

inline constexpr double kProbEps = 1e-7;

// log(d_real) + log(1 - d_fake); the discriminator ascends this. Inputs are
// clamped away from exact 0/1.
inline double gan_loss(double d_real, double d_fake) {
  d_real = std::clamp(d_real, kProbEps, 1.0 - kProbEps);
  d_fake = std::clamp(d_fake, kProbEps, 1.0 - kProbEps);
  return std::log(d_real) + std::log(1.0 - d_fake);
}

// Graph version over probability batches [N].
inline ag::Var gan_loss_var(const ag::Var& d_real, const ag::Var& d_fake) {
  using namespace ag;
  auto one_minus_fake = add_scalar(neg(d_fake), 1.0);
  return add(mean_all(log_clamped(d_real, kProbEps)),
             mean_all(log_clamped(one_minus_fake, kProbEps)));
}

// Non-saturating generator surrogate: -mean log(d_fake).
inline ag::Var generator_gan_loss_var(const ag::Var& d_fake) {
  return ag::neg(ag::mean_all(ag::log_clamped(d_fake, kProbEps)));
}

// Frozen seed-fixed 3-layer conv feature extractor standing in for a
// pretrained perceptual network.
struct FeatureExtractor {
  std::size_t width = 8;
  nn::Params params;

  FeatureExtractor() = default;
  FeatureExtractor(std::size_t channels, std::uint64_t seed, std::size_t width_ = 8)
      : width(width_) {
    std::mt19937_64 rng(seed);
    params.t["c1.w"] = nn::init_weight({width, channels, 3, 3}, rng);
    params.t["c1.b"] = Tensor::zeros({width});
    params.t["c2.w"] = nn::init_weight({2 * width, width, 3, 3}, rng);
    params.t["c2.b"] = Tensor::zeros({2 * width});
    params.t["c3.w"] = nn::init_weight({2 * width, 2 * width, 3, 3}, rng);
    params.t["c3.b"] = Tensor::zeros({2 * width});
  }

  ag::Var features(const ag::Var& x) const {
    using namespace ag;
    auto vp = nn::lift(params, false);  // immutable by construction
    Var h = leaky_relu(conv2d(x, vp.at("c1.w"), vp.at("c1.b"), 2, 1));
    h = leaky_relu(conv2d(h, vp.at("c2.w"), vp.at("c2.b"), 2, 1));
    return conv2d(h, vp.at("c3.w"), vp.at("c3.b"), 1, 1);
  }
};

// Mean squared feature difference ||phi(f) - phi(f_hat)||^2 / #features.
inline ag::Var perceptual_loss_var(const FeatureExtractor& ext, const ag::Var& real,
                                   const ag::Var& generated) {
  ag::check_same_shape(real, generated, "perceptual_loss");
  auto d = ag::sub(ext.features(real), ext.features(generated));
  return ag::mean_all(ag::square(d));
}

inline double perceptual_loss(const FeatureExtractor& ext, const Tensor& real,
                              const Tensor& generated) {
  auto to4 = [](const Tensor& t) {
    return t.rank() == 3 ? t.reshaped({1, t.shape[0], t.shape[1], t.shape[2]}) : t;
  };
  return perceptual_loss_var(ext, ag::constant(to4(real)), ag::constant(to4(generated)))
      ->value.data[0];
}

inline Tensor crop_lip(const Tensor& frame, const attn::Region& region) {
  if (frame.rank() != 3) throw std::invalid_argument("crop_lip: expects [C,H,W]");
  region.validate(frame.shape[1], frame.shape[2]);
  Tensor out({frame.shape[0], region.y1 - region.y0, region.x1 - region.x0});
  for (std::size_t c = 0; c < frame.shape[0]; ++c)
    for (std::size_t y = region.y0; y < region.y1; ++y)
      for (std::size_t x = region.x0; x < region.x1; ++x)
        out.at3(c, y - region.y0, x - region.x0) = frame.at3(c, y, x);
  return out;
}

// Mean absolute difference over the cropped lip region.
inline ag::Var lip_loss_var(const ag::Var& real, const ag::Var& generated,
                            const attn::Region& region) {
  ag::check_same_shape(real, generated, "lip_loss");
  region.validate(real->value.shape[2], real->value.shape[3]);
  auto rc = ag::crop(real, region.y0, region.y1, region.x0, region.x1);
  auto gc = ag::crop(generated, region.y0, region.y1, region.x0, region.x1);
  return ag::mean_all(ag::abs_op(ag::sub(rc, gc)));
}

inline double lip_loss(const Tensor& real, const Tensor& generated,
                       const attn::Region& region) {
  auto to4 = [](const Tensor& t) {
    return t.rank() == 3 ? t.reshaped({1, t.shape[0], t.shape[1], t.shape[2]}) : t;
  };
  return lip_loss_var(ag::constant(to4(real)), ag::constant(to4(generated)), region)
      ->value.data[0];
}

// Negated MI estimate; only generated-pair estimates may drive the
// generator (the guard protects the asymmetric protocol).
inline double mi_loss(const mi::MIEstimate& estimate) {
  if (estimate.source != mi::PairSource::GeneratedPairs)
    throw std::logic_error("mi_loss requires a GeneratedPairs estimate");
  return -estimate.value;
}

inline double total_loss(double gan, double perc, double lip, double mi_term,
                         const LossWeights& w) {
  w.validate();
  for (double v : {gan, perc, lip, mi_term})
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite loss term");
  return gan + w.lambda_perc * perc + w.lambda_lip * lip + w.lambda_mi * mi_term;
}

inline ag::Var total_loss_var(const ag::Var& gan, const ag::Var& perc, const ag::Var& lip,
                              const ag::Var& mi_term, const LossWeights& w) {
  using namespace ag;
  w.validate();
  Var out = gan;
  if (w.lambda_perc != 0.0) out = add(out, scale(perc, w.lambda_perc));
  if (w.lambda_lip != 0.0) out = add(out, scale(lip, w.lambda_lip));
  if (w.lambda_mi != 0.0 && mi_term) out = add(out, scale(mi_term, w.lambda_mi));
  return out;
}

}  // namespace avc::loss

#pragma once

#include <optional>
#include <random>

#include "avc/graph.hpp"
#include "avc/nn.hpp"

// Neural MI lower-bound estimators (DV and JS) plus the asymmetric
// train-on-real / estimate-on-generated protocol.
namespace avc::mi {

enum class Representation { DV, JS };
enum class PairSource { RealPairs, GeneratedPairs };

struct MIEstimate {
  double value = 0.0;
  Representation representation = Representation::JS;
  PairSource source = PairSource::RealPairs;
};

inline double softplus(double x) { return ag::softplus_scalar(x); }

// Joint pairs aligned by index; marginal pairs hold deranged audio.
struct PairedBatch {
  Tensor joint_frames, joint_audios;      // [N, ...]
  Tensor marginal_frames, marginal_audios;

  std::size_t size() const { return joint_frames.shape[0]; }

  void validate() const {
    if (joint_frames.shape[0] != joint_audios.shape[0] ||
        marginal_frames.shape[0] != marginal_audios.shape[0])
      throw std::invalid_argument("PairedBatch: joint/marginal lengths differ");
  }
};

// Uniform random derangement by rejection; deterministic given the rng state.
inline std::vector<std::size_t> sample_derangement(std::size_t n, std::mt19937_64& rng) {
  if (n < 2) throw std::invalid_argument("derangement needs n >= 2");
  std::vector<std::size_t> perm(n);
  for (;;) {
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    for (std::size_t i = n - 1; i > 0; --i) {
      std::uniform_int_distribution<std::size_t> d(0, i);
      std::swap(perm[i], perm[d(rng)]);
    }
    bool fixed = false;
    for (std::size_t i = 0; i < n; ++i) fixed = fixed || (perm[i] == i);
    if (!fixed) return perm;
  }
}

namespace detail {
inline Tensor gather_rows(const Tensor& t, const std::vector<std::size_t>& idx) {
  Shape s = t.shape;
  std::size_t row = t.numel() / s[0];
  s[0] = idx.size();
  Tensor out(s);
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy_n(t.data.begin() + idx[i] * row, row, out.data.begin() + i * row);
  return out;
}
}  // namespace detail

// Marginal pairs pair frame i with audio perm(i), perm a derangement, so no
// marginal pair reproduces its joint alignment.
inline PairedBatch make_marginal_batch(const Tensor& joint_frames, const Tensor& joint_audios,
                                       std::mt19937_64& rng) {
  std::size_t n = joint_frames.shape[0];
  if (n != joint_audios.shape[0])
    throw std::invalid_argument("make_marginal_batch: frame/audio count mismatch");
  if (n < 2) throw std::invalid_argument("make_marginal_batch: need at least 2 pairs");
  auto perm = sample_derangement(n, rng);
  std::vector<std::size_t> ident(n);
  for (std::size_t i = 0; i < n; ++i) ident[i] = i;
  PairedBatch b;
  b.joint_frames = joint_frames;
  b.joint_audios = joint_audios;
  b.marginal_frames = joint_frames;
  b.marginal_audios = detail::gather_rows(joint_audios, perm);
  return b;
}

// T_theta(frame, audio) -> scalar. Two input regimes share one class:
// vector inputs (rank-1 samples, used for the Gaussian benchmarks) go
// through dense encoders; image inputs ([C,H,W] frames with [t,c] audio
// features) go through strided-conv encoders. Either way a 3-layer
// classifier head maps the concatenated embeddings to one scalar.
struct StatisticsNetwork {
  Shape frame_shape;  // per-sample
  Shape audio_shape;
  std::size_t base_width = 8;
  std::size_t embed = 32;
  std::size_t hidden = 64;
  nn::Params params;

  StatisticsNetwork() = default;
  StatisticsNetwork(Shape frame_s, Shape audio_s, std::mt19937_64& rng,
                    std::size_t base_width_ = 8, std::size_t embed_ = 32,
                    std::size_t hidden_ = 64)
      : frame_shape(std::move(frame_s)), audio_shape(std::move(audio_s)),
        base_width(base_width_), embed(embed_), hidden(hidden_) {
    init(rng);
  }

  bool vector_mode() const { return frame_shape.size() == 1; }

  void init(std::mt19937_64& rng) {
    auto& p = params.t;
    if (vector_mode()) {
      p["img.fc.w"] = nn::init_weight({frame_shape[0], embed}, rng);
      p["img.fc.b"] = Tensor::zeros({embed});
      p["aud.fc.w"] = nn::init_weight({audio_shape[0], embed}, rng);
      p["aud.fc.b"] = Tensor::zeros({embed});
    } else {
      std::size_t C = frame_shape[0], H = frame_shape[1], W = frame_shape[2];
      std::size_t w1 = base_width, w2 = 2 * base_width, w3 = 4 * base_width;
      p["img.c1.w"] = nn::init_weight({w1, C, 3, 3}, rng);
      p["img.c1.b"] = Tensor::zeros({w1});
      p["img.c2.w"] = nn::init_weight({w2, w1, 3, 3}, rng);
      p["img.c2.b"] = Tensor::zeros({w2});
      p["img.c3.w"] = nn::init_weight({w3, w2, 3, 3}, rng);
      p["img.c3.b"] = Tensor::zeros({w3});
      std::size_t hs = H / 8, ws = W / 8;
      p["img.fc.w"] = nn::init_weight({w3 * hs * ws, embed}, rng);
      p["img.fc.b"] = Tensor::zeros({embed});
      std::size_t at = audio_shape[0], ac = audio_shape[1];
      p["aud.c1.w"] = nn::init_weight({w1, 1, 3, 3}, rng);
      p["aud.c1.b"] = Tensor::zeros({w1});
      p["aud.c2.w"] = nn::init_weight({w2, w1, 3, 3}, rng);
      p["aud.c2.b"] = Tensor::zeros({w2});
      std::size_t ah = (at + 3) / 4, aw = (ac + 3) / 4;  // two stride-2 convs, pad 1
      p["aud.fc.w"] = nn::init_weight({w2 * ah * aw, embed}, rng);
      p["aud.fc.b"] = Tensor::zeros({embed});
    }
    params.t["cls.l1.w"] = nn::init_weight({2 * embed, hidden}, rng);
    params.t["cls.l1.b"] = Tensor::zeros({hidden});
    params.t["cls.l2.w"] = nn::init_weight({hidden, hidden}, rng);
    params.t["cls.l2.b"] = Tensor::zeros({hidden});
    params.t["cls.l3.w"] = nn::init_weight({hidden, 1}, rng);
    params.t["cls.l3.b"] = Tensor::zeros({1});
  }

  // frames [N,...frame_shape], audios [N,...audio_shape] -> scores [N]
  ag::Var score(const nn::VarParams& vp, const ag::Var& frames, const ag::Var& audios) const {
    using namespace ag;
    std::size_t N = frames->value.shape[0];
    Var fe, ae;
    if (vector_mode()) {
      fe = leaky_relu(dense(frames, vp.at("img.fc.w"), vp.at("img.fc.b")));
      ae = leaky_relu(dense(audios, vp.at("aud.fc.w"), vp.at("aud.fc.b")));
    } else {
      Var h = frames;
      h = leaky_relu(conv2d(h, vp.at("img.c1.w"), vp.at("img.c1.b"), 2, 1));
      h = leaky_relu(conv2d(h, vp.at("img.c2.w"), vp.at("img.c2.b"), 2, 1));
      h = leaky_relu(conv2d(h, vp.at("img.c3.w"), vp.at("img.c3.b"), 2, 1));
      h = reshape(h, {N, h->value.numel() / N});
      fe = leaky_relu(dense(h, vp.at("img.fc.w"), vp.at("img.fc.b")));
      Var a = reshape(audios, {N, 1, audio_shape[0], audio_shape[1]});
      a = leaky_relu(conv2d(a, vp.at("aud.c1.w"), vp.at("aud.c1.b"), 2, 1));
      a = leaky_relu(conv2d(a, vp.at("aud.c2.w"), vp.at("aud.c2.b"), 2, 1));
      a = reshape(a, {N, a->value.numel() / N});
      ae = leaky_relu(dense(a, vp.at("aud.fc.w"), vp.at("aud.fc.b")));
    }
    Var h = concat_dim1({fe, ae});
    h = leaky_relu(dense(h, vp.at("cls.l1.w"), vp.at("cls.l1.b")));
    h = leaky_relu(dense(h, vp.at("cls.l2.w"), vp.at("cls.l2.b")));
    h = dense(h, vp.at("cls.l3.w"), vp.at("cls.l3.b"));
    return reshape(h, {N});
  }
};

// Graph-level objectives; frame/audio inputs may be graph nodes so the MI
// term can drive the generator.
inline ag::Var dv_objective_var(const StatisticsNetwork& net, const nn::VarParams& vp,
                                const ag::Var& jf, const ag::Var& ja,
                                const ag::Var& mf, const ag::Var& ma) {
  auto tj = net.score(vp, jf, ja);
  auto tm = net.score(vp, mf, ma);
  return ag::sub(ag::mean_all(tj), ag::log_mean_exp(tm));
}

inline ag::Var js_objective_var(const StatisticsNetwork& net, const nn::VarParams& vp,
                                const ag::Var& jf, const ag::Var& ja,
                                const ag::Var& mf, const ag::Var& ma) {
  auto tj = net.score(vp, jf, ja);
  auto tm = net.score(vp, mf, ma);
  auto joint_term = ag::mean_all(ag::neg(ag::softplus(ag::neg(tj))));
  auto marg_term = ag::mean_all(ag::softplus(tm));
  return ag::sub(joint_term, marg_term);
}

inline ag::Var objective_var(const StatisticsNetwork& net, const nn::VarParams& vp,
                             const ag::Var& jf, const ag::Var& ja, const ag::Var& mf,
                             const ag::Var& ma, Representation rep) {
  return rep == Representation::DV ? dv_objective_var(net, vp, jf, ja, mf, ma)
                                   : js_objective_var(net, vp, jf, ja, mf, ma);
}

inline double eval_objective(const StatisticsNetwork& net, const PairedBatch& batch,
                             Representation rep) {
  batch.validate();
  auto vp = nn::lift(net.params, false);
  auto v = objective_var(net, vp, ag::constant(batch.joint_frames),
                         ag::constant(batch.joint_audios),
                         ag::constant(batch.marginal_frames),
                         ag::constant(batch.marginal_audios), rep);
  double out = v->value.data[0];
  if (!std::isfinite(out)) throw std::runtime_error("MI objective is not finite");
  return out;
}

inline double dv_objective(const StatisticsNetwork& net, const PairedBatch& batch) {
  return eval_objective(net, batch, Representation::DV);
}
inline double js_objective(const StatisticsNetwork& net, const PairedBatch& batch) {
  return eval_objective(net, batch, Representation::JS);
}

// One gradient-ascent step on the chosen objective over real pairs. With an
// Adam state the step uses adaptive moments, otherwise plain ascent
// (params + lr * grad). Only estimator parameters change.
inline double estimator_update_step(StatisticsNetwork& net, const PairedBatch& real_batch,
                                    Representation rep, double learning_rate,
                                    nn::Adam* opt = nullptr) {
  real_batch.validate();
  auto vp = nn::lift(net.params, true);
  auto v = objective_var(net, vp, ag::constant(real_batch.joint_frames),
                         ag::constant(real_batch.joint_audios),
                         ag::constant(real_batch.marginal_frames),
                         ag::constant(real_batch.marginal_audios), rep);
  if (!std::isfinite(v->value.data[0]))
    throw std::runtime_error("MI objective is not finite");
  ag::backward(v);
  if (opt)
    opt->step(net.params, vp, learning_rate, +1.0);
  else
    nn::sgd_step(net.params, vp, learning_rate, +1.0);
  return v->value.data[0];
}

// Scores a generated batch with frozen estimator parameters. The Var overload
// lets the generator receive gradient through the frame inputs; the network
// parameters are lifted without requires_grad and cannot change.
inline ag::Var estimate_on_generated_var(const StatisticsNetwork& net, const ag::Var& jf,
                                         const ag::Var& ja, const ag::Var& mf,
                                         const ag::Var& ma, Representation rep) {
  auto vp = nn::lift(net.params, false);
  return objective_var(net, vp, jf, ja, mf, ma, rep);
}

inline MIEstimate estimate_on_generated(const StatisticsNetwork& net,
                                        const PairedBatch& generated_batch,
                                        Representation rep) {
  return MIEstimate{eval_objective(net, generated_batch, rep), rep,
                    PairSource::GeneratedPairs};
}

inline MIEstimate estimate_on_real(const StatisticsNetwork& net, const PairedBatch& batch,
                                   Representation rep) {
  return MIEstimate{eval_objective(net, batch, rep), rep, PairSource::RealPairs};
}

}  // namespace avc::mi

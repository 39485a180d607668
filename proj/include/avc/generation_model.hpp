#pragma once

#include "avc/nn.hpp"

// Talking-face generator (identity/audio/image encoders + frame decoder
// with identity skip connections) and the matched-pair frame
// discriminator.
namespace avc::gen {

struct ModelConfig {
  std::size_t height = 64, width = 64, channels = 3;
  std::size_t base_width = 16;
  std::size_t audio_rows = 20, audio_cols = 13;

  void validate() const {
    if (height % 8 != 0 || width % 8 != 0)
      throw std::invalid_argument("image size must be divisible by 8");
    if (base_width < 2) throw std::invalid_argument("base_width too small");
  }
  std::size_t bottleneck_h() const { return height / 8; }
  std::size_t bottleneck_w() const { return width / 8; }
};

namespace detail {
// Three stride-2 conv stages (w, 2w, 4w), LeakyReLU.
inline void init_conv_encoder(nn::Params& p, const std::string& prefix, std::size_t in_ch,
                              std::size_t w, std::mt19937_64& rng) {
  p.t[prefix + ".c1.w"] = nn::init_weight({w, in_ch, 3, 3}, rng);
  p.t[prefix + ".c1.b"] = Tensor::zeros({w});
  p.t[prefix + ".c2.w"] = nn::init_weight({2 * w, w, 3, 3}, rng);
  p.t[prefix + ".c2.b"] = Tensor::zeros({2 * w});
  p.t[prefix + ".c3.w"] = nn::init_weight({4 * w, 2 * w, 3, 3}, rng);
  p.t[prefix + ".c3.b"] = Tensor::zeros({4 * w});
}

struct EncoderTaps {
  ag::Var s1, s2, s3;  // H/2, H/4, H/8 feature maps
};

inline EncoderTaps conv_encoder(const nn::VarParams& vp, const std::string& prefix,
                                const ag::Var& x) {
  using namespace ag;
  EncoderTaps t;
  t.s1 = leaky_relu(conv2d(x, vp.at(prefix + ".c1.w"), vp.at(prefix + ".c1.b"), 2, 1));
  t.s2 = leaky_relu(conv2d(t.s1, vp.at(prefix + ".c2.w"), vp.at(prefix + ".c2.b"), 2, 1));
  t.s3 = leaky_relu(conv2d(t.s2, vp.at(prefix + ".c3.w"), vp.at(prefix + ".c3.b"), 2, 1));
  return t;
}
}  // namespace detail

struct Generator {
  ModelConfig cfg;
  nn::Params params;

  Generator() = default;
  Generator(ModelConfig c, std::mt19937_64& rng) : cfg(c) {
    cfg.validate();
    std::size_t w = cfg.base_width, C = cfg.channels;
    detail::init_conv_encoder(params, "id", C, w, rng);
    detail::init_conv_encoder(params, "img", C, w, rng);
    // audio encoder: two stride-2 convs over the feature grid + projection
    params.t["aud.c1.w"] = nn::init_weight({w, 1, 3, 3}, rng);
    params.t["aud.c1.b"] = Tensor::zeros({w});
    params.t["aud.c2.w"] = nn::init_weight({2 * w, w, 3, 3}, rng);
    params.t["aud.c2.b"] = Tensor::zeros({2 * w});
    std::size_t ah = (cfg.audio_rows + 3) / 4, aw = (cfg.audio_cols + 3) / 4;
    params.t["aud.fc.w"] = nn::init_weight({2 * w * ah * aw, 2 * w}, rng);
    params.t["aud.fc.b"] = Tensor::zeros({2 * w});
    // bottleneck merge: identity 4w + image 4w + audio 2w -> 4w
    params.t["dec.merge.w"] = nn::init_weight({4 * w, 10 * w, 1, 1}, rng);
    params.t["dec.merge.b"] = Tensor::zeros({4 * w});
    params.t["dec.u1.w"] = nn::init_weight({4 * w, 2 * w, 4, 4}, rng);  // ConvT [Ci,Co,k,k]
    params.t["dec.u1.b"] = Tensor::zeros({2 * w});
    params.t["dec.u2.w"] = nn::init_weight({4 * w, w, 4, 4}, rng);  // after skip concat
    params.t["dec.u2.b"] = Tensor::zeros({w});
    params.t["dec.u3.w"] = nn::init_weight({2 * w, C, 4, 4}, rng);
    params.t["dec.u3.b"] = Tensor::zeros({C});
  }

  // audio [N,t,c] -> embedding [N,2w]
  ag::Var audio_embed(const nn::VarParams& vp, const ag::Var& audio) const {
    using namespace ag;
    std::size_t N = audio->value.shape[0];
    Var a = reshape(audio, {N, 1, cfg.audio_rows, cfg.audio_cols});
    a = leaky_relu(conv2d(a, vp.at("aud.c1.w"), vp.at("aud.c1.b"), 2, 1));
    a = leaky_relu(conv2d(a, vp.at("aud.c2.w"), vp.at("aud.c2.b"), 2, 1));
    a = reshape(a, {N, a->value.numel() / N});
    return leaky_relu(dense(a, vp.at("aud.fc.w"), vp.at("aud.fc.b")));
  }

  // identity/prev [N,C,H,W], audio [N,t,c] -> frame [N,C,H,W] in (0,1)
  ag::Var forward(const nn::VarParams& vp, const ag::Var& identity_face, const ag::Var& audio,
                  const ag::Var& prev_frame) const {
    using namespace ag;
    check_input(identity_face->value, "identity_face");
    check_input(prev_frame->value, "prev_frame");
    auto id = detail::conv_encoder(vp, "id", identity_face);
    auto im = detail::conv_encoder(vp, "img", prev_frame);
    auto ae = audio_embed(vp, audio);
    auto at = tile_spatial(ae, cfg.bottleneck_h(), cfg.bottleneck_w());
    Var h = concat_dim1({id.s3, im.s3, at});
    h = leaky_relu(conv2d(h, vp.at("dec.merge.w"), vp.at("dec.merge.b"), 1, 0));
    h = leaky_relu(conv2d_transpose(h, vp.at("dec.u1.w"), vp.at("dec.u1.b"), 2, 1));
    h = concat_dim1({h, id.s2});
    h = leaky_relu(conv2d_transpose(h, vp.at("dec.u2.w"), vp.at("dec.u2.b"), 2, 1));
    h = concat_dim1({h, id.s1});
    h = conv2d_transpose(h, vp.at("dec.u3.w"), vp.at("dec.u3.b"), 2, 1);
    return sigmoid(h);
  }

  Tensor forward_t(const Tensor& identity_face, const Tensor& audio,
                   const Tensor& prev_frame) const {
    auto vp = nn::lift(params, false);
    auto out = forward(vp, ag::constant(identity_face), ag::constant(audio),
                       ag::constant(prev_frame));
    return out->value;
  }

  // Autoregressive rollout: frame 1 conditions on the identity face, frame i
  // on the previously generated frame.
  Tensor generate_sequence(const Tensor& identity_face, const Tensor& features) const {
    if (features.rank() != 3 || features.shape[0] < 1)
      throw std::invalid_argument("generate_sequence: features must be [n,t,c], n >= 1");
    std::size_t n = features.shape[0];
    Tensor id_b = identity_face.reshaped({1, cfg.channels, cfg.height, cfg.width});
    Tensor prev = id_b;
    Tensor out({n, cfg.channels, cfg.height, cfg.width});
    for (std::size_t i = 0; i < n; ++i) {
      Tensor a({1, cfg.audio_rows, cfg.audio_cols});
      std::copy_n(features.data.begin() + i * a.numel(), a.numel(), a.data.begin());
      Tensor f = forward_t(id_b, a, prev);
      std::copy(f.data.begin(), f.data.end(), out.data.begin() + i * f.numel());
      prev = f;
    }
    return out;
  }

 private:
  void check_input(const Tensor& t, const char* name) const {
    if (t.rank() != 4 || t.shape[1] != cfg.channels || t.shape[2] != cfg.height ||
        t.shape[3] != cfg.width)
      throw std::invalid_argument(std::string(name) + ": expected [N," +
                                  std::to_string(cfg.channels) + "," +
                                  std::to_string(cfg.height) + "," +
                                  std::to_string(cfg.width) + "], got " + shape_str(t.shape));
  }
};

struct Discriminator {
  ModelConfig cfg;
  std::size_t feat = 64;
  nn::Params params;

  Discriminator() = default;
  Discriminator(ModelConfig c, std::mt19937_64& rng) : cfg(c) {
    cfg.validate();
    std::size_t w = cfg.base_width;
    detail::init_conv_encoder(params, "img", cfg.channels, w, rng);
    std::size_t flat = 4 * w * cfg.bottleneck_h() * cfg.bottleneck_w();
    params.t["img.fc.w"] = nn::init_weight({flat, feat}, rng);
    params.t["img.fc.b"] = Tensor::zeros({feat});
    params.t["aud.fc.w"] = nn::init_weight({cfg.audio_rows * cfg.audio_cols, feat}, rng);
    params.t["aud.fc.b"] = Tensor::zeros({feat});
    params.t["cls.l1.w"] = nn::init_weight({2 * feat, feat}, rng);
    params.t["cls.l1.b"] = Tensor::zeros({feat});
    params.t["cls.l2.w"] = nn::init_weight({feat, 1}, rng);
    params.t["cls.l2.b"] = Tensor::zeros({1});
  }

  // -> matched-pair probability [N], strictly inside (0,1)
  ag::Var forward(const nn::VarParams& vp, const ag::Var& frame, const ag::Var& audio) const {
    using namespace ag;
    std::size_t N = frame->value.shape[0];
    auto im = detail::conv_encoder(vp, "img", frame);
    Var f = reshape(im.s3, {N, im.s3->value.numel() / N});
    f = leaky_relu(dense(f, vp.at("img.fc.w"), vp.at("img.fc.b")));
    Var a = reshape(audio, {N, cfg.audio_rows * cfg.audio_cols});
    a = leaky_relu(dense(a, vp.at("aud.fc.w"), vp.at("aud.fc.b")));
    Var h = concat_dim1({f, a});
    h = leaky_relu(dense(h, vp.at("cls.l1.w"), vp.at("cls.l1.b")));
    h = dense(h, vp.at("cls.l2.w"), vp.at("cls.l2.b"));
    return reshape(sigmoid(h), {N});
  }

  Tensor forward_t(const Tensor& frame, const Tensor& audio) const {
    auto vp = nn::lift(params, false);
    return forward(vp, ag::constant(frame), ag::constant(audio))->value;
  }
};

}  // namespace avc::gen

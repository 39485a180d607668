#pragma once

#include <filesystem>

#include "avc/info_oracle.hpp"
#include "avc/mi_estimators.hpp"
#include "avc/serialize.hpp"

// Fully-controlled paired data: correlated Gaussians for estimator
// validation and audio-driven mouth scenes with exact landmark ground
// truth for the generation pipeline.
namespace avc::data {

inline constexpr std::size_t kAudioRows = 20;
inline constexpr std::size_t kAudioCols = 13;

// n joint pairs (x, y) with y = rho*x + sqrt(1-rho^2)*eps per dimension.
inline mi::PairedBatch sample_correlated_gaussians(const info_oracle::GaussianPairSpec& spec,
                                                   std::size_t n, std::mt19937_64& rng) {
  spec.validate();
  if (n < 2) throw std::invalid_argument("need n >= 2 pairs");
  Tensor x({n, spec.dim}), y({n, spec.dim});
  std::normal_distribution<double> dist(0.0, 1.0);
  double c = std::sqrt(1.0 - spec.rho * spec.rho);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    x[i] = dist(rng);
    y[i] = spec.rho * x[i] + c * dist(rng);
  }
  return mi::make_marginal_batch(x, y, rng);
}

// Normalized identity knobs in [0,1], mapped to pixel geometry at render
// time.
struct IdentityParams {
  double tint_r = 0.5, tint_g = 0.5, tint_b = 0.5;
  double eye_dx = 0.5, eye_y = 0.5;
  double face_ax = 0.5, face_ay = 0.5;
  double mouth_w = 0.5;

  void validate() const {
    for (double v : {tint_r, tint_g, tint_b, eye_dx, eye_y, face_ax, face_ay, mouth_w})
      if (!(v >= 0.0 && v <= 1.0))
        throw std::out_of_range("identity parameter outside [0,1]");
  }

  Tensor to_tensor() const {
    return Tensor({8}, {tint_r, tint_g, tint_b, eye_dx, eye_y, face_ax, face_ay, mouth_w});
  }
  static IdentityParams from_tensor(const Tensor& t) {
    IdentityParams p;
    p.tint_r = t[0]; p.tint_g = t[1]; p.tint_b = t[2];
    p.eye_dx = t[3]; p.eye_y = t[4];
    p.face_ax = t[5]; p.face_ay = t[6]; p.mouth_w = t[7];
    return p;
  }

  static IdentityParams random(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    IdentityParams p;
    p.tint_r = u(rng); p.tint_g = u(rng); p.tint_b = u(rng);
    p.eye_dx = u(rng); p.eye_y = u(rng);
    p.face_ax = u(rng); p.face_ay = u(rng); p.mouth_w = u(rng);
    return p;
  }
};

struct RenderGeometry {
  double mouth_cx, mouth_cy;  // pixels
  double mouth_rx;            // horizontal half-width
  double max_half_gap;        // vertical half-axis at mouth_open = 1
};

inline RenderGeometry render_geometry(const IdentityParams& id, std::size_t H, std::size_t W) {
  RenderGeometry g;
  g.mouth_cx = 0.5 * double(W);
  g.mouth_cy = std::floor(0.72 * double(H)) + 0.5;  // pixel-center aligned
  g.mouth_rx = (0.10 + 0.08 * id.mouth_w) * double(W);
  g.max_half_gap = 6.0 * double(H) / 64.0;  // 12 px full gap at 64x64
  return g;
}

// Mouth bounding box dilated by `pad` px, clipped to the image.
inline std::array<std::size_t, 4> mouth_region(const IdentityParams& id, std::size_t H,
                                               std::size_t W, std::size_t pad = 4) {
  auto g = render_geometry(id, H, W);
  auto clampi = [](double v, double lo, double hi) { return std::min(std::max(v, lo), hi); };
  std::size_t x0 = std::size_t(clampi(std::floor(g.mouth_cx - g.mouth_rx - double(pad)), 0, double(W - 1)));
  std::size_t x1 = std::size_t(clampi(std::ceil(g.mouth_cx + g.mouth_rx + double(pad)), 1, double(W)));
  std::size_t y0 = std::size_t(clampi(std::floor(g.mouth_cy - g.max_half_gap - double(pad)), 0, double(H - 1)));
  std::size_t y1 = std::size_t(clampi(std::ceil(g.mouth_cy + g.max_half_gap + double(pad)), 1, double(H)));
  return {x0, y0, x1, y1};
}

// Landmark order: left corner, right corner, top midpoint, bottom midpoint.
// Coordinates are exact (x, y) pixel positions of the drawn mouth ellipse.
inline Tensor mouth_landmarks(const IdentityParams& id, double mouth_open, std::size_t H,
                              std::size_t W) {
  auto g = render_geometry(id, H, W);
  double ry = mouth_open * g.max_half_gap;
  Tensor lm({4, 2});
  lm.at2(0, 0) = g.mouth_cx - g.mouth_rx; lm.at2(0, 1) = g.mouth_cy;
  lm.at2(1, 0) = g.mouth_cx + g.mouth_rx; lm.at2(1, 1) = g.mouth_cy;
  lm.at2(2, 0) = g.mouth_cx; lm.at2(2, 1) = g.mouth_cy - ry;
  lm.at2(3, 0) = g.mouth_cx; lm.at2(3, 1) = g.mouth_cy + ry;
  return lm;
}

// Flat-shaded face: tinted ellipse on a light background, two dark eyes,
// and a dark mouth ellipse whose vertical radius tracks mouth_open. The
// mouth keeps a thin minimum thickness so a closed mouth is still a
// visible line. Returns the image [3,H,W] and exact landmarks [4,2].
inline std::pair<Tensor, Tensor> render_scene_frame(const IdentityParams& id, double mouth_open,
                                                    std::size_t H = 64, std::size_t W = 64) {
  id.validate();
  if (!(mouth_open >= 0.0 && mouth_open <= 1.0))
    throw std::out_of_range("mouth_open outside [0,1]");
  auto g = render_geometry(id, H, W);
  double tint[3] = {0.45 + 0.45 * id.tint_r, 0.45 + 0.45 * id.tint_g,
                    0.45 + 0.45 * id.tint_b};
  double face_cx = 0.5 * double(W), face_cy = 0.5 * double(H);
  double face_rx = (0.36 + 0.09 * id.face_ax) * double(W);
  double face_ry = (0.40 + 0.08 * id.face_ay) * double(H);
  double eye_dx = (0.12 + 0.08 * id.eye_dx) * double(W);
  double eye_y = (0.36 + 0.06 * id.eye_y) * double(H);
  double eye_r = 0.04 * double(W);
  double ry = mouth_open * g.max_half_gap;
  double ry_draw = std::max(ry, 0.6);  // minimum lip-line half-thickness

  Tensor img({3, H, W});
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      double px = double(x) + 0.5, py = double(y) + 0.5;
      double r = 0.85, gg = 0.85, b = 0.85;  // background
      double fx = (px - face_cx) / face_rx, fy = (py - face_cy) / face_ry;
      if (fx * fx + fy * fy <= 1.0) {
        r = tint[0]; gg = tint[1]; b = tint[2];
        double exl = (px - (face_cx - eye_dx)) / eye_r, eyl = (py - eye_y) / eye_r;
        double exr = (px - (face_cx + eye_dx)) / eye_r;
        if (exl * exl + eyl * eyl <= 1.0 || exr * exr + eyl * eyl <= 1.0) {
          r = gg = b = 0.08;
        }
        double mx = (px - g.mouth_cx) / g.mouth_rx;
        double my = (py - g.mouth_cy) / ry_draw;
        if (mx * mx + my * my <= 1.0) {
          r = gg = b = 0.05;
        }
      }
      img.at3(0, y, x) = r;
      img.at3(1, y, x) = gg;
      img.at3(2, y, x) = b;
    }
  io::quantize_f32(img);
  Tensor lm = mouth_landmarks(id, mouth_open, H, W);
  io::quantize_f32(lm);
  return {std::move(img), std::move(lm)};
}

// One identity with its rendered frames and aligned audio.
struct SceneSequence {
  Tensor identity;    // [8]
  Tensor frames;      // [n,3,H,W]
  Tensor mouth_open;  // [n]
  Tensor landmarks;   // [n,4,2]
  Tensor driver;      // [n], audio driver in [0,1]
  Tensor features;    // [n,20,13]

  std::size_t length() const { return frames.shape[0]; }
  IdentityParams identity_params() const { return IdentityParams::from_tensor(identity); }
};

struct DatasetConfig {
  std::size_t num_identities = 10;
  std::size_t frames_per_sequence = 32;
  std::size_t height = 64, width = 64;
  double audio_noise = 0.1;  // driver = mouth_open + noise
  std::uint64_t seed = 1234;

  void validate() const {
    if (num_identities < 1 || frames_per_sequence < 1 || height < 16 || width < 16)
      throw std::invalid_argument("invalid dataset config");
    if (audio_noise < 0.0) throw std::invalid_argument("audio_noise must be >= 0");
  }
};

struct DatasetManifest {
  std::uint32_t version = io::kFormatVersion;
  std::uint64_t seed = 0;
  std::size_t num_sequences = 0, frames_per_sequence = 0;
  std::size_t height = 0, width = 0;
  std::vector<std::uint64_t> sequence_checksums;
};

struct Dataset {
  DatasetConfig config;
  std::vector<SceneSequence> sequences;
};

// Smooth trajectory in [0,1]: white noise low-passed with a 5-tap box
// kernel, then min-max rescaled.
inline Tensor smooth_trajectory(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> raw(n);
  for (double& v : raw) v = dist(rng);
  Tensor out({n});
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    int cnt = 0;
    for (int k = -2; k <= 2; ++k) {
      long j = long(i) + k;
      if (j >= 0 && j < long(n)) { s += raw[j]; ++cnt; }
    }
    out[i] = s / double(cnt);
  }
  double lo = *std::min_element(out.data.begin(), out.data.end());
  double hi = *std::max_element(out.data.begin(), out.data.end());
  double span = hi - lo;
  for (double& v : out.data) v = span > 0 ? (v - lo) / span : 0.5;
  return out;
}

// Windowed deterministic expansion of the scalar driver into a 20x13
// feature grid, mirroring an MFCC input shape.
inline Tensor audio_features_from_driver(const Tensor& driver) {
  std::size_t n = driver.shape[0];
  Tensor feat({n, kAudioRows, kAudioCols});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t t = 0; t < kAudioRows; ++t) {
      long j = long(i) + long(t) - long(kAudioRows / 2);
      j = std::clamp(j, 0l, long(n) - 1);
      double d = driver[j];
      for (std::size_t c = 0; c < kAudioCols; ++c)
        feat.data[(i * kAudioRows + t) * kAudioCols + c] =
            std::cos(double(c + 1) * 3.14159265358979323846 * d + 0.37 * double(c));
    }
  return feat;
}

// Per identity: a smooth mouth trajectory drives both the rendered video
// and the audio, so the audio-visual pairing carries genuine dependence.
inline Dataset generate_sequence_dataset(const DatasetConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  Dataset ds;
  ds.config = cfg;
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t s = 0; s < cfg.num_identities; ++s) {
    SceneSequence seq;
    IdentityParams id = IdentityParams::random(rng);
    seq.identity = id.to_tensor();
    std::size_t n = cfg.frames_per_sequence;
    seq.mouth_open = smooth_trajectory(n, rng);
    seq.driver = Tensor({n});
    for (std::size_t i = 0; i < n; ++i)
      seq.driver[i] =
          std::clamp(seq.mouth_open[i] + cfg.audio_noise * noise(rng), 0.0, 1.0);
    seq.frames = Tensor({n, 3, cfg.height, cfg.width});
    seq.landmarks = Tensor({n, 4, 2});
    for (std::size_t i = 0; i < n; ++i) {
      auto [img, lm] = render_scene_frame(id, seq.mouth_open[i], cfg.height, cfg.width);
      std::copy(img.data.begin(), img.data.end(),
                seq.frames.data.begin() + i * img.numel());
      std::copy(lm.data.begin(), lm.data.end(),
                seq.landmarks.data.begin() + i * lm.numel());
    }
    seq.features = audio_features_from_driver(seq.driver);
    io::quantize_f32(seq.identity);
    io::quantize_f32(seq.mouth_open);
    io::quantize_f32(seq.driver);
    io::quantize_f32(seq.features);
    ds.sequences.push_back(std::move(seq));
  }
  return ds;
}

// Neutral (closed-mouth) face used as the generator's identity input.
inline Tensor identity_frame(const SceneSequence& seq, std::size_t H, std::size_t W) {
  return render_scene_frame(seq.identity_params(), 0.0, H, W).first;
}

inline std::string sequence_filename(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "seq_%04zu.bin", i);
  return buf;
}

inline void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  io::KVFile mf;
  mf.set_u64("version", io::kFormatVersion);
  mf.set_u64("seed", ds.config.seed);
  mf.set_u64("num_sequences", ds.sequences.size());
  mf.set_u64("frames_per_sequence", ds.config.frames_per_sequence);
  mf.set_u64("height", ds.config.height);
  mf.set_u64("width", ds.config.width);
  mf.set_num("audio_noise", ds.config.audio_noise);
  mf.set_u64("audio_rows", kAudioRows);
  mf.set_u64("audio_cols", kAudioCols);
  for (std::size_t i = 0; i < ds.sequences.size(); ++i) {
    const auto& s = ds.sequences[i];
    auto path = dir / sequence_filename(i);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    io::write_tensor(os, s.identity);
    io::write_tensor(os, s.frames);
    io::write_tensor(os, s.mouth_open);
    io::write_tensor(os, s.landmarks);
    io::write_tensor(os, s.driver);
    io::write_tensor(os, s.features);
    os.close();
    mf.set_u64("checksum_" + std::to_string(i), io::file_checksum(path));
  }
  mf.save(dir / "manifest");
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  auto mf = io::KVFile::load(dir / "manifest");
  if (mf.get_u64("version") != io::kFormatVersion)
    throw io::FormatError("unsupported dataset version " + mf.at("version"));
  Dataset ds;
  ds.config.seed = mf.get_u64("seed");
  ds.config.num_identities = mf.get_u64("num_sequences");
  ds.config.frames_per_sequence = mf.get_u64("frames_per_sequence");
  ds.config.height = mf.get_u64("height");
  ds.config.width = mf.get_u64("width");
  ds.config.audio_noise = mf.get_num("audio_noise");
  for (std::size_t i = 0; i < ds.config.num_identities; ++i) {
    auto path = dir / sequence_filename(i);
    if (io::file_checksum(path) != mf.get_u64("checksum_" + std::to_string(i)))
      throw io::CorruptionError("checksum mismatch for " + path.string());
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path.string());
    SceneSequence s;
    s.identity = io::read_tensor(is);
    s.frames = io::read_tensor(is);
    s.mouth_open = io::read_tensor(is);
    s.landmarks = io::read_tensor(is);
    s.driver = io::read_tensor(is);
    s.features = io::read_tensor(is);
    ds.sequences.push_back(std::move(s));
  }
  return ds;
}

// Binned empirical MI between two scalar series; used to check that the
// generated audio really carries mouth information.
inline double binned_mi(const Tensor& a, const Tensor& b, std::size_t bins = 16) {
  std::size_t n = a.shape[0];
  Tensor joint({bins, bins});
  auto bin = [bins](double v) {
    auto k = std::size_t(std::clamp(v, 0.0, 1.0 - 1e-12) * double(bins));
    return std::min(k, bins - 1);
  };
  for (std::size_t i = 0; i < n; ++i)
    joint.at2(bin(a[i]), bin(b[i])) += 1.0 / double(n);
  return info_oracle::mutual_information_discrete(info_oracle::DiscreteJoint(joint));
}

}  // namespace avc::data

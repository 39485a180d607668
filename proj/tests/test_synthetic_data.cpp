#include <catch_amalgamated.hpp>

#include <fstream>

#include "avc/synthetic_data.hpp"

using namespace avc;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  auto p = fs::temp_directory_path() / ("avc_test_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

double empirical_corr(const Tensor& x, const Tensor& y) {
  std::size_t n = x.numel();
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) { mx += x[i]; my += y[i]; }
  mx /= double(n); my /= double(n);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace

TEST_CASE("correlated gaussian sampler matches its spec empirically") {
  std::mt19937_64 rng(21);
  auto b = data::sample_correlated_gaussians({0.9, 1}, 20000, rng);
  CHECK(empirical_corr(b.joint_frames, b.joint_audios) == Approx(0.9).margin(0.02));
  // marginal pairing destroys the correlation
  CHECK(empirical_corr(b.marginal_frames, b.marginal_audios) == Approx(0.0).margin(0.03));
  // standard normal marginals
  double m = 0, v = 0;
  for (double x : b.joint_audios.data) m += x;
  m /= double(b.joint_audios.numel());
  for (double x : b.joint_audios.data) v += (x - m) * (x - m);
  v /= double(b.joint_audios.numel());
  CHECK(m == Approx(0.0).margin(0.03));
  CHECK(v == Approx(1.0).margin(0.05));
}

TEST_CASE("renderer is deterministic and f32 clean") {
  data::IdentityParams id;  // defaults are mid-range
  auto [a, alm] = data::render_scene_frame(id, 0.5, 64, 64);
  auto [b, blm] = data::render_scene_frame(id, 0.5, 64, 64);
  CHECK(tensor_checksum(a) == tensor_checksum(b));
  CHECK(tensor_checksum(alm) == tensor_checksum(blm));
  for (double v : a.data) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    CHECK(v == double(float(v)));
  }
  CHECK_THROWS_AS(data::render_scene_frame(id, 1.5), std::out_of_range);
  data::IdentityParams bad;
  bad.tint_r = 2.0;
  CHECK_THROWS_AS(data::render_scene_frame(bad, 0.5), std::out_of_range);
}

TEST_CASE("mouth landmarks track mouth_open exactly") {
  data::IdentityParams id;
  auto g = data::render_geometry(id, 64, 64);
  auto closed = data::mouth_landmarks(id, 0.0, 64, 64);
  CHECK(closed.at2(2, 1) == Approx(closed.at2(3, 1)));  // top meets bottom
  auto open = data::mouth_landmarks(id, 1.0, 64, 64);
  CHECK(open.at2(3, 1) - open.at2(2, 1) == Approx(2.0 * g.max_half_gap));
  CHECK(2.0 * g.max_half_gap == Approx(12.0));  // full gap at 64x64
  CHECK(open.at2(1, 0) - open.at2(0, 0) == Approx(2.0 * g.mouth_rx));
  // half-open sits halfway
  auto half = data::mouth_landmarks(id, 0.5, 64, 64);
  CHECK(half.at2(3, 1) - half.at2(2, 1) == Approx(g.max_half_gap));
}

TEST_CASE("open mouth darkens the mouth region, closed mouth keeps a line") {
  data::IdentityParams id;
  auto [open_img, l1] = data::render_scene_frame(id, 1.0, 64, 64);
  auto [closed_img, l2] = data::render_scene_frame(id, 0.0, 64, 64);
  auto count_dark = [](const Tensor& img) {
    std::size_t n = 0;
    for (std::size_t y = 0; y < img.shape[1]; ++y)
      for (std::size_t x = 0; x < img.shape[2]; ++x)
        if (img.at3(0, y, x) < 0.06) ++n;
    return n;
  };
  std::size_t open_dark = count_dark(open_img), closed_dark = count_dark(closed_img);
  CHECK(open_dark > closed_dark);
  CHECK(closed_dark > 0);  // the lip line never vanishes
}

TEST_CASE("smooth trajectory stays in range and actually varies") {
  std::mt19937_64 rng(5);
  auto t = data::smooth_trajectory(64, rng);
  double lo = 1e9, hi = -1e9;
  for (double v : t.data) { lo = std::min(lo, v); hi = std::max(hi, v); }
  CHECK(lo == Approx(0.0).margin(1e-12));
  CHECK(hi == Approx(1.0).margin(1e-12));
}

TEST_CASE("audio features depend on the driver only through its values") {
  Tensor d({8}, {0.1, 0.9, 0.3, 0.7, 0.2, 0.8, 0.4, 0.6});
  auto f1 = data::audio_features_from_driver(d);
  auto f2 = data::audio_features_from_driver(d);
  CHECK(f1.shape == Shape{8, data::kAudioRows, data::kAudioCols});
  CHECK(tensor_checksum(f1) == tensor_checksum(f2));
  Tensor d2 = d;
  d2[3] = 0.05;
  auto f3 = data::audio_features_from_driver(d2);
  CHECK(tensor_checksum(f3) != tensor_checksum(f1));
}

TEST_CASE("dataset generation is seed deterministic") {
  data::DatasetConfig cfg;
  cfg.num_identities = 2;
  cfg.frames_per_sequence = 6;
  cfg.height = cfg.width = 32;
  cfg.seed = 99;
  auto a = data::generate_sequence_dataset(cfg);
  auto b = data::generate_sequence_dataset(cfg);
  REQUIRE(a.sequences.size() == 2);
  for (std::size_t i = 0; i < a.sequences.size(); ++i) {
    CHECK(tensor_checksum(a.sequences[i].frames) == tensor_checksum(b.sequences[i].frames));
    CHECK(tensor_checksum(a.sequences[i].features) ==
          tensor_checksum(b.sequences[i].features));
    CHECK(tensor_checksum(a.sequences[i].landmarks) ==
          tensor_checksum(b.sequences[i].landmarks));
  }
  cfg.seed = 100;
  auto c = data::generate_sequence_dataset(cfg);
  CHECK(tensor_checksum(c.sequences[0].frames) != tensor_checksum(a.sequences[0].frames));
}

TEST_CASE("dataset save/load round trip is bitwise exact") {
  data::DatasetConfig cfg;
  cfg.num_identities = 3;
  cfg.frames_per_sequence = 5;
  cfg.height = cfg.width = 32;
  cfg.seed = 7;
  auto ds = data::generate_sequence_dataset(cfg);
  auto dir = temp_dir("roundtrip");
  data::save_dataset(ds, dir);
  auto back = data::load_dataset(dir);
  REQUIRE(back.sequences.size() == ds.sequences.size());
  CHECK(back.config.height == 32);
  CHECK(back.config.seed == 7);
  for (std::size_t i = 0; i < ds.sequences.size(); ++i) {
    const auto& x = ds.sequences[i];
    const auto& y = back.sequences[i];
    CHECK(x.identity.data == y.identity.data);
    CHECK(x.frames.data == y.frames.data);
    CHECK(x.mouth_open.data == y.mouth_open.data);
    CHECK(x.landmarks.data == y.landmarks.data);
    CHECK(x.driver.data == y.driver.data);
    CHECK(x.features.data == y.features.data);
  }
  // saving again writes identical bytes
  auto dir2 = temp_dir("roundtrip2");
  data::save_dataset(back, dir2);
  for (std::size_t i = 0; i < ds.sequences.size(); ++i)
    CHECK(io::file_checksum(dir / data::sequence_filename(i)) ==
          io::file_checksum(dir2 / data::sequence_filename(i)));
  fs::remove_all(dir);
  fs::remove_all(dir2);
}

TEST_CASE("corrupted payload and foreign version are rejected") {
  data::DatasetConfig cfg;
  cfg.num_identities = 1;
  cfg.frames_per_sequence = 4;
  cfg.height = cfg.width = 32;
  auto ds = data::generate_sequence_dataset(cfg);
  auto dir = temp_dir("corrupt");
  data::save_dataset(ds, dir);

  SECTION("flipped byte fails the checksum") {
    auto p = dir / data::sequence_filename(0);
    std::fstream f(p, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(100);
    char c;
    f.seekg(100);
    f.read(&c, 1);
    c = char(c ^ 0x5a);
    f.seekp(100);
    f.write(&c, 1);
    f.close();
    CHECK_THROWS_AS(data::load_dataset(dir), io::CorruptionError);
  }

  SECTION("truncated file fails the checksum") {
    auto p = dir / data::sequence_filename(0);
    fs::resize_file(p, fs::file_size(p) / 2);
    CHECK_THROWS_AS(data::load_dataset(dir), io::CorruptionError);
  }

  SECTION("truncated record without a manifest raises a corruption error") {
    auto p = dir / data::sequence_filename(0);
    fs::resize_file(p, 20);
    std::ifstream is(p, std::ios::binary);
    CHECK_THROWS_AS(
        (io::read_tensor(is), io::read_tensor(is)), io::CorruptionError);
  }

  SECTION("foreign manifest version is a format error") {
    auto mf = io::KVFile::load(dir / "manifest");
    mf.set_u64("version", 42);
    mf.save(dir / "manifest");
    CHECK_THROWS_AS(data::load_dataset(dir), io::FormatError);
  }
  fs::remove_all(dir);
}

TEST_CASE("driver carries mouth information that decays with noise") {
  std::vector<double> noise_levels = {0.0, 0.15, 0.5};
  std::vector<double> mis;
  for (double nl : noise_levels) {
    data::DatasetConfig cfg;
    cfg.num_identities = 6;
    cfg.frames_per_sequence = 256;
    cfg.height = cfg.width = 32;
    cfg.audio_noise = nl;
    cfg.seed = 31;
    auto ds = data::generate_sequence_dataset(cfg);
    Tensor mo({cfg.num_identities * cfg.frames_per_sequence});
    Tensor dr(mo.shape);
    std::size_t k = 0;
    for (const auto& s : ds.sequences)
      for (std::size_t i = 0; i < s.length(); ++i, ++k) {
        mo[k] = s.mouth_open[i];
        dr[k] = s.driver[i];
      }
    mis.push_back(data::binned_mi(mo, dr, 8));
  }
  CHECK(mis[0] > mis[1]);
  CHECK(mis[1] > mis[2]);
  CHECK(mis[2] > 0.0);  // binning noise keeps it positive but the order holds
}

TEST_CASE("identity frame is the closed-mouth render") {
  data::DatasetConfig cfg;
  cfg.num_identities = 1;
  cfg.frames_per_sequence = 2;
  cfg.height = cfg.width = 32;
  auto ds = data::generate_sequence_dataset(cfg);
  auto idf = data::identity_frame(ds.sequences[0], 32, 32);
  auto direct = data::render_scene_frame(ds.sequences[0].identity_params(), 0.0, 32, 32).first;
  CHECK(idf.data == direct.data);
}

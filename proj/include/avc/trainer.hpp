#pragma once

#include "avc/generation_model.hpp"
#include "avc/losses.hpp"
#include "avc/metrics.hpp"
#include "avc/plot.hpp"
#include "avc/synthetic_data.hpp"

// The alternating training loop (discriminator / estimator / generator),
// ablation toggles, checkpointing, evaluation, and plot emission.
namespace avc::train {

namespace fs = std::filesystem;

// Table-3-style toggle matrix. DV+symmetric is plain MINE; JS+asymmetric
// is AMIE; DA is orthogonal.
struct AblationMode {
  bool mi_enabled = true;
  mi::Representation mi_representation = mi::Representation::JS;
  bool asymmetric = true;
  bool da_enabled = true;

  std::string name() const {
    if (!mi_enabled) return da_enabled ? "baseline_da" : "baseline";
    std::string n = "mine";
    if (mi_representation == mi::Representation::JS) n += "_js";
    if (asymmetric) n += "_asy";
    if (n == "mine_js_asy") n = "amie";
    if (da_enabled) n += "_da";
    return n;
  }

  static AblationMode named(const std::string& n) {
    AblationMode m;
    if (n == "baseline") { m.mi_enabled = false; m.da_enabled = false; return m; }
    if (n == "baseline_da") { m.mi_enabled = false; m.da_enabled = true; return m; }
    auto base = [&](mi::Representation r, bool asy, bool da) {
      m.mi_enabled = true; m.mi_representation = r; m.asymmetric = asy; m.da_enabled = da;
      return m;
    };
    if (n == "mine") return base(mi::Representation::DV, false, false);
    if (n == "mine_da") return base(mi::Representation::DV, false, true);
    if (n == "mine_js") return base(mi::Representation::JS, false, false);
    if (n == "mine_js_da") return base(mi::Representation::JS, false, true);
    if (n == "mine_asy_da") return base(mi::Representation::DV, true, true);
    if (n == "amie") return base(mi::Representation::JS, true, false);
    if (n == "amie_da") return base(mi::Representation::JS, true, true);
    throw std::invalid_argument("unknown ablation mode: " + n);
  }

  static std::vector<std::string> grid() {
    return {"baseline", "mine", "baseline_da", "mine_da", "mine_js",
            "mine_js_da", "mine_asy_da", "amie", "amie_da"};
  }
};

struct TrainingConfig {
  std::uint64_t seed = 7;
  std::size_t image_size = 32;
  std::size_t base_width = 8;
  std::size_t stats_width = 8;
  std::size_t batch_size = 8;
  std::size_t epochs = 10;
  std::size_t steps_per_epoch = 25;
  double lr_generator = 2e-4;
  double lr_discriminator = 2e-4;
  double lr_estimator = 1e-4;
  loss::LossWeights weights;
  attn::AttentionSchedule schedule;
  AblationMode mode;
  std::size_t checkpoint_every = 5;  // epochs
  std::size_t holdout_identities = 2;
  std::uint64_t extractor_seed = 99;
  double teacher_forcing_prob = 0.5;
  std::string dataset_path;
  std::string output_dir;

  void validate() const {
    if (lr_generator <= 0 || lr_discriminator <= 0 || lr_estimator <= 0)
      throw std::invalid_argument("learning rates must be > 0");
    if (epochs < 1 || steps_per_epoch < 1) throw std::invalid_argument("epochs/steps must be >= 1");
    if (batch_size < 2) throw std::invalid_argument("batch_size must be >= 2");
    if (image_size % 8 != 0) throw std::invalid_argument("image_size must be divisible by 8");
    weights.validate();
    attn::AttentionSchedule s = schedule;
    s.total_epochs = std::max(s.total_epochs, epochs);
    s.validate();
  }

  // Schedule stretched to this run's epoch count; the fix-to-one phase
  // covers the final stretch of training.
  attn::AttentionSchedule resolved_schedule() const {
    attn::AttentionSchedule s = schedule;
    if (s.total_epochs != epochs) {
      double scale = double(epochs) / double(s.total_epochs);
      s.decay_start_epoch = std::size_t(double(s.decay_start_epoch) * scale);
      s.decay_end_epoch = std::max(s.decay_start_epoch + 1, std::size_t(double(s.decay_end_epoch) * scale));
      s.fix_to_one_epoch = std::clamp(std::size_t(double(s.fix_to_one_epoch) * scale),
                                      s.decay_end_epoch, epochs);
      s.total_epochs = epochs;
    }
    return s;
  }

  io::KVFile to_kv() const {
    io::KVFile f;
    f.set_u64("seed", seed);
    f.set_u64("image_size", image_size);
    f.set_u64("base_width", base_width);
    f.set_u64("stats_width", stats_width);
    f.set_u64("batch_size", batch_size);
    f.set_u64("epochs", epochs);
    f.set_u64("steps_per_epoch", steps_per_epoch);
    f.set_num("lr_generator", lr_generator);
    f.set_num("lr_discriminator", lr_discriminator);
    f.set_num("lr_estimator", lr_estimator);
    f.set_num("lambda_perc", weights.lambda_perc);
    f.set_num("lambda_lip", weights.lambda_lip);
    f.set_num("lambda_mi", weights.lambda_mi);
    f.set_num("attn_start_rate", schedule.start_rate);
    f.set_num("attn_end_rate", schedule.end_rate);
    f.set_u64("attn_decay_start", schedule.decay_start_epoch);
    f.set_u64("attn_decay_end", schedule.decay_end_epoch);
    f.set_u64("attn_fix_to_one", schedule.fix_to_one_epoch);
    f.set_u64("attn_total_epochs", schedule.total_epochs);
    f.set("mode", mode.name());
    f.set_u64("checkpoint_every", checkpoint_every);
    f.set_u64("holdout_identities", holdout_identities);
    f.set_u64("extractor_seed", extractor_seed);
    f.set_num("teacher_forcing_prob", teacher_forcing_prob);
    f.set("dataset_path", dataset_path);
    f.set("output_dir", output_dir);
    return f;
  }

  static TrainingConfig from_kv(const io::KVFile& f) {
    TrainingConfig c;
    auto u = [&](const char* k, std::size_t& dst) { if (f.has(k)) dst = std::size_t(f.get_u64(k)); };
    auto d = [&](const char* k, double& dst) { if (f.has(k)) dst = f.get_num(k); };
    if (f.has("seed")) c.seed = f.get_u64("seed");
    u("image_size", c.image_size);
    u("base_width", c.base_width);
    u("stats_width", c.stats_width);
    u("batch_size", c.batch_size);
    u("epochs", c.epochs);
    u("steps_per_epoch", c.steps_per_epoch);
    d("lr_generator", c.lr_generator);
    d("lr_discriminator", c.lr_discriminator);
    d("lr_estimator", c.lr_estimator);
    d("lambda_perc", c.weights.lambda_perc);
    d("lambda_lip", c.weights.lambda_lip);
    d("lambda_mi", c.weights.lambda_mi);
    d("attn_start_rate", c.schedule.start_rate);
    d("attn_end_rate", c.schedule.end_rate);
    u("attn_decay_start", c.schedule.decay_start_epoch);
    u("attn_decay_end", c.schedule.decay_end_epoch);
    u("attn_fix_to_one", c.schedule.fix_to_one_epoch);
    u("attn_total_epochs", c.schedule.total_epochs);
    if (f.has("mode")) c.mode = AblationMode::named(f.at("mode"));
    u("checkpoint_every", c.checkpoint_every);
    u("holdout_identities", c.holdout_identities);
    if (f.has("extractor_seed")) c.extractor_seed = f.get_u64("extractor_seed");
    d("teacher_forcing_prob", c.teacher_forcing_prob);
    c.dataset_path = f.get("dataset_path", "");
    c.output_dir = f.get("output_dir", "");
    return c;
  }
};

// Fixed-size mouth window shared across identities for batch losses and
// the attention mask; covers the widest mouth the renderer draws.
inline attn::Region default_mouth_region(std::size_t H, std::size_t W, std::size_t pad = 4) {
  double cx = 0.5 * double(W), cy = 0.72 * double(H);
  double rx = 0.18 * double(W), ry = 6.0 * double(H) / 64.0;
  attn::Region r;
  r.x0 = std::size_t(std::max(0.0, std::floor(cx - rx) - double(pad)));
  r.x1 = std::min(W, std::size_t(std::ceil(cx + rx) + pad));
  r.y0 = std::size_t(std::max(0.0, std::floor(cy - ry) - double(pad)));
  r.y1 = std::min(H, std::size_t(std::ceil(cy + ry) + pad));
  return r;
}

struct Models {
  gen::Generator generator;
  gen::Discriminator discriminator;
  mi::StatisticsNetwork estimator;
  attn::MaskPredictor mask_predictor;
  loss::FeatureExtractor extractor;
};

inline Models build_models(const TrainingConfig& cfg) {
  cfg.validate();
  gen::ModelConfig mc;
  mc.height = mc.width = cfg.image_size;
  mc.base_width = cfg.base_width;
  std::mt19937_64 rng(cfg.seed);
  Models m;
  m.generator = gen::Generator(mc, rng);
  m.discriminator = gen::Discriminator(mc, rng);
  m.estimator = mi::StatisticsNetwork({3, cfg.image_size, cfg.image_size},
                                      {data::kAudioRows, data::kAudioCols}, rng,
                                      cfg.stats_width);
  m.mask_predictor = attn::MaskPredictor(3, rng);
  m.extractor = loss::FeatureExtractor(3, cfg.extractor_seed);
  return m;
}

// ---- checkpointing ----

namespace detail {
inline void write_params(std::ostream& os, const nn::Params& p) {
  io::detail::put_u32(os, std::uint32_t(p.t.size()));
  for (const auto& [name, t] : p.t) {
    io::detail::put_u32(os, std::uint32_t(name.size()));
    os.write(name.data(), long(name.size()));
    io::write_tensor(os, t);
  }
}
inline nn::Params read_params(std::istream& is) {
  nn::Params p;
  std::uint32_t n = io::detail::get_u32(is);
  for (std::uint32_t i = 0; i < n; ++i) {
    std::uint32_t len = io::detail::get_u32(is);
    std::string name(len, '\0');
    is.read(name.data(), len);
    if (!is) throw io::CorruptionError("truncated checkpoint");
    p.t[name] = io::read_tensor(is);
  }
  return p;
}
}  // namespace detail

// Saving rounds the live parameters through float32 first so that a
// save/load round trip is bitwise exact and a resumed run continues from
// exactly the state the original run kept after saving.
inline void save_checkpoint(Models& m, const fs::path& dir) {
  fs::create_directories(dir);
  io::KVFile mf;
  mf.set_u64("version", io::kFormatVersion);
  auto save_one = [&](const char* name, nn::Params& p) {
    for (auto& [k, t] : p.t) io::quantize_f32(t);
    auto path = dir / (std::string(name) + ".bin");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    detail::write_params(os, p);
    os.close();
    mf.set_u64(std::string("checksum_") + name, io::file_checksum(path));
  };
  save_one("generator", m.generator.params);
  save_one("discriminator", m.discriminator.params);
  save_one("estimator", m.estimator.params);
  save_one("mask_predictor", m.mask_predictor.params);
  mf.save(dir / "manifest");
}

inline void load_checkpoint(Models& m, const fs::path& dir) {
  auto mf = io::KVFile::load(dir / "manifest");
  if (mf.get_u64("version") != io::kFormatVersion)
    throw io::FormatError("unsupported checkpoint version");
  auto load_one = [&](const char* name, nn::Params& p) {
    auto path = dir / (std::string(name) + ".bin");
    if (io::file_checksum(path) != mf.get_u64(std::string("checksum_") + name))
      throw io::CorruptionError("checkpoint checksum mismatch: " + path.string());
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path.string());
    p = detail::read_params(is);
  };
  load_one("generator", m.generator.params);
  load_one("discriminator", m.discriminator.params);
  load_one("estimator", m.estimator.params);
  load_one("mask_predictor", m.mask_predictor.params);
}

// ---- training ----

struct StepRecord {
  std::size_t step = 0, epoch = 0;
  double d_loss = 0, g_gan = 0, perc = 0, lip = 0, mi_estimate = 0, total = 0, rate = 1.0;
  bool estimator_updated = false;
  std::uint64_t est_checksum = 0;       // after the whole step
  std::uint64_t est_checksum_pre_g = 0; // after est phase, before G/D consume it
};

struct RunArtifacts {
  fs::path run_dir;
  std::vector<StepRecord> trace;
  metrics::MetricReport report;
};

namespace detail {

struct Batch {
  Tensor identity;  // [N,3,H,W]
  Tensor prev;      // real f_{i-1}
  Tensor frame;     // real f_i
  Tensor audio;     // [N,t,c]
};

inline Batch sample_batch(const data::Dataset& ds, std::size_t train_count, std::size_t N,
                          std::size_t H, std::size_t W, std::mt19937_64& rng) {
  Batch b;
  b.identity = Tensor({N, 3, H, W});
  b.prev = Tensor({N, 3, H, W});
  b.frame = Tensor({N, 3, H, W});
  b.audio = Tensor({N, data::kAudioRows, data::kAudioCols});
  std::uniform_int_distribution<std::size_t> seq_d(0, train_count - 1);
  std::size_t img = 3 * H * W, feat = data::kAudioRows * data::kAudioCols;
  for (std::size_t i = 0; i < N; ++i) {
    const auto& s = ds.sequences[seq_d(rng)];
    std::uniform_int_distribution<std::size_t> fr_d(1, s.length() - 1);
    std::size_t f = fr_d(rng);
    Tensor idf = data::identity_frame(s, H, W);
    std::copy(idf.data.begin(), idf.data.end(), b.identity.data.begin() + i * img);
    std::copy_n(s.frames.data.begin() + (f - 1) * img, img, b.prev.data.begin() + i * img);
    std::copy_n(s.frames.data.begin() + f * img, img, b.frame.data.begin() + i * img);
    std::copy_n(s.features.data.begin() + f * feat, feat, b.audio.data.begin() + i * feat);
  }
  return b;
}

inline void append_log(std::ofstream& log, const StepRecord& r) {
  log << "step=" << r.step << " epoch=" << r.epoch << " d_loss=" << r.d_loss
      << " g_gan=" << r.g_gan << " perc=" << r.perc << " lip=" << r.lip
      << " mi=" << r.mi_estimate << " total=" << r.total << " rate=" << r.rate
      << " est_updated=" << (r.estimator_updated ? 1 : 0) << "\n";
}

}  // namespace detail

// Autoregressive evaluation on held-out identities: PSNR/SSIM against real
// frames, LMD between detected landmarks on generated frames and the
// renderer's ground truth.
inline metrics::MetricReport evaluate(const Models& m, const data::Dataset& ds,
                                      std::size_t holdout) {
  std::size_t H = m.generator.cfg.height, W = m.generator.cfg.width;
  std::size_t total = ds.sequences.size();
  std::size_t start = holdout >= total ? 0 : total - holdout;
  metrics::MetricReport rep;
  for (std::size_t s = start; s < total; ++s) {
    const auto& seq = ds.sequences[s];
    Tensor idf = data::identity_frame(seq, H, W);
    Tensor gen_frames = m.generator.generate_sequence(idf, seq.features);
    std::size_t n = seq.length(), img = 3 * H * W;
    double psnr_acc = 0.0, ssim_acc = 0.0;
    Tensor gen_lm({n, 4, 2});
    auto region = data::mouth_region(seq.identity_params(), H, W);
    attn::Region reg{region[0], region[1], region[2], region[3]};
    for (std::size_t i = 0; i < n; ++i) {
      Tensor rf({3, H, W}), gf({3, H, W});
      std::copy_n(seq.frames.data.begin() + i * img, img, rf.data.begin());
      std::copy_n(gen_frames.data.begin() + i * img, img, gf.data.begin());
      double p = metrics::psnr(rf, gf);
      psnr_acc += std::isfinite(p) ? p : 100.0;  // cap the identical-frame sentinel
      ssim_acc += metrics::ssim(rf, gf);
      Tensor lm;
      try {
        lm = metrics::extract_landmarks(gf, reg);
      } catch (const metrics::DetectionError&) {
        // no detectable mouth: score the worst case, the region diagonal
        lm = Tensor({4, 2});
        for (std::size_t k = 0; k < 4; ++k) {
          lm.at2(k, 0) = double(reg.x0);
          lm.at2(k, 1) = double(reg.y0);
        }
      }
      std::copy(lm.data.begin(), lm.data.end(), gen_lm.data.begin() + i * 8);
    }
    rep.psnr_db.push_back(psnr_acc / double(n));
    rep.ssim_v.push_back(ssim_acc / double(n));
    rep.lmd_px.push_back(metrics::lmd(seq.landmarks, gen_lm));
  }
  rep.finalize();
  return rep;
}

inline void save_report(const metrics::MetricReport& rep, const fs::path& path) {
  io::KVFile f;
  f.set_num("psnr_mean", rep.psnr_mean);
  f.set_num("ssim_mean", rep.ssim_mean);
  f.set_num("lmd_mean", rep.lmd_mean);
  f.set_u64("num_sequences", rep.lmd_px.size());
  for (std::size_t i = 0; i < rep.lmd_px.size(); ++i) {
    f.set_num("psnr_" + std::to_string(i), rep.psnr_db[i]);
    f.set_num("ssim_" + std::to_string(i), rep.ssim_v[i]);
    f.set_num("lmd_" + std::to_string(i), rep.lmd_px[i]);
  }
  f.save(path);
}

inline RunArtifacts train(const TrainingConfig& cfg) {
  cfg.validate();
  data::Dataset ds = data::load_dataset(cfg.dataset_path);
  std::size_t H = cfg.image_size, W = cfg.image_size;
  if (ds.config.height != H || ds.config.width != W)
    throw std::invalid_argument("dataset image size does not match config");
  std::size_t holdout = std::min(cfg.holdout_identities, ds.sequences.size() - 1);
  std::size_t train_count = ds.sequences.size() - holdout;

  Models m = build_models(cfg);
  nn::Adam opt_g, opt_d, opt_t;
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
  std::uniform_real_distribution<double> coin(0.0, 1.0);

  fs::path run_dir = cfg.output_dir.empty() ? fs::path("run") : fs::path(cfg.output_dir);
  fs::create_directories(run_dir);
  cfg.to_kv().save(run_dir / "config");
  std::ofstream log(run_dir / "run.log");
  if (!log) throw std::runtime_error("cannot write run log");

  auto sched = cfg.resolved_schedule();
  auto region = default_mouth_region(H, W);
  RunArtifacts art;
  art.run_dir = run_dir;

  std::size_t global_step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double rate = cfg.mode.da_enabled ? attn::schedule_rate(sched, double(epoch)) : 1.0;
    for (std::size_t step = 0; step < cfg.steps_per_epoch; ++step, ++global_step) {
      auto b = detail::sample_batch(ds, train_count, cfg.batch_size, H, W, rng);
      StepRecord rec;
      rec.step = global_step;
      rec.epoch = epoch;
      rec.rate = rate;
      try {
        // teacher forcing: occasionally condition on the model's own
        // previous-frame prediction instead of the real one
        Tensor prev = b.prev;
        if (coin(rng) >= cfg.teacher_forcing_prob)
          prev = m.generator.forward_t(b.identity, b.audio, b.prev);

        // masked identity input (coarse rate mask at rate 1 is identity)
        Tensor masked_identity = b.identity;
        if (cfg.mode.da_enabled && rate < 1.0) {
          attn::AttentionMask cm = attn::initial_mask(H, W, region, rate);
          for (std::size_t i = 0; i < cfg.batch_size; ++i) {
            Tensor fr({3, H, W});
            std::copy_n(b.identity.data.begin() + i * fr.numel(), fr.numel(), fr.data.begin());
            Tensor mk = attn::apply_mask(fr, cm);
            std::copy(mk.data.begin(), mk.data.end(),
                      masked_identity.data.begin() + i * fr.numel());
          }
        }

        // (1) discriminator on matched real vs generated pairs
        Tensor fake_detached = m.generator.forward_t(masked_identity, b.audio, prev);
        {
          auto vpd = nn::lift(m.discriminator.params, true);
          auto d_real = m.discriminator.forward(vpd, ag::constant(b.frame), ag::constant(b.audio));
          auto d_fake = m.discriminator.forward(vpd, ag::constant(fake_detached), ag::constant(b.audio));
          auto obj = loss::gan_loss_var(d_real, d_fake);
          rec.d_loss = obj->value.data[0];
          auto neg_obj = ag::neg(obj);
          ag::backward(neg_obj);
          opt_d.step(m.discriminator.params, vpd, cfg.lr_discriminator, -1.0);
        }

        // (2) estimator update: asymmetric trains on real pairs, the
        // symmetric ablation trains on generated pairs
        if (cfg.mode.mi_enabled) {
          Tensor est_frames = cfg.mode.asymmetric ? b.frame : fake_detached;
          auto batch = mi::make_marginal_batch(est_frames, b.audio, rng);
          mi::estimator_update_step(m.estimator, batch, cfg.mode.mi_representation,
                                    cfg.lr_estimator, &opt_t);
          rec.estimator_updated = true;
        }
        rec.est_checksum_pre_g = m.estimator.params.checksum();

        // (3) generator (+ mask predictor) on the total objective
        {
          auto vpg = nn::lift(m.generator.params, true);
          auto vpm = nn::lift(m.mask_predictor.params, true);
          ag::Var id_in = ag::constant(masked_identity);
          if (cfg.mode.da_enabled && rate < 1.0) {
            // fine-grained mask predicted from the previous frame
            auto score = m.mask_predictor.score(vpm, ag::constant(prev));
            id_in = attn::apply_predicted_mask_var(ag::constant(b.identity), score, region, rate);
          }
          auto fake = m.generator.forward(vpg, id_in, ag::constant(b.audio), ag::constant(prev));
          auto vpd_frozen = nn::lift(m.discriminator.params, false);
          auto d_fake = m.discriminator.forward(vpd_frozen, fake, ag::constant(b.audio));
          auto g_gan = loss::generator_gan_loss_var(d_fake);
          auto perc = loss::perceptual_loss_var(m.extractor, ag::constant(b.frame), fake);
          auto lip = loss::lip_loss_var(ag::constant(b.frame), fake, region);
          ag::Var mi_term;
          if (cfg.mode.mi_enabled) {
            auto perm = mi::sample_derangement(cfg.batch_size, rng);
            Tensor marg_audio = mi::detail::gather_rows(b.audio, perm);
            auto est = mi::estimate_on_generated_var(m.estimator, fake, ag::constant(b.audio),
                                                     fake, ag::constant(marg_audio),
                                                     cfg.mode.mi_representation);
            rec.mi_estimate = est->value.data[0];
            mi_term = ag::neg(est);  // L_mi = -I(F_hat, A)
          }
          loss::LossWeights w = cfg.weights;
          if (!cfg.mode.mi_enabled) w.lambda_mi = 0.0;
          auto total = loss::total_loss_var(g_gan, perc, lip, mi_term, w);
          rec.g_gan = g_gan->value.data[0];
          rec.perc = perc->value.data[0];
          rec.lip = lip->value.data[0];
          rec.total = total->value.data[0];
          if (!std::isfinite(rec.total)) throw std::runtime_error("non-finite generator loss");
          ag::backward(total);
          opt_g.step(m.generator.params, vpg, cfg.lr_generator, -1.0);
          if (cfg.mode.da_enabled && rate < 1.0)
            opt_g.step(m.mask_predictor.params, vpm, cfg.lr_generator, -1.0);
        }
      } catch (const std::exception& e) {
        save_checkpoint(m, run_dir / "checkpoint_diagnostic");
        log << "abort step=" << global_step << " error=" << e.what() << "\n";
        log.flush();
        throw std::runtime_error(std::string("training aborted: ") + e.what());
      }
      rec.est_checksum = m.estimator.params.checksum();
      detail::append_log(log, rec);
      art.trace.push_back(rec);
    }
    if (cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0)
      save_checkpoint(m, run_dir / ("checkpoint_epoch_" + std::to_string(epoch + 1)));
  }
  save_checkpoint(m, run_dir / "checkpoint_final");
  art.report = evaluate(m, ds, holdout);
  save_report(art.report, run_dir / "report");
  log.flush();
  return art;
}

// Reads run.log back; one StepRecord per line.
inline std::vector<StepRecord> load_run_log(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::vector<StepRecord> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.rfind("step=", 0) != 0) continue;
    StepRecord r;
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) {
      auto eq = tok.find('=');
      if (eq == std::string::npos) continue;
      std::string k = tok.substr(0, eq), v = tok.substr(eq + 1);
      if (k == "step") r.step = std::stoul(v);
      else if (k == "epoch") r.epoch = std::stoul(v);
      else if (k == "d_loss") r.d_loss = std::stod(v);
      else if (k == "g_gan") r.g_gan = std::stod(v);
      else if (k == "perc") r.perc = std::stod(v);
      else if (k == "lip") r.lip = std::stod(v);
      else if (k == "mi") r.mi_estimate = std::stod(v);
      else if (k == "total") r.total = std::stod(v);
      else if (k == "rate") r.rate = std::stod(v);
      else if (k == "est_updated") r.estimator_updated = (v == "1");
    }
    out.push_back(r);
  }
  return out;
}

// Emits (a) PCA scatter of real vs generated frames, (b) loss curves,
// (c) MI-estimate curve, (d) attention-rate curve.
inline void emit_plots(const fs::path& run_dir, const data::Dataset& ds) {
  auto cfg = TrainingConfig::from_kv(io::KVFile::load(run_dir / "config"));
  auto trace = load_run_log(run_dir / "run.log");
  if (trace.empty()) throw std::runtime_error("run log holds no steps");
  Models m = build_models(cfg);
  load_checkpoint(m, run_dir / "checkpoint_final");

  plot::Series total{.color = {30, 60, 200}}, dls{.color = {200, 60, 30}},
      lip{.color = {30, 160, 60}};
  plot::Series miest{.color = {120, 30, 160}}, rate{.color = {220, 140, 20}};
  for (const auto& r : trace) {
    total.y.push_back(r.total);
    dls.y.push_back(r.d_loss);
    lip.y.push_back(r.lip);
    miest.y.push_back(r.mi_estimate);
    rate.y.push_back(r.rate);
  }
  plot::save_curves_ppm({total, dls, lip}, run_dir / "loss_curves.ppm");
  plot::save_curves_ppm({miest}, run_dir / "mi_curve.ppm");
  plot::save_curves_ppm({rate}, run_dir / "attention_rate.ppm");

  std::size_t H = cfg.image_size, W = cfg.image_size, img = 3 * H * W;
  std::vector<Tensor> real, genf;
  for (const auto& seq : ds.sequences) {
    Tensor idf = data::identity_frame(seq, H, W);
    Tensor g = m.generator.generate_sequence(idf, seq.features);
    for (std::size_t i = 0; i < seq.length(); ++i) {
      Tensor rf({3, H, W}), gf({3, H, W});
      std::copy_n(seq.frames.data.begin() + i * img, img, rf.data.begin());
      std::copy_n(g.data.begin() + i * img, img, gf.data.begin());
      real.push_back(std::move(rf));
      genf.push_back(std::move(gf));
    }
    if (real.size() >= 128) break;  // plenty for a scatter
  }
  auto proj = metrics::pca_project_2d(real, genf);
  plot::save_scatter_ppm(proj.real_points, proj.generated_points,
                         run_dir / "pca_scatter.ppm");
}

}  // namespace avc::train

#include <catch_amalgamated.hpp>

#include <fstream>

#include "avc/trainer.hpp"

using namespace avc;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  auto p = fs::temp_directory_path() / ("avc_trainer_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path make_dataset(const fs::path& dir, std::uint64_t seed = 11) {
  data::DatasetConfig dc;
  dc.num_identities = 4;
  dc.frames_per_sequence = 8;
  dc.height = dc.width = 16;
  dc.seed = seed;
  data::save_dataset(data::generate_sequence_dataset(dc), dir);
  return dir;
}

train::TrainingConfig smoke_config(const fs::path& dataset, const fs::path& out) {
  train::TrainingConfig cfg;
  cfg.image_size = 16;
  cfg.base_width = 4;
  cfg.stats_width = 4;
  cfg.batch_size = 2;
  cfg.epochs = 2;
  cfg.steps_per_epoch = 3;
  cfg.holdout_identities = 1;
  cfg.checkpoint_every = 1;
  cfg.dataset_path = dataset.string();
  cfg.output_dir = out.string();
  return cfg;
}

}  // namespace

TEST_CASE("ablation mode names round trip over the full grid") {
  auto grid = train::AblationMode::grid();
  REQUIRE(grid.size() == 9);
  for (const auto& n : grid) {
    auto m = train::AblationMode::named(n);
    CHECK(m.name() == n);
  }
  CHECK_THROWS_AS(train::AblationMode::named("bogus"), std::invalid_argument);
  // toggle semantics spot checks
  auto amie = train::AblationMode::named("amie");
  CHECK(amie.mi_enabled);
  CHECK(amie.asymmetric);
  CHECK(amie.mi_representation == mi::Representation::JS);
  CHECK_FALSE(amie.da_enabled);
  auto mine = train::AblationMode::named("mine");
  CHECK(mine.mi_representation == mi::Representation::DV);
  CHECK_FALSE(mine.asymmetric);
  CHECK_FALSE(train::AblationMode::named("baseline_da").mi_enabled);
  CHECK(train::AblationMode::named("baseline_da").da_enabled);
}

TEST_CASE("training config round trips through key=value form") {
  train::TrainingConfig c;
  c.seed = 123;
  c.image_size = 16;
  c.epochs = 7;
  c.lr_generator = 3e-4;
  c.weights.lambda_lip = 2.5;
  c.mode = train::AblationMode::named("mine_js_da");
  c.dataset_path = "/tmp/ds";
  auto back = train::TrainingConfig::from_kv(c.to_kv());
  CHECK(back.seed == 123);
  CHECK(back.image_size == 16);
  CHECK(back.epochs == 7);
  CHECK(back.lr_generator == Approx(3e-4));
  CHECK(back.weights.lambda_lip == Approx(2.5));
  CHECK(back.mode.name() == "mine_js_da");
  CHECK(back.dataset_path == "/tmp/ds");

  train::TrainingConfig bad;
  bad.batch_size = 1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = train::TrainingConfig{};
  bad.lr_generator = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = train::TrainingConfig{};
  bad.image_size = 20;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("resolved schedule stretches to the run length and still fixes to one") {
  train::TrainingConfig c;
  c.epochs = 10;
  auto s = c.resolved_schedule();
  CHECK(s.total_epochs == 10);
  CHECK(s.fix_to_one_epoch <= 10);
  CHECK(attn::schedule_rate(s, double(s.fix_to_one_epoch)) == 1.0);
  CHECK(attn::schedule_rate(s, 0.0) == c.schedule.start_rate);
}

TEST_CASE("checkpoints round trip bitwise and reject corruption") {
  auto dir = temp_dir("ckpt");
  train::TrainingConfig cfg;
  cfg.image_size = 16;
  cfg.base_width = 4;
  cfg.stats_width = 4;
  auto m = train::build_models(cfg);
  train::save_checkpoint(m, dir);
  // live params were quantized by the save; the file carries them bitwise
  auto m2 = train::build_models(cfg);
  cfg.seed = 8;
  auto m3 = train::build_models(cfg);  // different weights before load
  CHECK(m3.generator.params.checksum() != m.generator.params.checksum());
  train::load_checkpoint(m3, dir);
  CHECK(m3.generator.params.checksum() == m.generator.params.checksum());
  CHECK(m3.discriminator.params.checksum() == m.discriminator.params.checksum());
  CHECK(m3.estimator.params.checksum() == m.estimator.params.checksum());
  CHECK(m3.mask_predictor.params.checksum() == m.mask_predictor.params.checksum());

  SECTION("truncated checkpoint file fails its checksum") {
    fs::resize_file(dir / "generator.bin", fs::file_size(dir / "generator.bin") - 8);
    CHECK_THROWS_AS(train::load_checkpoint(m2, dir), io::CorruptionError);
  }
  SECTION("foreign version is a format error") {
    auto mf = io::KVFile::load(dir / "manifest");
    mf.set_u64("version", 9);
    mf.save(dir / "manifest");
    CHECK_THROWS_AS(train::load_checkpoint(m2, dir), io::FormatError);
  }
  fs::remove_all(dir);
}

TEST_CASE("smoke training run produces the full artifact set") {
  auto ds_dir = make_dataset(temp_dir("smoke_ds"));
  auto out = temp_dir("smoke_run");
  auto cfg = smoke_config(ds_dir, out);
  cfg.mode = train::AblationMode::named("amie_da");

  std::uint64_t ds_before = io::file_checksum(ds_dir / data::sequence_filename(0));
  auto art = train::train(cfg);

  CHECK(art.trace.size() == 6);
  CHECK(fs::exists(out / "run.log"));
  CHECK(fs::exists(out / "config"));
  CHECK(fs::exists(out / "checkpoint_final" / "manifest"));
  CHECK(fs::exists(out / "checkpoint_epoch_1" / "generator.bin"));
  CHECK(fs::exists(out / "report"));
  REQUIRE(art.report.lmd_px.size() == 1);  // one held-out identity
  CHECK(std::isfinite(art.report.psnr_mean));
  CHECK(art.report.ssim_mean <= 1.0);
  CHECK(art.report.lmd_mean >= 0.0);
  for (const auto& r : art.trace) {
    CHECK(std::isfinite(r.total));
    CHECK(r.estimator_updated);
    // the generator step never touches the estimator
    CHECK(r.est_checksum == r.est_checksum_pre_g);
  }
  // training must not mutate the dataset on disk
  CHECK(io::file_checksum(ds_dir / data::sequence_filename(0)) == ds_before);

  // the log round-trips the trace (text precision limits equality)
  auto parsed = train::load_run_log(out / "run.log");
  REQUIRE(parsed.size() == art.trace.size());
  for (std::size_t i = 0; i < parsed.size(); ++i) {
    CHECK(parsed[i].step == art.trace[i].step);
    CHECK(parsed[i].epoch == art.trace[i].epoch);
    CHECK(parsed[i].estimator_updated == art.trace[i].estimator_updated);
    CHECK(parsed[i].total == Approx(art.trace[i].total).epsilon(1e-4));
    CHECK(parsed[i].rate == Approx(art.trace[i].rate).margin(1e-9));
  }

  // evaluation of the final checkpoint reproduces the saved report
  auto m = train::build_models(cfg);
  train::load_checkpoint(m, out / "checkpoint_final");
  auto ds = data::load_dataset(ds_dir);
  auto rep = train::evaluate(m, ds, 1);
  CHECK(rep.lmd_mean == Approx(art.report.lmd_mean).margin(1e-12));
  CHECK(rep.psnr_mean == Approx(art.report.psnr_mean).margin(1e-12));
  auto rep2 = train::evaluate(m, ds, 1);
  CHECK(rep2.lmd_mean == rep.lmd_mean);

  train::emit_plots(out, ds);
  CHECK(fs::exists(out / "loss_curves.ppm"));
  CHECK(fs::exists(out / "mi_curve.ppm"));
  CHECK(fs::exists(out / "attention_rate.ppm"));
  CHECK(fs::exists(out / "pca_scatter.ppm"));

  fs::remove_all(ds_dir);
  fs::remove_all(out);
}

TEST_CASE("identical seeds give bitwise identical runs") {
  auto ds_dir = make_dataset(temp_dir("det_ds"));
  auto out1 = temp_dir("det_run1"), out2 = temp_dir("det_run2");
  auto c1 = smoke_config(ds_dir, out1), c2 = smoke_config(ds_dir, out2);
  auto a1 = train::train(c1);
  auto a2 = train::train(c2);
  REQUIRE(a1.trace.size() == a2.trace.size());
  for (std::size_t i = 0; i < a1.trace.size(); ++i) {
    CHECK(a1.trace[i].total == a2.trace[i].total);
    CHECK(a1.trace[i].d_loss == a2.trace[i].d_loss);
    CHECK(a1.trace[i].est_checksum == a2.trace[i].est_checksum);
  }
  CHECK(io::file_checksum(out1 / "checkpoint_final" / "generator.bin") ==
        io::file_checksum(out2 / "checkpoint_final" / "generator.bin"));
  CHECK(a1.report.lmd_mean == a2.report.lmd_mean);

  // a different seed diverges
  auto out3 = temp_dir("det_run3");
  auto c3 = smoke_config(ds_dir, out3);
  c3.seed = 1234;
  auto a3 = train::train(c3);
  CHECK(a3.trace.back().total != a1.trace.back().total);

  fs::remove_all(ds_dir);
  fs::remove_all(out1);
  fs::remove_all(out2);
  fs::remove_all(out3);
}

TEST_CASE("ablation toggles shape the step trace") {
  auto ds_dir = make_dataset(temp_dir("abl_ds"));

  SECTION("baseline never touches the estimator or the MI term") {
    auto out = temp_dir("abl_baseline");
    auto cfg = smoke_config(ds_dir, out);
    cfg.mode = train::AblationMode::named("baseline");
    auto art = train::train(cfg);
    std::uint64_t init_est = train::build_models(cfg).estimator.params.checksum();
    for (const auto& r : art.trace) {
      CHECK_FALSE(r.estimator_updated);
      CHECK(r.mi_estimate == 0.0);
      // untouched within an epoch; checkpoint saves re-quantize to f32 at
      // epoch boundaries, so only the first epoch matches the fresh build
      if (r.epoch == 0) CHECK(r.est_checksum == init_est);
      CHECK(r.est_checksum == r.est_checksum_pre_g);
      CHECK(r.rate == 1.0);  // no dynamic attention
    }
    for (std::size_t i = 1; i < art.trace.size(); ++i)
      if (art.trace[i].epoch == art.trace[i - 1].epoch)
        CHECK(art.trace[i].est_checksum == art.trace[i - 1].est_checksum);
    fs::remove_all(out);
  }

  SECTION("asymmetric and symmetric runs train the estimator every step") {
    for (const char* name : {"amie", "mine"}) {
      auto out = temp_dir(std::string("abl_") + name);
      auto cfg = smoke_config(ds_dir, out);
      cfg.mode = train::AblationMode::named(name);
      auto art = train::train(cfg);
      std::uint64_t prev = train::build_models(cfg).estimator.params.checksum();
      for (const auto& r : art.trace) {
        CHECK(r.estimator_updated);
        CHECK(r.est_checksum_pre_g != prev);      // the estimator step moved it
        CHECK(r.est_checksum == r.est_checksum_pre_g);  // the G step did not
        prev = r.est_checksum;
      }
      fs::remove_all(out);
    }
  }

  SECTION("dynamic attention follows the schedule early in training") {
    auto out = temp_dir("abl_da");
    auto cfg = smoke_config(ds_dir, out);
    cfg.epochs = 3;
    cfg.mode = train::AblationMode::named("baseline_da");
    auto art = train::train(cfg);
    auto sched = cfg.resolved_schedule();
    for (const auto& r : art.trace)
      CHECK(r.rate == attn::schedule_rate(sched, double(r.epoch)));
    fs::remove_all(out);
  }
  fs::remove_all(ds_dir);
}

TEST_CASE("training rejects a mismatched dataset size") {
  auto ds_dir = make_dataset(temp_dir("mismatch_ds"));
  auto cfg = smoke_config(ds_dir, temp_dir("mismatch_run"));
  cfg.image_size = 32;  // dataset is 16x16
  CHECK_THROWS_AS(train::train(cfg), std::invalid_argument);
  fs::remove_all(ds_dir);
}

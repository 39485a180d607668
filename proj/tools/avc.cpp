#include <CLI11.hpp>
#include <iostream>

#include "avc/info_oracle.hpp"
#include "avc/trainer.hpp"

namespace {

using namespace avc;

int cmd_gen_data(const data::DatasetConfig& cfg, const std::string& out) {
  auto ds = data::generate_sequence_dataset(cfg);
  data::save_dataset(ds, out);
  std::cout << "wrote " << ds.sequences.size() << " sequences ("
            << cfg.frames_per_sequence << " frames, " << cfg.height << "x" << cfg.width
            << ") to " << out << "\n";
  return 0;
}

// Train a statistics network on correlated Gaussians and report the
// smoothed estimate against the closed form.
int cmd_estimate_mi_gaussian(double rho, std::size_t dim, std::size_t batch,
                             std::size_t steps, const std::string& repr, double lr,
                             std::uint64_t seed) {
  info_oracle::GaussianPairSpec spec{rho, dim};
  double analytic = info_oracle::gaussian_mi_analytic(spec);
  mi::Representation rep =
      repr == "dv" ? mi::Representation::DV : mi::Representation::JS;
  std::mt19937_64 rng(seed);
  mi::StatisticsNetwork net({dim}, {dim}, rng);
  nn::Adam opt;
  std::vector<double> history;
  for (std::size_t s = 0; s < steps; ++s) {
    auto b = data::sample_correlated_gaussians(spec, batch, rng);
    history.push_back(mi::estimator_update_step(net, b, rep, lr, &opt));
  }
  std::size_t tail = std::min<std::size_t>(100, history.size());
  double smoothed = 0.0;
  for (std::size_t i = history.size() - tail; i < history.size(); ++i)
    smoothed += history[i];
  smoothed /= double(tail);
  std::cout << "representation=" << repr << " rho=" << rho << " dim=" << dim << "\n"
            << "smoothed_estimate=" << smoothed << "\n"
            << "analytic_mi=" << analytic << "\n";
  if (rep == mi::Representation::DV)
    std::cout << "abs_error=" << std::fabs(smoothed - analytic) << "\n";
  return 0;
}

int cmd_estimate_mi_dataset(const std::string& path, std::size_t bins) {
  auto ds = data::load_dataset(path);
  double acc = 0.0;
  for (std::size_t i = 0; i < ds.sequences.size(); ++i) {
    double v = data::binned_mi(ds.sequences[i].driver, ds.sequences[i].mouth_open, bins);
    std::cout << "sequence_" << i << " binned_mi=" << v << "\n";
    acc += v;
  }
  std::cout << "mean_binned_mi=" << acc / double(ds.sequences.size()) << "\n";
  return 0;
}

void apply_train_flags(train::TrainingConfig& cfg, const std::map<std::string, std::string>& kv) {
  io::KVFile f;
  f.kv = kv;
  // route through the same parser as config files
  auto merged = cfg.to_kv();
  for (const auto& [k, v] : kv) merged.kv[k] = v;
  cfg = train::TrainingConfig::from_kv(merged);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"audio-visual coherence lab"};
  app.require_subcommand(1);

  // gen-data
  auto* gd = app.add_subcommand("gen-data", "synthesize a mouth-scene dataset");
  data::DatasetConfig dcfg;
  std::string out_dir = "dataset";
  gd->add_option("--out", out_dir, "output directory");
  gd->add_option("--identities", dcfg.num_identities);
  gd->add_option("--frames", dcfg.frames_per_sequence);
  gd->add_option("--size", dcfg.height)->description("square image size");
  gd->add_option("--noise", dcfg.audio_noise);
  gd->add_option("--seed", dcfg.seed);

  // train
  auto* tr = app.add_subcommand("train", "run the training loop");
  std::string config_file;
  std::map<std::string, std::string> overrides;
  train::TrainingConfig tcfg;
  tr->add_option("--config", config_file, "key=value config file");
  tr->add_option("--dataset", tcfg.dataset_path);
  tr->add_option("--out", tcfg.output_dir);
  std::string mode_name;
  tr->add_option("--mode", mode_name, "ablation mode (baseline|mine|mine_da|mine_js|mine_js_da|mine_asy_da|amie|amie_da|baseline_da)");
  std::vector<std::string> sets;
  tr->add_option("--set", sets, "extra config overrides key=value")->expected(-1);
  std::uint64_t seed_flag = 0;
  bool seed_given = false;
  tr->add_option("--seed", seed_flag)->each([&](const std::string&) { seed_given = true; });
  std::size_t epochs_flag = 0;
  tr->add_option("--epochs", epochs_flag);

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a finished run");
  std::string run_dir, eval_dataset;
  ev->add_option("--run", run_dir)->required();
  ev->add_option("--dataset", eval_dataset, "defaults to the run's dataset");

  // estimate-mi
  auto* em = app.add_subcommand("estimate-mi", "Gaussian or dataset MI benchmark");
  double rho = 0.9;
  std::size_t dim = 1, batch = 256, steps = 2000, bins = 16;
  double est_lr = 1e-3;
  std::uint64_t est_seed = 1;
  std::string repr = "dv", mi_dataset;
  em->add_option("--rho", rho);
  em->add_option("--dim", dim);
  em->add_option("--batch", batch);
  em->add_option("--steps", steps);
  em->add_option("--representation", repr)->check(CLI::IsMember({"dv", "js"}));
  em->add_option("--lr", est_lr);
  em->add_option("--seed", est_seed);
  em->add_option("--dataset", mi_dataset, "binned driver/mouth MI of a dataset instead");
  em->add_option("--bins", bins);

  // plot
  auto* pl = app.add_subcommand("plot", "emit run plots");
  std::string plot_run, plot_dataset;
  pl->add_option("--run", plot_run)->required();
  pl->add_option("--dataset", plot_dataset, "defaults to the run's dataset");

  // ablate
  auto* ab = app.add_subcommand("ablate", "run the full ablation toggle grid");
  std::string ab_config, ab_dataset, ab_out = "ablation";
  ab->add_option("--config", ab_config);
  ab->add_option("--dataset", ab_dataset);
  ab->add_option("--out", ab_out);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gd->parsed()) {
      dcfg.width = dcfg.height;
      return cmd_gen_data(dcfg, out_dir);
    }
    if (tr->parsed()) {
      if (!config_file.empty()) {
        auto f = io::KVFile::load(config_file);
        auto base = tcfg;
        tcfg = train::TrainingConfig::from_kv(f);
        if (!base.dataset_path.empty()) tcfg.dataset_path = base.dataset_path;
        if (!base.output_dir.empty()) tcfg.output_dir = base.output_dir;
      }
      for (const auto& s : sets) {
        auto eq = s.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value");
        std::map<std::string, std::string> kv{{s.substr(0, eq), s.substr(eq + 1)}};
        apply_train_flags(tcfg, kv);
      }
      if (!mode_name.empty()) tcfg.mode = train::AblationMode::named(mode_name);
      if (seed_given) tcfg.seed = seed_flag;
      if (epochs_flag > 0) tcfg.epochs = epochs_flag;
      if (tcfg.dataset_path.empty()) throw std::invalid_argument("--dataset is required");
      if (tcfg.output_dir.empty()) tcfg.output_dir = "run";
      auto art = train::train(tcfg);
      std::cout << "run complete: " << art.run_dir.string()
                << " lmd=" << art.report.lmd_mean << " psnr=" << art.report.psnr_mean
                << " ssim=" << art.report.ssim_mean << "\n";
      return 0;
    }
    if (ev->parsed()) {
      auto cfg = train::TrainingConfig::from_kv(io::KVFile::load(std::filesystem::path(run_dir) / "config"));
      auto ds = data::load_dataset(eval_dataset.empty() ? cfg.dataset_path : eval_dataset);
      auto m = train::build_models(cfg);
      train::load_checkpoint(m, std::filesystem::path(run_dir) / "checkpoint_final");
      auto rep = train::evaluate(m, ds, cfg.holdout_identities);
      train::save_report(rep, std::filesystem::path(run_dir) / "report");
      std::cout << "psnr=" << rep.psnr_mean << " ssim=" << rep.ssim_mean
                << " lmd=" << rep.lmd_mean << "\n";
      return 0;
    }
    if (em->parsed()) {
      if (!mi_dataset.empty()) return cmd_estimate_mi_dataset(mi_dataset, bins);
      return cmd_estimate_mi_gaussian(rho, dim, batch, steps, repr, est_lr, est_seed);
    }
    if (pl->parsed()) {
      auto cfg = train::TrainingConfig::from_kv(io::KVFile::load(std::filesystem::path(plot_run) / "config"));
      auto ds = data::load_dataset(plot_dataset.empty() ? cfg.dataset_path : plot_dataset);
      train::emit_plots(plot_run, ds);
      std::cout << "plots written to " << plot_run << "\n";
      return 0;
    }
    if (ab->parsed()) {
      train::TrainingConfig base;
      if (!ab_config.empty())
        base = train::TrainingConfig::from_kv(io::KVFile::load(ab_config));
      if (!ab_dataset.empty()) base.dataset_path = ab_dataset;
      if (base.dataset_path.empty()) throw std::invalid_argument("--dataset is required");
      io::KVFile summary;
      for (const auto& name : train::AblationMode::grid()) {
        auto cfg = base;
        cfg.mode = train::AblationMode::named(name);
        cfg.output_dir = (std::filesystem::path(ab_out) / name).string();
        auto art = train::train(cfg);
        std::cout << name << " lmd=" << art.report.lmd_mean
                  << " psnr=" << art.report.psnr_mean << " ssim=" << art.report.ssim_mean
                  << "\n";
        summary.set_num(name + "_lmd", art.report.lmd_mean);
        summary.set_num(name + "_psnr", art.report.psnr_mean);
        summary.set_num(name + "_ssim", art.report.ssim_mean);
      }
      summary.save(std::filesystem::path(ab_out) / "summary");
      return 0;
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::domain_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const avc::io::FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

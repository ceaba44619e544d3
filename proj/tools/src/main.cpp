#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "durm/data.hpp"
#include "durm/durm_head.hpp"
#include "durm/instrumentation.hpp"
#include "durm/model.hpp"
#include "durm/rng.hpp"
#include "durm/theory.hpp"
#include "durm/trainer.hpp"
#include "run_output.hpp"

namespace fs = std::filesystem;
using namespace durm;
using durm::cli::json;

namespace {

struct DatasetOpts {
  std::string kind = "blobs";
  std::size_t classes = 3;
  std::size_t per_class = 300;
  std::size_t dim = 2;
  double separation = 5.0;
  double spread = 1.0;
  std::string csv_path;
  std::string label_column = "label";

  void add_flags(CLI::App* cmd) {
    cmd->add_option("--dataset", kind, "Dataset source")
        ->check(CLI::IsMember({"blobs", "csv"}))
        ->capture_default_str();
    cmd->add_option("--classes", classes, "Number of real classes (blobs)")
        ->capture_default_str();
    cmd->add_option("--per-class", per_class, "Samples per class (blobs)")
        ->capture_default_str();
    cmd->add_option("--dim", dim, "Feature dimension (blobs)")
        ->capture_default_str();
    cmd->add_option("--separation", separation, "Center separation (blobs)")
        ->capture_default_str();
    cmd->add_option("--spread", spread, "Noise std around centers (blobs)")
        ->capture_default_str();
    cmd->add_option("--csv", csv_path, "CSV file (with --dataset csv)");
    cmd->add_option("--label-column", label_column, "Label column name")
        ->capture_default_str();
  }

  Dataset build(std::uint64_t seed) const {
    if (kind == "csv") {
      if (csv_path.empty()) {
        throw std::invalid_argument("--dataset csv requires --csv <path>");
      }
      return load_csv(csv_path, label_column);
    }
    return gen_blobs(stream_seed(seed, kStreamBlobs), classes, per_class, dim,
                     separation, spread);
  }

  json to_json() const {
    if (kind == "csv") {
      return json{{"kind", "csv"},
                  {"path", csv_path},
                  {"label_column", label_column}};
    }
    return json{{"kind", "blobs"},     {"classes", classes},
                {"per_class", per_class}, {"dim", dim},
                {"separation", separation}, {"spread", spread}};
  }
};

struct TrainOpts {
  DatasetOpts data;
  double test_fraction = 1.0 / 3.0;
  std::size_t dummy = 2;
  double learning_rate = 0.05;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t epochs = 200;
  std::size_t batch_size = 8;
  std::uint64_t seed = 7;
  double val_fraction = 0.2;
  std::vector<std::size_t> hidden = {8};
  std::optional<std::size_t> early_stop;
  std::optional<double> ema;
  std::optional<std::size_t> swa;
  std::optional<double> mixup;
  std::optional<double> longtail;
  std::string attack = "none";
  double attack_epsilon = 0.1;
  std::size_t attack_steps = 10;
  double attack_step_size = 0.025;
  bool probe_curvature = false;
  double probe_delta = 0.05;
  std::size_t probe_trials = 50;
  std::size_t hessian_iters = 50;
  double fd_step = 1e-4;
  std::string out_root = "runs";

  void add_common_flags(CLI::App* cmd, bool with_dummy) {
    data.add_flags(cmd);
    cmd->add_option("--test-fraction", test_fraction,
                    "Held-out test share of the dataset")
        ->capture_default_str();
    if (with_dummy) {
      cmd->add_option("--dummy", dummy, "Number of dummy classes C_d")
          ->capture_default_str();
    }
    cmd->add_option("--lr", learning_rate, "Learning rate")
        ->capture_default_str();
    cmd->add_option("--momentum", momentum, "SGD momentum")
        ->capture_default_str();
    cmd->add_option("--weight-decay", weight_decay, "L2 coefficient")
        ->capture_default_str();
    cmd->add_option("--epochs", epochs, "Training epochs")
        ->capture_default_str();
    cmd->add_option("--batch-size", batch_size, "Mini-batch size")
        ->capture_default_str();
    cmd->add_option("--seed", seed, "Master seed")
        ->envname("DURM_SEED")
        ->capture_default_str();
    cmd->add_option("--val-fraction", val_fraction,
                    "Validation share of the training set")
        ->capture_default_str();
    cmd->add_option("--hidden", hidden, "Hidden layer widths")
        ->capture_default_str();
    cmd->add_option("--early-stop", early_stop,
                    "Early-stop patience in epochs");
    cmd->add_option("--ema", ema, "EMA decay for a parameter shadow");
    cmd->add_option("--swa", swa, "First epoch of SWA averaging");
    cmd->add_option("--mixup", mixup, "Mixup Beta(alpha, alpha) parameter");
    cmd->add_option("--longtail", longtail,
                    "Subsample the training split to this imbalance ratio");
    cmd->add_option("--out", out_root, "Output root directory")
        ->capture_default_str();
  }

  void add_train_flags(CLI::App* cmd) {
    add_common_flags(cmd, true);
    cmd->add_option("--attack", attack, "Adversarial evaluation mode")
        ->check(CLI::IsMember({"none", "fgsm", "pgd"}))
        ->capture_default_str();
    cmd->add_option("--attack-epsilon", attack_epsilon,
                    "L-infinity perturbation radius")
        ->capture_default_str();
    cmd->add_option("--attack-steps", attack_steps, "PGD steps")
        ->capture_default_str();
    cmd->add_option("--attack-step-size", attack_step_size, "PGD step size")
        ->capture_default_str();
    cmd->add_flag("--probe-curvature", probe_curvature,
                  "Estimate rho and epsilon_hat after training");
    cmd->add_option("--probe-delta", probe_delta, "Flatness probe radius")
        ->capture_default_str();
    cmd->add_option("--probe-trials", probe_trials,
                    "Flatness probe directions")
        ->capture_default_str();
    cmd->add_option("--hessian-iters", hessian_iters,
                    "Power-iteration budget")
        ->capture_default_str();
    cmd->add_option("--fd-step", fd_step,
                    "Finite-difference step for Hessian products")
        ->capture_default_str();
  }

  TrainConfig to_config(std::size_t num_classes, std::uint64_t run_seed) const {
    TrainConfig config;
    config.learning_rate = learning_rate;
    config.momentum = momentum;
    config.weight_decay = weight_decay;
    config.epochs = epochs;
    config.batch_size = batch_size;
    config.seed = run_seed;
    config.val_fraction = val_fraction;
    config.hidden = hidden;
    config.regularizers.early_stop_patience = early_stop;
    config.regularizers.ema_decay = ema;
    config.regularizers.swa_start_epoch = swa;
    config.regularizers.mixup_alpha = mixup;
    config.head.num_classes = num_classes;
    config.head.num_dummy = dummy;
    return config;
  }

  json config_json(std::size_t num_classes, std::uint64_t run_seed) const {
    json reg(json::value_t::object);
    if (early_stop) reg["early_stop_patience"] = *early_stop;
    if (ema) reg["ema_decay"] = *ema;
    if (swa) reg["swa_start_epoch"] = *swa;
    if (mixup) reg["mixup_alpha"] = *mixup;
    json out{{"dataset", data.to_json()},
             {"test_fraction", test_fraction},
             {"head", json{{"classes", num_classes}, {"dummy", dummy}}},
             {"learning_rate", learning_rate},
             {"momentum", momentum},
             {"weight_decay", weight_decay},
             {"epochs", epochs},
             {"batch_size", batch_size},
             {"seed", run_seed},
             {"val_fraction", val_fraction},
             {"hidden", hidden},
             {"regularizers", reg}};
    if (longtail) out["longtail_ratio"] = *longtail;
    if (attack != "none") {
      out["attack"] = json{{"mode", attack},
                           {"epsilon", attack_epsilon},
                           {"steps", attack_steps},
                           {"step_size", attack_step_size}};
    }
    if (probe_curvature) {
      out["probes"] = json{{"delta", probe_delta},
                           {"trials", probe_trials},
                           {"hessian_iters", hessian_iters},
                           {"fd_step", fd_step}};
    }
    return out;
  }
};

std::vector<std::size_t> dataset_predictions(const Mlp& model,
                                             const Dataset& data) {
  std::vector<std::size_t> preds;
  preds.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    preds.push_back(predict(model, data.row(i)));
  }
  return preds;
}

int run_train(const TrainOpts& opt) {
  const Dataset full = opt.data.build(opt.seed);
  const Split split = train_test_split(
      full, opt.test_fraction, stream_seed(opt.seed, kStreamTestSplit), true);
  Dataset train_part = split.train;
  if (opt.longtail) {
    train_part = make_longtail(train_part, *opt.longtail,
                               stream_seed(opt.seed, kStreamLongtail));
  }

  const TrainConfig config = opt.to_config(full.num_classes, opt.seed);
  const json config_json = opt.config_json(full.num_classes, opt.seed);
  const json manifest =
      cli::make_manifest("train_run", config_json, train_part.provenance);
  const std::string digest = manifest.at("digest").get<std::string>();
  const fs::path dir = cli::prepare_run_dir(opt.out_root, manifest);

  TrainResult result = train(train_part, config);

  const EvalResult test = evaluate(result.final_model, split.test, config.head);
  const EvalResult best_test =
      evaluate(result.best_model, split.test, config.head);
  const std::size_t dummy_train = count_dummy_predictions(
      dataset_predictions(result.final_model, train_part), config.head);
  const std::size_t dummy_test = count_dummy_predictions(
      dataset_predictions(result.final_model, split.test), config.head);

  json attack_report;
  if (opt.attack != "none") {
    const auto [lo, hi] = feature_range(train_part);
    const AttackMode mode =
        opt.attack == "fgsm" ? AttackMode::fgsm : AttackMode::pgd;
    const std::size_t steps = opt.attack == "fgsm" ? 1 : opt.attack_steps;
    const double step_size =
        opt.attack == "fgsm" ? opt.attack_epsilon : opt.attack_step_size;
    const EvalResult robust =
        evaluate_adversarial(result.final_model, split.test, config.head, mode,
                             opt.attack_epsilon, steps, step_size, lo, hi);
    attack_report = json{{"mode", opt.attack},
                         {"epsilon", opt.attack_epsilon},
                         {"steps", steps},
                         {"step_size", step_size},
                         {"clean_acc", test.accuracy},
                         {"robust_acc", robust.accuracy},
                         {"robust_loss", robust.loss}};
  }

  if (opt.probe_curvature) {
    const EigenEstimate eig = estimate_top_hessian_eigenvalue(
        result.final_model, train_part, config.head, opt.hessian_iters,
        opt.fd_step, stream_seed(opt.seed, kStreamProbeHessian));
    const FlatnessEstimate flat = estimate_flatness(
        result.final_model, train_part, config.head, opt.probe_delta,
        opt.probe_trials, stream_seed(opt.seed, kStreamProbeFlatness));
    result.flatness.rho = eig.rho;
    result.flatness.rho_converged = eig.converged;
    result.flatness.epsilon_hat = flat.epsilon_hat;
    result.flatness.tau = flat.tau;
    result.flatness.delta = flat.delta;
  }

  save_checkpoint(result.final_model, (dir / "checkpoint_final.bin").string());
  save_checkpoint(result.best_model, (dir / "checkpoint_best.bin").string());
  json checkpoints{{"final", "checkpoint_final.bin"},
                   {"best", "checkpoint_best.bin"}};
  if (result.ema_model) {
    save_checkpoint(*result.ema_model, (dir / "checkpoint_ema.bin").string());
    checkpoints["ema"] = "checkpoint_ema.bin";
  }
  if (result.swa_model) {
    save_checkpoint(*result.swa_model, (dir / "checkpoint_swa.bin").string());
    checkpoints["swa"] = "checkpoint_swa.bin";
  }

  const std::size_t last = result.completed_epochs - 1;
  json result_json{
      {"schema_version", cli::kSchemaVersion},
      {"manifest_digest", digest},
      {"mode", result.mode},
      {"completed_epochs", result.completed_epochs},
      {"early_stopped", result.early_stopped},
      {"best_epoch", result.best_epoch},
      {"train_class_counts", result.train_class_counts},
      {"final", json{{"train_loss", result.train_loss[last]},
                     {"train_acc", result.train_acc[last]},
                     {"val_loss", result.val_loss[last]},
                     {"val_acc", result.val_acc[last]},
                     {"test_loss", test.loss},
                     {"test_acc", test.accuracy}}},
      {"best", json{{"val_loss", result.val_loss[result.best_epoch]},
                    {"val_acc", result.val_acc[result.best_epoch]},
                    {"test_loss", best_test.loss},
                    {"test_acc", best_test.accuracy}}},
      {"dummy_predictions", json{{"train", dummy_train}, {"test", dummy_test}}},
      {"checkpoints", checkpoints}};
  if (!attack_report.is_null()) result_json["attack"] = attack_report;
  if (result.ema_model) {
    const EvalResult ema_test =
        evaluate(*result.ema_model, split.test, config.head);
    result_json["ema"] = json{{"test_loss", ema_test.loss},
                              {"test_acc", ema_test.accuracy}};
  }
  if (result.swa_model) {
    const EvalResult swa_test =
        evaluate(*result.swa_model, split.test, config.head);
    result_json["swa"] = json{{"test_loss", swa_test.loss},
                              {"test_acc", swa_test.accuracy}};
  }

  // Empirical mixture coefficient per class: the share of training samples
  // that are negatives for that class. A modeling choice, recorded as such.
  const double n_train = double(train_part.size());
  json alpha(json::value_t::array);
  for (std::size_t c = 0; c < config.head.num_classes; ++c) {
    alpha.push_back(1.0 - double(result.train_class_counts[c]) / n_train);
  }
  json trace_json = cli::trace_to_json(result.trace, digest);
  trace_json["alpha_empirical"] = alpha;
  trace_json["alpha_note"] =
      "per-class fraction of negative training samples (modeling choice)";

  cli::write_json_file(dir / "result.json", result_json);
  cli::write_json_file(dir / "trace.json", trace_json);
  cli::write_json_file(dir / "flatness.json",
                       cli::flatness_to_json(result.flatness, digest));
  cli::write_epochs_csv(dir / "epochs.csv", digest, result);
  // Every recorded epoch ran the same number of steps, so the per-epoch
  // batch count falls out of the trace itself.
  const std::size_t batches_per_epoch =
      result.trace.step_grad_norm.size() / result.completed_epochs;
  cli::write_steps_csv(dir / "steps.csv", digest, result,
                       std::max<std::size_t>(batches_per_epoch, 1));

  std::cout << "mode=" << result.mode << " digest=" << digest.substr(0, 12)
            << " dir=" << dir.string() << '\n';
  std::cout << std::setprecision(6)
            << "final: train_acc=" << result.train_acc[last]
            << " val_acc=" << result.val_acc[last]
            << " test_acc=" << test.accuracy << " test_loss=" << test.loss
            << '\n';
  std::cout << "best: epoch=" << result.best_epoch
            << " val_loss=" << result.val_loss[result.best_epoch]
            << " test_acc=" << best_test.accuracy << '\n';
  std::cout << "dummy_predictions: train=" << dummy_train
            << " test=" << dummy_test << '\n';
  if (!attack_report.is_null()) {
    std::cout << "attack " << opt.attack << " eps=" << opt.attack_epsilon
              << ": robust_acc=" << attack_report["robust_acc"].get<double>()
              << " clean_acc=" << test.accuracy << '\n';
  }
  if (opt.probe_curvature) {
    std::cout << "probes: rho=" << result.flatness.rho
              << (result.flatness.rho_converged ? "" : " (not converged)")
              << " epsilon_hat=" << result.flatness.epsilon_hat
              << " tau=" << result.flatness.tau << '\n';
  }
  if (result.early_stopped) {
    std::cout << "early stop after epoch " << last << '\n';
  }
  return cli::kExitOk;
}

struct SweepOpts {
  TrainOpts base;
  std::size_t dummy_min = 1;
  std::size_t dummy_max = 40;
  std::size_t repeats = 3;
  std::size_t jobs = 1;
};

struct SweepCell {
  std::size_t dummy = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string status = "pending";
  double test_acc = 0.0;
  double test_loss = 0.0;
  double best_val_loss = 0.0;
  std::size_t best_epoch = 0;
  std::size_t dummy_test = 0;
  std::size_t completed_epochs = 0;
};

int run_sweep(const SweepOpts& opt) {
  if (opt.dummy_max > 64 || opt.dummy_min > opt.dummy_max) {
    throw std::invalid_argument("sweep: dummy range must lie within [0, 64]");
  }
  if (opt.repeats < 1) throw std::invalid_argument("sweep: repeats must be >= 1");
  if (opt.jobs < 1) throw std::invalid_argument("sweep: jobs must be >= 1");

  const Dataset full = opt.base.data.build(opt.base.seed);
  const Split split =
      train_test_split(full, opt.base.test_fraction,
                       stream_seed(opt.base.seed, kStreamTestSplit), true);
  Dataset train_part = split.train;
  if (opt.base.longtail) {
    train_part = make_longtail(train_part, *opt.base.longtail,
                               stream_seed(opt.base.seed, kStreamLongtail));
  }

  std::vector<std::size_t> dummies;
  if (opt.dummy_min > 0) dummies.push_back(0);
  for (std::size_t cd = opt.dummy_min; cd <= opt.dummy_max; ++cd) {
    dummies.push_back(cd);
  }
  const bool have_durm_cells = dummies.size() > 1 || dummies.front() != 0;

  std::vector<SweepCell> cells;
  for (std::size_t cd : dummies) {
    for (std::size_t r = 0; r < opt.repeats; ++r) {
      SweepCell cell;
      cell.dummy = cd;
      cell.seed = opt.base.seed + r;
      cells.push_back(cell);
    }
  }

  json sweep_config = opt.base.config_json(full.num_classes, opt.base.seed);
  sweep_config.erase("head");
  sweep_config["sweep"] = json{{"dummy_min", opt.dummy_min},
                               {"dummy_max", opt.dummy_max},
                               {"repeats", opt.repeats}};
  const json manifest =
      cli::make_manifest("sweep", sweep_config, train_part.provenance);
  const std::string digest = manifest.at("digest").get<std::string>();
  fs::path dir = fs::path(opt.base.out_root) /
                 ("sweep-" + digest.substr(0, 12));
  fs::create_directories(dir);
  cli::write_json_file(dir / "manifest.json", manifest);

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      SweepCell& cell = cells[i];
      TrainOpts cell_opt = opt.base;
      cell_opt.dummy = cell.dummy;
      const TrainConfig config =
          cell_opt.to_config(full.num_classes, cell.seed);
      try {
        const TrainResult result = train(train_part, config);
        const EvalResult test =
            evaluate(result.final_model, split.test, config.head);
        cell.test_acc = test.accuracy;
        cell.test_loss = test.loss;
        cell.best_val_loss = result.val_loss[result.best_epoch];
        cell.best_epoch = result.best_epoch;
        cell.dummy_test = count_dummy_predictions(
            dataset_predictions(result.final_model, split.test), config.head);
        cell.completed_epochs = result.completed_epochs;
        cell.ok = true;
        cell.status = "ok";
      } catch (const DivergenceError& e) {
        cell.ok = false;
        cell.status = "diverged";
      }
    }
  };
  std::vector<std::thread> pool;
  const std::size_t n_workers = std::min(opt.jobs, cells.size());
  pool.reserve(n_workers);
  for (std::size_t t = 0; t < n_workers; ++t) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();

  {
    std::ofstream out(dir / "cells.csv");
    out << "# manifest_digest:" << digest << '\n';
    out << "dummy,seed,status,test_acc,test_loss,best_val_loss,best_epoch,"
           "dummy_predictions_test,completed_epochs\n";
    for (const SweepCell& cell : cells) {
      out << cell.dummy << ',' << cell.seed << ',' << cell.status << ','
          << cli::format_double(cell.test_acc) << ','
          << cli::format_double(cell.test_loss) << ','
          << cli::format_double(cell.best_val_loss) << ',' << cell.best_epoch
          << ',' << cell.dummy_test << ',' << cell.completed_epochs << '\n';
    }
  }

  // Baseline accuracy per seed for the win pairing.
  std::vector<std::optional<double>> baseline(opt.repeats);
  for (const SweepCell& cell : cells) {
    if (cell.dummy == 0 && cell.ok) {
      baseline[std::size_t(cell.seed - opt.base.seed)] = cell.test_acc;
    }
  }

  std::ofstream summary(dir / "summary.csv");
  summary << "# manifest_digest:" << digest << '\n';
  summary << "dummy,cells,ok_cells,mean_test_acc,std_test_acc";
  if (have_durm_cells) summary << ",wins_vs_baseline";
  summary << '\n';

  std::cout << "sweep dir=" << dir.string() << '\n';
  std::size_t total_wins = 0;
  for (std::size_t cd : dummies) {
    std::vector<const SweepCell*> group;
    for (const SweepCell& cell : cells) {
      if (cell.dummy == cd) group.push_back(&cell);
    }
    double mean = 0.0;
    std::size_t ok = 0;
    for (const SweepCell* cell : group) {
      if (cell->ok) {
        mean += cell->test_acc;
        ++ok;
      }
    }
    mean = ok > 0 ? mean / double(ok) : 0.0;
    double sq = 0.0;
    for (const SweepCell* cell : group) {
      if (cell->ok) sq += (cell->test_acc - mean) * (cell->test_acc - mean);
    }
    const double stddev = ok > 1 ? std::sqrt(sq / double(ok - 1)) : 0.0;

    std::size_t wins = 0;
    if (cd > 0) {
      for (const SweepCell* cell : group) {
        const std::size_t r = std::size_t(cell->seed - opt.base.seed);
        if (cell->ok && baseline[r] && cell->test_acc > *baseline[r]) ++wins;
      }
      total_wins += wins;
    }
    summary << cd << ',' << group.size() << ',' << ok << ','
            << cli::format_double(mean) << ',' << cli::format_double(stddev);
    if (have_durm_cells) {
      if (cd > 0) {
        summary << ',' << wins;
      } else {
        summary << ',';
      }
    }
    summary << '\n';
    std::cout << "dummy=" << cd << " cells=" << group.size() << " ok=" << ok
              << std::setprecision(6) << " mean_test_acc=" << mean
              << " std=" << stddev;
    if (cd > 0) std::cout << " wins=" << wins;
    std::cout << '\n';
  }
  if (have_durm_cells) {
    std::cout << "total_wins=" << total_wins << " of "
              << (dummies.size() - (dummies.front() == 0 ? 1 : 0)) *
                     opt.repeats
              << " cells\n";
  }
  return cli::kExitOk;
}

struct TheoryVarianceOpts {
  double alpha = 0.5;
  double mu_n = 0.5;
  double mu_p = 0.5;
  double sigma_n = 1.0;
  double sigma_p = 1.0;
  double sigma_d = 0.0;
};

int run_theory_variance(const TheoryVarianceOpts& opt) {
  GradientMixture m;
  m.alpha = opt.alpha;
  m.mu_n = opt.mu_n;
  m.mu_p = opt.mu_p;
  m.sigma_n = opt.sigma_n;
  m.sigma_p = opt.sigma_p;
  m.sigma_d = opt.sigma_d;
  const VariancePair v = durm_variance(m);
  const double diff = v.var_durm - v.var_erm;
  const double sd2 = m.sigma_d * m.sigma_d;
  const double tol = 8.0 * std::numeric_limits<double>::epsilon() *
                     std::max(v.var_durm, 1.0);
  const bool diff_ok = std::abs(diff - sd2) <= tol;
  const bool order_ok = v.var_durm >= v.var_erm;

  std::cout << std::setprecision(17);
  std::cout << "var_erm=" << v.var_erm << '\n';
  std::cout << "var_durm=" << v.var_durm << '\n';
  std::cout << "difference=" << diff << " sigma_d^2=" << sd2
            << " tolerance=" << tol << '\n';
  std::cout << "mixture_mean=" << mixture_mean(m)
            << " (independent of sigma_d)\n";
  std::cout << "variance_excess_equals_sigma_d^2: "
            << (diff_ok ? "PASS" : "FAIL") << '\n';
  std::cout << "var_durm>=var_erm: " << (order_ok ? "PASS" : "FAIL") << '\n';
  return diff_ok && order_ok ? cli::kExitOk : cli::kExitCheckFailed;
}

struct TheoryOrderOpts {
  double mu1 = 0.0;
  double mu2 = 0.0;
  double s1 = 1.0;
  double s2 = 1.0;
  std::size_t T = 100;
  std::size_t budget = 1u << 22;
  std::size_t mc = 0;
  std::uint64_t seed = 7;
};

int run_theory_order(const TheoryOrderOpts& opt) {
  OrderStatsSpec erm_spec{opt.mu1, opt.s1, opt.T};
  OrderStatsSpec durm_spec{opt.mu2, opt.s2, opt.T};
  const ProbEstimate quad = prob_min_ge(erm_spec, durm_spec,
                                        ProbMethod::quadrature, opt.budget, 0);

  std::cout << std::setprecision(12);
  std::cout << "quadrature=" << quad.value << " residual=" << quad.residual
            << " evals=" << quad.budget_used << '\n';
  bool ok = true;
  if (!quad.converged) {
    std::cout << "quadrature_converged: FAIL (residual=" << quad.residual
              << ", evals=" << quad.budget_used << ")\n";
    ok = false;
  }
  const bool symmetric = opt.mu1 == opt.mu2 && opt.s1 == opt.s2;
  if (symmetric) {
    const bool half = std::abs(quad.value - 0.5) <= 1e-8;
    std::cout << "symmetric_half: " << (half ? "PASS" : "FAIL")
              << " |p-0.5|=" << std::abs(quad.value - 0.5) << '\n';
    ok = ok && half;
  } else if (opt.mu1 == opt.mu2 && opt.s1 <= opt.s2) {
    const bool excess = quad.value >= 0.5 - 1e-6;
    std::cout << "ordering_excess_nonnegative: " << (excess ? "PASS" : "FAIL")
              << " p-0.5=" << quad.value - 0.5 << '\n';
    ok = ok && excess;
  }
  if (opt.mc > 0) {
    const ProbEstimate mc = prob_min_ge(erm_spec, durm_spec,
                                        ProbMethod::monte_carlo, opt.mc,
                                        opt.seed);
    std::cout << "monte_carlo=" << mc.value << " std_error=" << mc.std_error
              << " replicas=" << mc.budget_used << '\n';
    const double gap = std::abs(mc.value - quad.value);
    const double allowed = std::max(0.005, 4.0 * mc.std_error);
    const bool agree = gap <= allowed;
    std::cout << "quadrature_mc_agreement: " << (agree ? "PASS" : "FAIL")
              << " |diff|=" << gap << " allowed=" << allowed << '\n';
    ok = ok && agree;
  }
  return ok ? cli::kExitOk : cli::kExitCheckFailed;
}

struct TheoryProductOpts {
  double mu1 = 0.0;
  double s1 = 1.0;
  double mu2 = 0.0;
  double s2 = 1.0;
  std::size_t points = 100;
  std::uint64_t seed = 7;
};

int run_theory_product(const TheoryProductOpts& opt) {
  const GaussianProduct p =
      gaussian_product_params(opt.mu1, opt.s1, opt.mu2, opt.s2);
  std::mt19937_64 gen(opt.seed);
  const double s_max = std::max(opt.s1, opt.s2);
  std::uniform_real_distribution<double> dist(
      std::min(opt.mu1, opt.mu2) - 5.0 * s_max,
      std::max(opt.mu1, opt.mu2) + 5.0 * s_max);
  double worst = 0.0;
  for (std::size_t i = 0; i < opt.points; ++i) {
    const double g = dist(gen);
    const double direct =
        normal_pdf(g, opt.mu1, opt.s1) * normal_pdf(g, opt.mu2, opt.s2);
    const double reconstructed =
        p.scale * normal_pdf(g, p.mean, std::sqrt(p.var));
    worst = std::max(worst, std::abs(direct - reconstructed));
  }
  const bool ok = worst <= 1e-10;
  std::cout << std::setprecision(17);
  std::cout << "combined_mean=" << p.mean << '\n';
  std::cout << "combined_var=" << p.var << '\n';
  std::cout << "scale=" << p.scale << '\n';
  std::cout << "max_pointwise_error=" << worst << " over " << opt.points
            << " points\n";
  std::cout << "product_reconstruction: " << (ok ? "PASS" : "FAIL") << '\n';
  return ok ? cli::kExitOk : cli::kExitCheckFailed;
}

struct FlatnessOpts {
  std::string checkpoint;
  DatasetOpts data;
  std::size_t classes = 3;
  std::vector<double> deltas = {0.01, 0.05, 0.1};
  std::size_t trials = 50;
  std::size_t hessian_iters = 50;
  double fd_step = 1e-4;
  std::uint64_t seed = 7;
  std::string out_root = "runs";
};

int run_flatness(const FlatnessOpts& opt) {
  if (!fs::exists(opt.checkpoint)) {
    std::cerr << "config error: checkpoint not found: " << opt.checkpoint
              << '\n';
    return cli::kExitConfigError;
  }
  const Mlp model = load_checkpoint(opt.checkpoint);
  const Dataset data = opt.data.build(opt.seed);
  if (model.output_dim() < data.num_classes) {
    throw std::invalid_argument(
        "flatness: checkpoint head narrower than the dataset's class count");
  }
  HeadConfig head;
  head.num_classes = data.num_classes;
  head.num_dummy = model.output_dim() - data.num_classes;

  json config{{"checkpoint", opt.checkpoint},
              {"dataset", opt.data.to_json()},
              {"deltas", opt.deltas},
              {"trials", opt.trials},
              {"hessian_iters", opt.hessian_iters},
              {"fd_step", opt.fd_step},
              {"seed", opt.seed}};
  const json manifest = cli::make_manifest("flatness", config, data.provenance);
  const std::string digest = manifest.at("digest").get<std::string>();
  fs::path dir =
      fs::path(opt.out_root) / ("flatness-" + digest.substr(0, 12));
  fs::create_directories(dir);
  cli::write_json_file(dir / "manifest.json", manifest);

  const EigenEstimate eig = estimate_top_hessian_eigenvalue(
      model, data, head, opt.hessian_iters, opt.fd_step,
      stream_seed(opt.seed, kStreamProbeHessian));
  std::cout << std::setprecision(10) << "rho=" << eig.rho
            << (eig.converged ? "" : " (not converged)") << '\n';

  json probes(json::value_t::array);
  std::ofstream csv(dir / "flatness.csv");
  csv << "# manifest_digest:" << digest << '\n';
  csv << "delta,epsilon_hat,tau\n";
  for (double delta : opt.deltas) {
    const FlatnessEstimate flat =
        estimate_flatness(model, data, head, delta, opt.trials,
                          stream_seed(opt.seed, kStreamProbeFlatness));
    probes.push_back(json{{"delta", flat.delta},
                          {"epsilon_hat", flat.epsilon_hat},
                          {"tau", flat.tau}});
    csv << cli::format_double(delta) << ','
        << cli::format_double(flat.epsilon_hat) << ','
        << cli::format_double(flat.tau) << '\n';
    std::cout << "delta=" << delta << " epsilon_hat=" << flat.epsilon_hat
              << " tau=" << flat.tau << '\n';
  }
  csv.close();

  json report{{"schema_version", cli::kSchemaVersion},
              {"manifest_digest", digest},
              {"rho", eig.rho},
              {"rho_converged", eig.converged},
              {"probes", probes}};
  cli::write_json_file(dir / "flatness.json", report);
  std::cout << "flatness dir=" << dir.string() << '\n';
  return cli::kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dummy-class risk minimization laboratory"};
  app.require_subcommand(1);

  TrainOpts train_opt;
  CLI::App* cmd_train = app.add_subcommand(
      "train", "Train one classifier and write its run artifacts");
  train_opt.add_train_flags(cmd_train);

  SweepOpts sweep_opt;
  CLI::App* cmd_sweep = app.add_subcommand(
      "sweep", "Train a grid over dummy-class counts and summarize");
  sweep_opt.base.add_common_flags(cmd_sweep, false);
  cmd_sweep->add_option("--dummy-min", sweep_opt.dummy_min,
                        "Smallest dummy count in the sweep")
      ->capture_default_str();
  cmd_sweep->add_option("--dummy-max", sweep_opt.dummy_max,
                        "Largest dummy count in the sweep")
      ->capture_default_str();
  cmd_sweep->add_option("--repeats", sweep_opt.repeats, "Seeds per cell")
      ->capture_default_str();
  cmd_sweep->add_option("--jobs", sweep_opt.jobs, "Concurrent cells")
      ->capture_default_str();

  CLI::App* cmd_theory =
      app.add_subcommand("theory", "Numerical checks of the gradient theory");
  cmd_theory->require_subcommand(1);

  TheoryVarianceOpts var_opt;
  CLI::App* cmd_variance = cmd_theory->add_subcommand(
      "variance", "Mixture variance with and without the dummy term");
  cmd_variance->add_option("--alpha", var_opt.alpha, "Negative-sample share")
      ->capture_default_str();
  cmd_variance->add_option("--mun", var_opt.mu_n, "Negative probability mean")
      ->capture_default_str();
  cmd_variance->add_option("--mup", var_opt.mu_p, "Positive probability mean")
      ->capture_default_str();
  cmd_variance->add_option("--sn", var_opt.sigma_n, "Negative component std")
      ->capture_default_str();
  cmd_variance->add_option("--sp", var_opt.sigma_p, "Positive component std")
      ->capture_default_str();
  cmd_variance->add_option("--sd", var_opt.sigma_d, "Dummy perturbation std")
      ->capture_default_str();

  TheoryOrderOpts order_opt;
  CLI::App* cmd_order = cmd_theory->add_subcommand(
      "order-stats", "Minimum-order-statistic comparison probability");
  cmd_order->add_option("--mu1", order_opt.mu1, "Baseline mean")
      ->capture_default_str();
  cmd_order->add_option("--mu2", order_opt.mu2, "Dummy-run mean")
      ->capture_default_str();
  cmd_order->add_option("--s1", order_opt.s1, "Baseline std")
      ->capture_default_str();
  cmd_order->add_option("--s2", order_opt.s2, "Dummy-run std")
      ->capture_default_str();
  cmd_order->add_option("--T", order_opt.T, "Gradient-descent steps")
      ->capture_default_str();
  cmd_order->add_option("--budget", order_opt.budget,
                        "Quadrature evaluation budget")
      ->capture_default_str();
  cmd_order->add_option("--mc", order_opt.mc,
                        "Monte Carlo replicas (0 = skip)")
      ->capture_default_str();
  cmd_order->add_option("--seed", order_opt.seed, "Monte Carlo seed")
      ->envname("DURM_SEED")
      ->capture_default_str();

  TheoryProductOpts product_opt;
  CLI::App* cmd_product = cmd_theory->add_subcommand(
      "product", "Gaussian product closure parameters");
  cmd_product->add_option("--mu1", product_opt.mu1, "First mean")
      ->capture_default_str();
  cmd_product->add_option("--s1", product_opt.s1, "First std")
      ->capture_default_str();
  cmd_product->add_option("--mu2", product_opt.mu2, "Second mean")
      ->capture_default_str();
  cmd_product->add_option("--s2", product_opt.s2, "Second std")
      ->capture_default_str();
  cmd_product->add_option("--points", product_opt.points,
                          "Random evaluation points")
      ->capture_default_str();
  cmd_product->add_option("--seed", product_opt.seed, "Sampling seed")
      ->envname("DURM_SEED")
      ->capture_default_str();

  FlatnessOpts flat_opt;
  CLI::App* cmd_flatness = app.add_subcommand(
      "flatness", "Curvature and stability probes on a checkpoint");
  cmd_flatness->add_option("--checkpoint", flat_opt.checkpoint,
                           "Model checkpoint to probe")
      ->required();
  flat_opt.data.add_flags(cmd_flatness);
  cmd_flatness->add_option("--delta", flat_opt.deltas, "Probe radii")
      ->capture_default_str();
  cmd_flatness->add_option("--trials", flat_opt.trials,
                           "Random directions per radius")
      ->capture_default_str();
  cmd_flatness->add_option("--hessian-iters", flat_opt.hessian_iters,
                           "Power-iteration budget")
      ->capture_default_str();
  cmd_flatness->add_option("--fd-step", flat_opt.fd_step,
                           "Finite-difference step")
      ->capture_default_str();
  cmd_flatness->add_option("--seed", flat_opt.seed, "Probe seed")
      ->envname("DURM_SEED")
      ->capture_default_str();
  cmd_flatness->add_option("--out", flat_opt.out_root, "Output root")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? cli::kExitOk : cli::kExitConfigError;
  }

  try {
    if (app.got_subcommand(cmd_train)) return run_train(train_opt);
    if (app.got_subcommand(cmd_sweep)) return run_sweep(sweep_opt);
    if (app.got_subcommand(cmd_theory)) {
      if (cmd_theory->got_subcommand(cmd_variance)) {
        return run_theory_variance(var_opt);
      }
      if (cmd_theory->got_subcommand(cmd_order)) {
        return run_theory_order(order_opt);
      }
      return run_theory_product(product_opt);
    }
    return run_flatness(flat_opt);
  } catch (const DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << '\n';
    return cli::kExitDivergence;
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return cli::kExitConfigError;
  }
}

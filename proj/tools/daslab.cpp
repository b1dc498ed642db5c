#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "daslab/commands.hpp"

namespace {

// Flag name -> config key for every run option that takes a value.
struct ValueFlag {
  const char* flag;
  const char* key;
  const char* help;
};

constexpr ValueFlag kRunFlags[] = {
    {"--strategy", "strategy", "random | das | coreset"},
    {"--preset", "preset", "paper-cifar10 | desk | synthetic"},
    {"--dataset-dir", "dataset_dir", "directory holding the CIFAR-10 binary batches"},
    {"--out-dir", "out_dir", "where CSVs and checkpoints go"},
    {"--seed-list", "seed_list", "comma-separated run seeds; each run goes to out-dir/seed_<s>"},
    {"--steps", "steps", "number of outer steps N"},
    {"--batch", "batch", "queries per step n"},
    {"--epochs", "epochs", "training epochs per step m"},
    {"--warmup", "warmup", "random warm-up steps M"},
    {"--pool-sample", "pool_sample", "candidates drawn per DAS query R"},
    {"--lr", "lr", "Adam learning rate"},
    {"--minibatch", "minibatch", "minibatch size"},
    {"--model-spec", "model_spec", "named spec or spec text"},
    {"--checkpoint-every", "checkpoint_every", "checkpoint cadence in steps (0 disables)"},
    {"--das-output", "das_output", "probabilities | logits"},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"daslab: batch-mode active learning experiments"};
  app.require_subcommand(1, 1);

  // run
  auto* run = app.add_subcommand("run", "run an active learning experiment");
  std::optional<std::string> config_path;
  run->add_option("--config", config_path, "key = value settings file");
  std::vector<std::optional<std::string>> run_values(std::size(kRunFlags));
  for (std::size_t i = 0; i < std::size(kRunFlags); ++i) {
    run->add_option(kRunFlags[i].flag, run_values[i], kRunFlags[i].help);
  }
  bool synthetic = false, serial = false, dry_run = false;
  run->add_flag("--synthetic", synthetic, "use the synthetic two-class fixture");
  run->add_flag("--serial", serial, "train the two models one after the other");
  run->add_flag("--dry-run", dry_run, "stub model and stand-in data, protocol shape only");

  // grad-check
  auto* grad = app.add_subcommand("grad-check", "finite-difference gradient check");
  daslab::GradCheckOptions grad_opts;
  grad->add_option("--spec", grad_opts.spec, "default | linear-softmax | conv-relu-dense");
  grad->add_option("--eps", grad_opts.eps, "finite-difference step");
  grad->add_option("--instances", grad_opts.instances, "random problems per spec");
  grad->add_option("--seed", grad_opts.seed, "first instance seed");

  // kcenter-verify
  auto* kc = app.add_subcommand("kcenter-verify", "check greedy k-center against brute force");
  daslab::KCenterVerifyOptions kc_opts;
  kc->add_option("--instances", kc_opts.instances, "number of random instances");
  kc->add_option("--seed", kc_opts.seed, "first instance seed");
  kc->add_option("--max-points", kc_opts.limits.max_points, "points per instance (upper bound)");
  kc->add_option("--max-k", kc_opts.limits.max_k, "centers per instance (upper bound)");
  kc->add_option("--max-dim", kc_opts.limits.max_dim, "dimensions (upper bound)");

  // report
  auto* report = app.add_subcommand("report", "merge run directories into curves and histograms");
  std::vector<std::string> report_dirs;
  std::string report_out = ".";
  report->add_option("dirs", report_dirs, "run output directories")->required();
  report->add_option("--out-dir", report_out, "where curves.csv and histogram_comparison.csv go");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  if (*run) {
    daslab::Settings flags;
    for (std::size_t i = 0; i < std::size(kRunFlags); ++i) {
      if (run_values[i]) flags.emplace_back(kRunFlags[i].key, *run_values[i]);
    }
    if (synthetic) flags.emplace_back("synthetic", "true");
    if (serial) flags.emplace_back("serial", "true");
    if (dry_run) flags.emplace_back("dry_run", "true");
    std::optional<std::filesystem::path> path;
    if (config_path) path = *config_path;
    return daslab::cmd_run(path, flags, std::cout, std::cerr);
  }
  if (*grad) return daslab::cmd_grad_check(grad_opts, std::cout, std::cerr);
  if (*kc) {
    if (kc_opts.limits.max_points == 0) {
      std::cerr << "usage error: --max-points must be positive\n";
      return 2;
    }
    return daslab::cmd_kcenter_verify(kc_opts, std::cout, std::cerr);
  }
  std::vector<std::filesystem::path> dirs(report_dirs.begin(), report_dirs.end());
  return daslab::cmd_report(dirs, report_out, std::cout, std::cerr);
}

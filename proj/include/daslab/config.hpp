#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "daslab/data.hpp"
#include "daslab/strategies.hpp"

namespace daslab {

enum class DatasetSource { cifar10, synthetic };

/// Every run parameter. Keys in config files and CLI flags map 1:1 onto
/// these fields through apply_setting.
struct ExperimentConfig {
  std::string preset = "paper-cifar10";
  Strategy strategy = Strategy::das;

  std::size_t total_steps = 100;      // N
  std::size_t warmup_steps = 2;       // M: steps [0, M) select randomly
  std::size_t batch_per_step = 100;   // n
  std::size_t epochs_per_step = 10;   // m
  std::size_t pool_sample_size = 1024;
  double learning_rate = 1e-4;
  std::size_t minibatch_size = 64;

  SplitSizes split{48000, 2000, 10000};
  std::uint64_t split_seed = 7;
  std::uint64_t model1_seed = 1;
  std::uint64_t model2_seed = 2;
  std::uint64_t selection_seed = 3;

  std::string model_spec = "small-conv";
  double dropout = 0.5;
  bool augment = true;
  std::size_t augment_pad = 4;
  double flip_prob = 0.5;
  bool standardize = false;
  OutputKind das_output = OutputKind::probabilities;

  DatasetSource dataset = DatasetSource::cifar10;
  std::string dataset_dir;
  std::size_t synth_per_class = 600;
  double synth_noise_b = 0.2;
  std::uint64_t synth_seed = 11;
  /// Stub model on a 1x1x1 stand-in dataset with the configured split sizes.
  bool dry_run = false;

  std::string out_dir;
  std::size_t checkpoint_every = 10;  // 0 disables checkpoints
  bool serial = false;
  std::vector<std::uint64_t> seed_list;
};

/// Named starting points: paper-cifar10, desk, synthetic.
ExperimentConfig preset_config(std::string_view name);
std::vector<std::string> preset_names();

/// Sets one field from its textual key/value. Throws ConfigError for unknown
/// keys or unparsable values.
void apply_setting(ExperimentConfig& cfg, std::string_view key, std::string_view value);

using Settings = std::vector<std::pair<std::string, std::string>>;

/// Parses "key = value" lines; '#' starts a comment.
Settings parse_settings(std::string_view text);
Settings read_settings_file(const std::filesystem::path& path);

/// Preset (from `flags`, else `file`, else by dataset choice) first, then the
/// file's settings, then the flags.
ExperimentConfig resolve_config(const Settings& file, const Settings& flags);

/// Throws ConfigError when invariants such as M <= N or n*N <= pool fail.
void validate(const ExperimentConfig& cfg);

/// Every key, one per line, in a fixed order; parse_settings accepts it back.
std::string format_config(const ExperimentConfig& cfg);

/// Copy of `cfg` with model and selection seeds derived from `run_seed`.
/// The split seed is kept so runs share one split.
ExperimentConfig with_run_seed(const ExperimentConfig& cfg, std::uint64_t run_seed);

}  // namespace daslab

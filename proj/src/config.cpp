#include "daslab/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "daslab/errors.hpp"

namespace daslab {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view expected) {
  throw ConfigError("invalid value '" + std::string(value) + "' for " + std::string(key) + " (expected " +
                    std::string(expected) + ")");
}

std::uint64_t to_u64(std::string_view key, std::string_view value) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size() || value.empty()) {
    bad_value(key, value, "a non-negative integer");
  }
  return out;
}

std::size_t to_size(std::string_view key, std::string_view value) {
  return static_cast<std::size_t>(to_u64(key, value));
}

double to_double(std::string_view key, std::string_view value) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size() || value.empty() || !std::isfinite(out)) {
    bad_value(key, value, "a finite number");
  }
  return out;
}

bool to_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  bad_value(key, value, "true or false");
}

std::vector<std::uint64_t> to_seed_list(std::string_view key, std::string_view value) {
  std::vector<std::uint64_t> seeds;
  while (!value.empty()) {
    const auto comma = value.find(',');
    const auto part = trim(value.substr(0, comma));
    if (!part.empty()) seeds.push_back(to_u64(key, part));
    if (comma == std::string_view::npos) break;
    value.remove_prefix(comma + 1);
  }
  return seeds;
}

std::string format_double(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::vector<std::string> preset_names() { return {"paper-cifar10", "desk", "synthetic"}; }

ExperimentConfig preset_config(std::string_view name) {
  ExperimentConfig cfg;  // field defaults are the paper-cifar10 preset
  if (name == "paper-cifar10") return cfg;
  if (name == "desk") {
    cfg.preset = "desk";
    cfg.total_steps = 20;
    cfg.batch_per_step = 100;
    cfg.epochs_per_step = 5;
    cfg.split = {10000, 1000, 5000};
    cfg.learning_rate = 1e-3;
    return cfg;
  }
  if (name == "synthetic") {
    cfg.preset = "synthetic";
    cfg.dataset = DatasetSource::synthetic;
    cfg.total_steps = 10;
    cfg.batch_per_step = 20;
    cfg.epochs_per_step = 5;
    cfg.minibatch_size = 32;
    cfg.learning_rate = 1e-3;
    cfg.split = {1000, 100, 100};
    cfg.augment_pad = 1;
    cfg.checkpoint_every = 0;
    return cfg;
  }
  throw ConfigError("unknown preset '" + std::string(name) + "'");
}

void apply_setting(ExperimentConfig& cfg, std::string_view key, std::string_view raw) {
  const auto value = trim(raw);
  if (key == "preset") {
    // Only meaningful before other settings; resolve_config applies it first.
    const auto keep_out = cfg.out_dir;
    cfg = preset_config(value);
    cfg.out_dir = keep_out;
  } else if (key == "strategy") {
    cfg.strategy = parse_strategy(value);
  } else if (key == "steps") {
    cfg.total_steps = to_size(key, value);
  } else if (key == "warmup") {
    cfg.warmup_steps = to_size(key, value);
  } else if (key == "batch") {
    cfg.batch_per_step = to_size(key, value);
  } else if (key == "epochs") {
    cfg.epochs_per_step = to_size(key, value);
  } else if (key == "pool_sample") {
    cfg.pool_sample_size = to_size(key, value);
  } else if (key == "lr") {
    cfg.learning_rate = to_double(key, value);
  } else if (key == "minibatch") {
    cfg.minibatch_size = to_size(key, value);
  } else if (key == "train_size") {
    cfg.split.train = to_size(key, value);
  } else if (key == "val_size") {
    cfg.split.validation = to_size(key, value);
  } else if (key == "test_size") {
    cfg.split.test = to_size(key, value);
  } else if (key == "split_seed") {
    cfg.split_seed = to_u64(key, value);
  } else if (key == "model1_seed") {
    cfg.model1_seed = to_u64(key, value);
  } else if (key == "model2_seed") {
    cfg.model2_seed = to_u64(key, value);
  } else if (key == "selection_seed") {
    cfg.selection_seed = to_u64(key, value);
  } else if (key == "model_spec") {
    if (value.empty()) bad_value(key, value, "a model spec name");
    cfg.model_spec = std::string(value);
  } else if (key == "dropout") {
    cfg.dropout = to_double(key, value);
  } else if (key == "augment") {
    cfg.augment = to_bool(key, value);
  } else if (key == "augment_pad") {
    cfg.augment_pad = to_size(key, value);
  } else if (key == "flip_prob") {
    cfg.flip_prob = to_double(key, value);
  } else if (key == "standardize") {
    cfg.standardize = to_bool(key, value);
  } else if (key == "das_output") {
    if (value == "probabilities") {
      cfg.das_output = OutputKind::probabilities;
    } else if (value == "logits") {
      cfg.das_output = OutputKind::logits;
    } else {
      bad_value(key, value, "probabilities or logits");
    }
  } else if (key == "synthetic") {
    cfg.dataset = to_bool(key, value) ? DatasetSource::synthetic : DatasetSource::cifar10;
  } else if (key == "dataset_dir") {
    cfg.dataset_dir = std::string(value);
  } else if (key == "synth_per_class") {
    cfg.synth_per_class = to_size(key, value);
  } else if (key == "synth_noise_b") {
    cfg.synth_noise_b = to_double(key, value);
  } else if (key == "synth_seed") {
    cfg.synth_seed = to_u64(key, value);
  } else if (key == "dry_run") {
    cfg.dry_run = to_bool(key, value);
  } else if (key == "out_dir") {
    cfg.out_dir = std::string(value);
  } else if (key == "checkpoint_every") {
    cfg.checkpoint_every = to_size(key, value);
  } else if (key == "serial") {
    cfg.serial = to_bool(key, value);
  } else if (key == "seed_list") {
    cfg.seed_list = to_seed_list(key, value);
  } else {
    throw ConfigError("unknown config key '" + std::string(key) + "'");
  }
}

Settings parse_settings(std::string_view text) {
  Settings out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    auto line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    out.emplace_back(std::string(key), std::string(trim(line.substr(eq + 1))));
  }
  return out;
}

Settings read_settings_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_settings(buf.str());
}

ExperimentConfig resolve_config(const Settings& file, const Settings& flags) {
  std::string preset;
  bool synthetic = false;
  for (const auto* source : {&file, &flags}) {
    for (const auto& [key, value] : *source) {
      if (key == "preset") preset = value;
      if (key == "synthetic") synthetic = trim(value) == "true" || trim(value) == "1";
    }
  }
  if (preset.empty()) preset = synthetic ? "synthetic" : "paper-cifar10";
  ExperimentConfig cfg = preset_config(preset);
  for (const auto* source : {&file, &flags}) {
    for (const auto& [key, value] : *source) {
      if (key == "preset") continue;
      apply_setting(cfg, key, value);
    }
  }
  return cfg;
}

void validate(const ExperimentConfig& cfg) {
  if (cfg.warmup_steps > cfg.total_steps) {
    throw ConfigError("warmup steps (" + std::to_string(cfg.warmup_steps) + ") exceed total steps (" +
                      std::to_string(cfg.total_steps) + ")");
  }
  if (cfg.batch_per_step == 0) throw ConfigError("batch per step must be positive");
  if (cfg.batch_per_step * cfg.total_steps > cfg.split.train) {
    throw ConfigError("n*N = " + std::to_string(cfg.batch_per_step * cfg.total_steps) +
                      " exceeds the train pool of " + std::to_string(cfg.split.train));
  }
  if (cfg.minibatch_size == 0) throw ConfigError("minibatch size must be positive");
  if (cfg.pool_sample_size == 0) throw ConfigError("pool sample size must be positive");
  if (!(cfg.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(cfg.dropout >= 0.0 && cfg.dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (!(cfg.flip_prob >= 0.0 && cfg.flip_prob <= 1.0)) throw ConfigError("flip_prob must lie in [0, 1]");
  if (!(cfg.synth_noise_b >= 0.0 && cfg.synth_noise_b <= 0.5)) throw ConfigError("synth_noise_b must lie in [0, 0.5]");
  if (cfg.dataset == DatasetSource::cifar10 && !cfg.dry_run && cfg.dataset_dir.empty()) {
    throw ConfigError("a CIFAR-10 run needs dataset_dir (or use synthetic / dry_run)");
  }
}

std::string format_config(const ExperimentConfig& cfg) {
  std::ostringstream out;
  auto line = [&](std::string_view key, const std::string& value) { out << key << " = " << value << "\n"; };
  line("preset", cfg.preset);
  line("strategy", std::string(to_string(cfg.strategy)));
  line("steps", std::to_string(cfg.total_steps));
  line("warmup", std::to_string(cfg.warmup_steps));
  line("batch", std::to_string(cfg.batch_per_step));
  line("epochs", std::to_string(cfg.epochs_per_step));
  line("pool_sample", std::to_string(cfg.pool_sample_size));
  line("lr", format_double(cfg.learning_rate));
  line("minibatch", std::to_string(cfg.minibatch_size));
  line("train_size", std::to_string(cfg.split.train));
  line("val_size", std::to_string(cfg.split.validation));
  line("test_size", std::to_string(cfg.split.test));
  line("split_seed", std::to_string(cfg.split_seed));
  line("model1_seed", std::to_string(cfg.model1_seed));
  line("model2_seed", std::to_string(cfg.model2_seed));
  line("selection_seed", std::to_string(cfg.selection_seed));
  line("model_spec", cfg.model_spec);
  line("dropout", format_double(cfg.dropout));
  line("augment", cfg.augment ? "true" : "false");
  line("augment_pad", std::to_string(cfg.augment_pad));
  line("flip_prob", format_double(cfg.flip_prob));
  line("standardize", cfg.standardize ? "true" : "false");
  line("das_output", cfg.das_output == OutputKind::probabilities ? "probabilities" : "logits");
  line("synthetic", cfg.dataset == DatasetSource::synthetic ? "true" : "false");
  line("dataset_dir", cfg.dataset_dir);
  line("synth_per_class", std::to_string(cfg.synth_per_class));
  line("synth_noise_b", format_double(cfg.synth_noise_b));
  line("synth_seed", std::to_string(cfg.synth_seed));
  line("dry_run", cfg.dry_run ? "true" : "false");
  line("out_dir", cfg.out_dir);
  line("checkpoint_every", std::to_string(cfg.checkpoint_every));
  line("serial", cfg.serial ? "true" : "false");
  std::string seeds;
  for (std::size_t i = 0; i < cfg.seed_list.size(); ++i) seeds += (i ? "," : "") + std::to_string(cfg.seed_list[i]);
  line("seed_list", seeds);
  return out.str();
}

ExperimentConfig with_run_seed(const ExperimentConfig& cfg, std::uint64_t run_seed) {
  ExperimentConfig out = cfg;
  out.model1_seed = splitmix64(run_seed * 4 + 1);
  out.model2_seed = splitmix64(run_seed * 4 + 2);
  out.selection_seed = splitmix64(run_seed * 4 + 3);
  out.seed_list.clear();
  return out;
}

}  // namespace daslab

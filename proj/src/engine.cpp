#include "daslab/engine.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <future>
#include <numeric>
#include <thread>

#include "daslab/checkpoint.hpp"
#include "daslab/errors.hpp"

namespace daslab {

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::uint64_t stream_seed(std::uint64_t seed) {
  std::uint64_t x = seed + 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

Model Model::create(const ModelSpec& spec, std::uint64_t seed, double learning_rate) {
  Model model{spec, init_params<float>(spec, seed), {}, Rng(stream_seed(seed))};
  model.adam = AdamState<float>::fresh(model.params.size(), learning_rate);
  return model;
}

int SimulatedOracle::label(std::size_t index) {
  if (index >= pool_->size()) {
    throw StructuralError("oracle query for index " + std::to_string(index) + " outside the train pool of " +
                          std::to_string(pool_->size()));
  }
  ++cost_;
  return pool_->examples[index].label;
}

double train_epochs(Model& model, const Dataset& pool, const LabeledSet& labeled, const TrainOptions& options,
                    int step) {
  if (options.epochs == 0) return 0.0;
  if (labeled.indices.empty()) throw StructuralError("cannot train on an empty labeled set");
  if (labeled.indices.size() != labeled.labels.size()) throw StructuralError("labeled set indices and labels differ in length");
  if (options.minibatch_size == 0) throw ConfigError("minibatch size must be positive");
  if (options.augment) validate(*options.augment, pool.shape);

  const std::size_t features = model.spec.input.size();
  const std::size_t classes = model.spec.num_classes;
  std::vector<std::size_t> order(labeled.indices.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  double last_epoch_loss = 0.0;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), model.rng);
    double loss_total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += options.minibatch_size) {
      const std::size_t count = std::min(options.minibatch_size, order.size() - start);
      std::vector<float> batch;
      batch.reserve(count * features);
      std::vector<int> labels(count);
      for (std::size_t j = 0; j < count; ++j) {
        const std::size_t pos = order[start + j];
        const auto& example = pool.examples.at(labeled.indices[pos]);
        labels[j] = labeled.labels[pos];
        if (options.augment) {
          const auto varied = augment(example, pool.shape, *options.augment, model.rng);
          batch.insert(batch.end(), varied.pixels.begin(), varied.pixels.end());
        } else {
          batch.insert(batch.end(), example.pixels.begin(), example.pixels.end());
        }
      }
      auto pass = forward<float>(model.params, model.spec, batch, count, Mode::train, model.rng);
      const auto probs = softmax_rows<float>(pass.logits, classes);
      const double loss = cross_entropy_loss<float>(probs, labels, classes);
      if (!std::isfinite(loss)) {
        throw DivergenceError("non-finite training loss at step " + std::to_string(step) + ", epoch " +
                              std::to_string(epoch + 1));
      }
      const auto grad = backward<float>(model.params, model.spec, *pass.trace, labels);
      try {
        adam_step<float>(model.params.values, grad, model.adam);
      } catch (const DivergenceError& e) {
        throw DivergenceError(std::string(e.what()) + " during step " + std::to_string(step) + ", epoch " +
                              std::to_string(epoch + 1));
      }
      loss_total += loss * static_cast<double>(count);
    }
    last_epoch_loss = loss_total / static_cast<double>(order.size());
  }
  return last_epoch_loss;
}

double evaluate_loss(const Model& model, const Dataset& pool, const LabeledSet& labeled) {
  const NetworkView view(model.spec, model.params, pool.examples);
  const auto probs = view.outputs(labeled.indices);
  return cross_entropy_loss<double>(probs, labeled.labels, model.spec.num_classes);
}

std::vector<int> predict(const Model& model, const Dataset& data) {
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const NetworkView view(model.spec, model.params, data.examples, OutputKind::logits);
  const auto logits = view.outputs(all);
  const std::size_t classes = model.spec.num_classes;
  std::vector<int> predictions(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto row = logits.begin() + static_cast<std::ptrdiff_t>(i * classes);
    predictions[i] = static_cast<int>(std::max_element(row, row + static_cast<std::ptrdiff_t>(classes)) - row);
  }
  return predictions;
}

DatasetSplit load_experiment_data(const ExperimentConfig& cfg) {
  const std::size_t total = cfg.split.train + cfg.split.validation + cfg.split.test;
  Dataset all;
  if (cfg.dry_run) {
    all = stub_dataset(total, cifar10::kNumClasses, cfg.synth_seed);
  } else if (cfg.dataset == DatasetSource::synthetic) {
    all = synth_two_class(cfg.synth_per_class, cfg.synth_noise_b, cfg.synth_seed).data;
  } else {
    if (cfg.dataset_dir.empty()) throw ConfigError("dataset_dir is not set");
    all = load_cifar10_dir(cfg.dataset_dir);
  }
  auto split = split_dataset(all, cfg.split, cfg.split_seed);
  if (cfg.standardize) {
    const auto stats = channel_stats(split.train_pool);
    standardize(split.train_pool, stats);
    standardize(split.validation, stats);
    standardize(split.test, stats);
  }
  return split;
}

ModelSpec experiment_model_spec(const ExperimentConfig& cfg, const ImageShape& input, int num_classes) {
  if (cfg.dry_run) return named_model_spec("stub", input, static_cast<std::size_t>(num_classes));
  if (cfg.model_spec.rfind("input(", 0) == 0) {
    auto spec = parse_model_spec(cfg.model_spec);
    if (spec.input != input || spec.num_classes != static_cast<std::size_t>(num_classes)) {
      throw ConfigError("model spec '" + cfg.model_spec + "' does not fit data of shape " + to_string(input) +
                        " with " + std::to_string(num_classes) + " classes");
    }
    return spec;
  }
  return named_model_spec(cfg.model_spec, input, static_cast<std::size_t>(num_classes), cfg.dropout);
}

std::size_t worker_limit() {
  if (const char* env = std::getenv("DAS_LAB_THREADS")) {
    std::size_t value = 0;
    const std::string_view text(env);
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec == std::errc() && ptr == text.data() + text.size() && value > 0) return value;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

Experiment::Experiment(ExperimentConfig config, DatasetSplit data)
    : config_(std::move(config)),
      data_(std::move(data)),
      pool_(PoolState::all_unlabeled(data_.train_pool.size())),
      oracle_(data_.train_pool),
      selection_rng_(config_.selection_seed) {
  validate(config_);
  if (data_.train_pool.size() != config_.split.train) {
    throw ConfigError("train pool holds " + std::to_string(data_.train_pool.size()) + " items, config expects " +
                      std::to_string(config_.split.train));
  }
  const auto spec = experiment_model_spec(config_, data_.train_pool.shape, data_.train_pool.num_classes);
  models_ = DualModels{Model::create(spec, config_.model1_seed, config_.learning_rate),
                       Model::create(spec, config_.model2_seed, config_.learning_rate)};
  if (config_.augment && !config_.dry_run) {
    AugmentConfig aug{config_.augment_pad, data_.train_pool.shape.height, config_.flip_prob};
    validate(aug, data_.train_pool.shape);
    augment_ = aug;
  }
}

void Experiment::train_both() {
  const TrainOptions options{config_.epochs_per_step, config_.minibatch_size, augment_};
  const Dataset& pool = data_.train_pool;
  if (config_.serial || worker_limit() < 2) {
    train_epochs(models_.first, pool, labeled_, options, step_ + 1);
    train_epochs(models_.second, pool, labeled_, options, step_ + 1);
    return;
  }
  // The two models share no mutable state, so concurrent training matches serial.
  auto second = std::async(std::launch::async, [&] {
    train_epochs(models_.second, pool, labeled_, options, step_ + 1);
  });
  try {
    train_epochs(models_.first, pool, labeled_, options, step_ + 1);
  } catch (...) {
    second.wait();
    throw;
  }
  second.get();
}

std::optional<StepResult> Experiment::run_step() {
  const std::size_t n = config_.batch_per_step;
  if (pool_.unlabeled().size() < n) return std::nullopt;
  const int step_number = step_ + 1;

  StepResult result;
  result.step = step_number;
  const auto select_start = std::chrono::steady_clock::now();
  const bool warmup = static_cast<std::size_t>(step_) < config_.warmup_steps;
  if (warmup || config_.strategy == Strategy::random) {
    for (std::size_t idx : random_select(pool_, n, selection_rng_)) {
      result.selections.push_back({step_number, idx, Strategy::random, std::nullopt});
    }
  } else if (config_.strategy == Strategy::das) {
    const auto& examples = data_.train_pool.examples;
    const NetworkView first(models_.first.spec, models_.first.params, examples, config_.das_output);
    const NetworkView second(models_.second.spec, models_.second.params, examples, config_.das_output);
    result.selections = das_select_batch(first, second, pool_, n, config_.pool_sample_size, selection_rng_, step_number);
  } else {
    const NetworkView first(models_.first.spec, models_.first.params, data_.train_pool.examples);
    result.selections = coreset_select(first, pool_, n, step_number);
  }
  result.select_seconds = seconds_since(select_start);

  for (const auto& record : result.selections) {
    const int label = oracle_.label(record.index);
    pool_.mark_labeled(record.index);
    labeled_.indices.push_back(record.index);
    labeled_.labels.push_back(label);
  }

  const auto train_start = std::chrono::steady_clock::now();
  train_both();
  result.train_seconds = seconds_since(train_start);
  result.epochs_trained = config_.epochs_per_step;
  result.optimizer_steps_first = models_.first.adam.t;
  result.optimizer_steps_second = models_.second.adam.t;

  const auto nan = std::numeric_limits<double>::quiet_NaN();
  const auto& val = data_.validation;
  if (val.size() > 0) {
    std::vector<int> labels(val.size());
    std::transform(val.examples.begin(), val.examples.end(), labels.begin(), [](const auto& e) { return e.label; });
    result.val_acc = accuracy(predict(models_.first, val), labels);
  } else {
    result.val_acc = nan;
  }
  const auto& test = data_.test;
  std::vector<int> test_labels(test.size());
  std::transform(test.examples.begin(), test.examples.end(), test_labels.begin(), [](const auto& e) { return e.label; });
  const auto predictions = test.size() > 0 ? predict(models_.first, test) : std::vector<int>{};
  result.test_acc = test.size() > 0 ? accuracy(predictions, test_labels) : nan;
  result.per_class_test = per_class_accuracy(predictions, test_labels, static_cast<std::size_t>(test.num_classes));
  result.labeled_count = labeled_.indices.size();
  ++step_;
  return result;
}

void Experiment::write_checkpoint_dir(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  write_checkpoint(dir / "model1.ckpt", {models_.first.spec, models_.first.params, models_.first.adam});
  write_checkpoint(dir / "model2.ckpt", {models_.second.spec, models_.second.params, models_.second.adam});
  std::ofstream out(dir / "labeled.txt");
  if (!out) throw IoError("cannot write " + (dir / "labeled.txt").string());
  for (std::size_t i = 0; i < labeled_.indices.size(); ++i) out << labeled_.indices[i] << ' ' << labeled_.labels[i] << '\n';
}

ExperimentLog Experiment::run(const StepCallback& on_step) {
  ExperimentLog log;
  log.config = config_;
  while (static_cast<std::size_t>(step_) < config_.total_steps) {
    auto result = run_step();
    if (!result) {
      log.stopped_early = true;
      break;
    }
    if (on_step) on_step(*result);
    log.steps.push_back(std::move(*result));
    if (!config_.out_dir.empty() && config_.checkpoint_every > 0 &&
        static_cast<std::size_t>(step_) % config_.checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof name, "step_%04d", step_);
      write_checkpoint_dir(std::filesystem::path(config_.out_dir) / "checkpoints" / name);
    }
  }
  log.histogram = class_histogram(pool_.labeled(), data_.train_pool);
  return log;
}

ExperimentLog run_experiment(const ExperimentConfig& cfg, const Experiment::StepCallback& on_step) {
  validate(cfg);
  Experiment experiment(cfg, load_experiment_data(cfg));
  auto log = experiment.run(on_step);
  if (!cfg.out_dir.empty()) write_run_csv(log, experiment.data().train_pool, cfg.out_dir);
  return log;
}

}  // namespace daslab

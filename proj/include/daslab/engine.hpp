#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "daslab/adam.hpp"
#include "daslab/config.hpp"
#include "daslab/data.hpp"
#include "daslab/metrics.hpp"
#include "daslab/model_spec.hpp"
#include "daslab/network.hpp"
#include "daslab/strategies.hpp"

namespace daslab {

/// One classifier with its optimizer state and private random stream
/// (init, shuffling, augmentation and dropout all draw from `rng`).
struct Model {
  ModelSpec spec;
  Params<float> params;
  AdamState<float> adam;
  Rng rng;

  static Model create(const ModelSpec& spec, std::uint64_t seed, double learning_rate);
};

/// Two models of one spec. Only `first` is ever evaluated.
struct DualModels {
  Model first;
  Model second;
};

/// Answers label queries from the held ground truth and counts them.
class SimulatedOracle {
 public:
  explicit SimulatedOracle(const Dataset& pool) : pool_(&pool) {}

  /// Throws StructuralError for indices outside the pool.
  int label(std::size_t index);
  std::size_t cost() const noexcept { return cost_; }

 private:
  const Dataset* pool_;
  std::size_t cost_ = 0;
};

/// Labeled set S in query order, with the labels the oracle returned.
struct LabeledSet {
  std::vector<std::size_t> indices;
  std::vector<int> labels;
};

struct TrainOptions {
  std::size_t epochs = 10;
  std::size_t minibatch_size = 64;
  std::optional<AugmentConfig> augment;
};

/// `epochs` full passes over S in freshly shuffled minibatches, augmenting
/// every example each epoch. Continues from the model's current weights and
/// Adam state. Returns the mean training loss of the last epoch (0 when
/// epochs == 0). Throws DivergenceError on a non-finite loss.
double train_epochs(Model& model, const Dataset& pool, const LabeledSet& labeled, const TrainOptions& options,
                    int step = 0);

/// Mean cross-entropy of the model over S in eval mode, no augmentation.
double evaluate_loss(const Model& model, const Dataset& pool, const LabeledSet& labeled);

/// Eval-mode argmax predictions (ties to the smallest class), batches of 256.
std::vector<int> predict(const Model& model, const Dataset& data);

struct StepResult {
  int step = 0;  // 1-based
  std::size_t labeled_count = 0;
  double val_acc = 0.0;
  double test_acc = 0.0;
  PerClassAccuracy per_class_test;
  std::vector<SelectionRecord> selections;
  double train_seconds = 0.0;
  double select_seconds = 0.0;
  std::size_t epochs_trained = 0;
  std::uint64_t optimizer_steps_first = 0;
  std::uint64_t optimizer_steps_second = 0;
};

struct ExperimentLog {
  ExperimentConfig config;
  std::vector<StepResult> steps;
  ClassHistogram histogram;
  bool stopped_early = false;
};

/// Builds the split for `cfg`: CIFAR-10 from dataset_dir, the two-class
/// fixture, or the stub stand-in for dry runs.
DatasetSplit load_experiment_data(const ExperimentConfig& cfg);

/// Model spec the config asks for, sized for `data`.
ModelSpec experiment_model_spec(const ExperimentConfig& cfg, const ImageShape& input, int num_classes);

/// Worker cap from DAS_LAB_THREADS (unset or invalid: hardware concurrency).
std::size_t worker_limit();

/// The batch-incremental loop over one dataset split.
class Experiment {
 public:
  Experiment(ExperimentConfig config, DatasetSplit data);
  Experiment(const Experiment&) = delete;
  Experiment& operator=(const Experiment&) = delete;

  /// One outer step: select n (randomly while step < M), label them, train
  /// both models m epochs, evaluate the first model. Returns nullopt when
  /// fewer than n items remain unlabeled.
  std::optional<StepResult> run_step();

  using StepCallback = std::function<void(const StepResult&)>;

  /// Runs the remaining steps, writing checkpoints when out_dir is set.
  ExperimentLog run(const StepCallback& on_step = {});

  const ExperimentConfig& config() const noexcept { return config_; }
  const DatasetSplit& data() const noexcept { return data_; }
  const PoolState& pool() const noexcept { return pool_; }
  const LabeledSet& labeled() const noexcept { return labeled_; }
  const SimulatedOracle& oracle() const noexcept { return oracle_; }
  DualModels& models() noexcept { return models_; }
  int steps_done() const noexcept { return step_; }

  /// Writes model1.ckpt, model2.ckpt and labeled.txt into `dir`.
  void write_checkpoint_dir(const std::filesystem::path& dir) const;

 private:
  void train_both();

  ExperimentConfig config_;
  DatasetSplit data_;
  PoolState pool_;
  LabeledSet labeled_;
  SimulatedOracle oracle_;
  DualModels models_;
  Rng selection_rng_;
  std::optional<AugmentConfig> augment_;
  int step_ = 0;
};

/// Loads data, runs the experiment and writes CSVs/checkpoints to out_dir.
ExperimentLog run_experiment(const ExperimentConfig& cfg, const Experiment::StepCallback& on_step = {});

}  // namespace daslab

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "daslab/data.hpp"
#include "daslab/model_spec.hpp"
#include "daslab/network.hpp"

namespace daslab {

enum class Strategy { random, das, coreset };

std::string_view to_string(Strategy s);
/// Throws ConfigError for names other than random, das, coreset.
Strategy parse_strategy(std::string_view name);

/// Disjoint labeled (S) / unlabeled (U) partition of train-pool indices.
/// Both sides are kept sorted ascending.
class PoolState {
 public:
  PoolState() = default;
  PoolState(std::vector<std::size_t> labeled, std::vector<std::size_t> unlabeled);

  static PoolState all_unlabeled(std::size_t pool_size);

  const std::vector<std::size_t>& labeled() const noexcept { return labeled_; }
  const std::vector<std::size_t>& unlabeled() const noexcept { return unlabeled_; }
  bool is_unlabeled(std::size_t index) const;

  /// Moves `index` from U to S; throws StructuralError if it is not in U.
  void mark_labeled(std::size_t index);

 private:
  std::vector<std::size_t> labeled_;
  std::vector<std::size_t> unlabeled_;
};

struct SelectionRecord {
  int step = 0;
  std::size_t index = 0;
  Strategy strategy = Strategy::random;
  std::optional<double> score;  // disagreement or k-center min-distance
};

/// Read-only access to a classifier's per-item output vectors.
class ModelView {
 public:
  virtual ~ModelView() = default;
  virtual std::size_t num_outputs() const = 0;
  /// Row-major |indices| x num_outputs() matrix.
  virtual std::vector<double> outputs(std::span<const std::size_t> indices) const = 0;
};

enum class OutputKind { probabilities, logits };

/// Eval-mode view of a network over a fixed set of examples, addressed by
/// position in `examples`.
class NetworkView final : public ModelView {
 public:
  NetworkView(const ModelSpec& spec, const Params<float>& params, std::span<const LabeledExample> examples,
              OutputKind kind = OutputKind::probabilities);

  std::size_t num_outputs() const override { return spec_->num_classes; }
  std::vector<double> outputs(std::span<const std::size_t> indices) const override;

  const ModelSpec& spec() const noexcept { return *spec_; }
  const Params<float>& params() const noexcept { return *params_; }
  std::span<const LabeledExample> examples() const noexcept { return examples_; }

 private:
  const ModelSpec* spec_;
  const Params<float>* params_;
  std::span<const LabeledExample> examples_;
  OutputKind kind_;
};

inline constexpr std::size_t kEvalBatch = 256;

/// Dense row-major point set.
struct FeatureMatrix {
  std::size_t dim = 0;
  std::vector<double> values;

  std::size_t rows() const noexcept { return dim == 0 ? 0 : values.size() / dim; }
  std::span<const double> row(std::size_t i) const { return {values.data() + i * dim, dim}; }
};

/// k distinct unlabeled indices, uniformly without replacement.
std::vector<std::size_t> random_select(const PoolState& pool, std::size_t k, Rng& rng);

/// Euclidean distance between two output vectors.
double das_distance(std::span<const double> p, std::span<const double> q);

struct DasPick {
  std::size_t index = 0;
  double score = 0.0;
};

/// Draws R = min(pool_sample_size, |U|) distinct unlabeled indices and
/// returns the one whose two model outputs are farthest apart; ties go to the
/// smallest index.
DasPick das_select_one(const ModelView& model1, const ModelView& model2, const PoolState& pool,
                       std::size_t pool_sample_size, Rng& rng);

/// n rounds of das_select_one with a fresh R each round; each pick leaves the
/// working pool before the next draw. Models are frozen for the whole batch,
/// so per-index outputs are computed once and reused.
std::vector<SelectionRecord> das_select_batch(const ModelView& model1, const ModelView& model2,
                                              const PoolState& pool, std::size_t n,
                                              std::size_t pool_sample_size, Rng& rng, int step = 0);

/// Activations entering the final dense layer for the given examples.
FeatureMatrix embed(const NetworkView& model, std::span<const std::size_t> indices);

struct KCenterPick {
  std::size_t index = 0;            // row of `points`
  std::optional<double> min_distance;  // absent for the seed pick when centers start empty
};

/// Farthest-first traversal over `points` given existing `centers`. When
/// `centers` is empty the first pick is point 0. Ties go to the smallest index.
std::vector<KCenterPick> kcenter_greedy(const FeatureMatrix& points, const FeatureMatrix& centers, std::size_t k);

/// max over points of the min Euclidean distance to any center.
double kcenter_radius(const FeatureMatrix& points, const FeatureMatrix& centers);

/// Core-set batch: embeds U and S with `model` and runs kcenter_greedy.
std::vector<SelectionRecord> coreset_select(const NetworkView& model, const PoolState& pool, std::size_t n,
                                            int step = 0);

}  // namespace daslab

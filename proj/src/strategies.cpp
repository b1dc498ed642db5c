#include "daslab/strategies.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

#include "daslab/errors.hpp"

namespace daslab {

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::random: return "random";
    case Strategy::das: return "das";
    case Strategy::coreset: return "coreset";
  }
  return "unknown";
}

Strategy parse_strategy(std::string_view name) {
  if (name == "random") return Strategy::random;
  if (name == "das") return Strategy::das;
  if (name == "coreset") return Strategy::coreset;
  throw ConfigError("unknown strategy '" + std::string(name) + "' (expected random, das or coreset)");
}

PoolState::PoolState(std::vector<std::size_t> labeled, std::vector<std::size_t> unlabeled)
    : labeled_(std::move(labeled)), unlabeled_(std::move(unlabeled)) {
  std::sort(labeled_.begin(), labeled_.end());
  std::sort(unlabeled_.begin(), unlabeled_.end());
  if (std::adjacent_find(labeled_.begin(), labeled_.end()) != labeled_.end() ||
      std::adjacent_find(unlabeled_.begin(), unlabeled_.end()) != unlabeled_.end()) {
    throw StructuralError("pool state contains duplicate indices");
  }
  std::vector<std::size_t> common;
  std::set_intersection(labeled_.begin(), labeled_.end(), unlabeled_.begin(), unlabeled_.end(),
                        std::back_inserter(common));
  if (!common.empty()) throw StructuralError("index " + std::to_string(common.front()) + " is both labeled and unlabeled");
}

PoolState PoolState::all_unlabeled(std::size_t pool_size) {
  std::vector<std::size_t> all(pool_size);
  for (std::size_t i = 0; i < pool_size; ++i) all[i] = i;
  return PoolState({}, std::move(all));
}

bool PoolState::is_unlabeled(std::size_t index) const {
  return std::binary_search(unlabeled_.begin(), unlabeled_.end(), index);
}

void PoolState::mark_labeled(std::size_t index) {
  const auto it = std::lower_bound(unlabeled_.begin(), unlabeled_.end(), index);
  if (it == unlabeled_.end() || *it != index) {
    throw StructuralError("index " + std::to_string(index) + " is not in the unlabeled pool");
  }
  unlabeled_.erase(it);
  labeled_.insert(std::lower_bound(labeled_.begin(), labeled_.end(), index), index);
}

NetworkView::NetworkView(const ModelSpec& spec, const Params<float>& params,
                         std::span<const LabeledExample> examples, OutputKind kind)
    : spec_(&spec), params_(&params), examples_(examples), kind_(kind) {}

namespace {

std::vector<float> gather(std::span<const LabeledExample> examples, std::span<const std::size_t> indices,
                          std::size_t features) {
  std::vector<float> batch;
  batch.reserve(indices.size() * features);
  for (std::size_t idx : indices) {
    if (idx >= examples.size()) throw StructuralError("example index " + std::to_string(idx) + " out of range");
    const auto& px = examples[idx].pixels;
    if (px.size() != features) throw StructuralError("example pixel count does not match model input");
    batch.insert(batch.end(), px.begin(), px.end());
  }
  return batch;
}

// Partial Fisher-Yates: k distinct draws from `items`.
std::vector<std::size_t> draw_without_replacement(std::vector<std::size_t> items, std::size_t k, Rng& rng) {
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, items.size() - 1);
    std::swap(items[i], items[pick(rng)]);
  }
  items.resize(k);
  return items;
}

// Caches per-index outputs of a frozen model.
class MemoView final : public ModelView {
 public:
  explicit MemoView(const ModelView& base) : base_(base) {}
  std::size_t num_outputs() const override { return base_.num_outputs(); }
  std::vector<double> outputs(std::span<const std::size_t> indices) const override {
    std::vector<std::size_t> missing;
    for (std::size_t idx : indices) {
      if (!cache_.contains(idx) && std::find(missing.begin(), missing.end(), idx) == missing.end()) {
        missing.push_back(idx);
      }
    }
    if (!missing.empty()) {
      const auto fresh = base_.outputs(missing);
      const std::size_t width = num_outputs();
      for (std::size_t i = 0; i < missing.size(); ++i) {
        cache_.emplace(missing[i], std::vector<double>(fresh.begin() + static_cast<std::ptrdiff_t>(i * width),
                                                       fresh.begin() + static_cast<std::ptrdiff_t>((i + 1) * width)));
      }
    }
    std::vector<double> out;
    out.reserve(indices.size() * num_outputs());
    for (std::size_t idx : indices) {
      const auto& row = cache_.at(idx);
      out.insert(out.end(), row.begin(), row.end());
    }
    return out;
  }

 private:
  const ModelView& base_;
  mutable std::unordered_map<std::size_t, std::vector<double>> cache_;
};

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return sum;
}

}  // namespace

std::vector<double> NetworkView::outputs(std::span<const std::size_t> indices) const {
  const std::size_t classes = spec_->num_classes;
  const std::size_t features = spec_->input.size();
  std::vector<double> out;
  out.reserve(indices.size() * classes);
  for (std::size_t start = 0; start < indices.size(); start += kEvalBatch) {
    const auto chunk = indices.subspan(start, std::min(kEvalBatch, indices.size() - start));
    const auto batch = gather(examples_, chunk, features);
    const auto logits = forward_eval<float>(*params_, *spec_, batch, chunk.size());
    std::vector<double> wide(logits.begin(), logits.end());
    if (kind_ == OutputKind::probabilities) wide = softmax_rows<double>(wide, classes);
    out.insert(out.end(), wide.begin(), wide.end());
  }
  return out;
}

std::vector<std::size_t> random_select(const PoolState& pool, std::size_t k, Rng& rng) {
  if (k > pool.unlabeled().size()) {
    throw PoolExhaustedError("requested " + std::to_string(k) + " items but only " +
                             std::to_string(pool.unlabeled().size()) + " are unlabeled");
  }
  return draw_without_replacement(pool.unlabeled(), k, rng);
}

double das_distance(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) {
    throw StructuralError("output vectors differ in length (" + std::to_string(p.size()) + " vs " +
                          std::to_string(q.size()) + ")");
  }
  return std::sqrt(squared_distance(p, q));
}

DasPick das_select_one(const ModelView& model1, const ModelView& model2, const PoolState& pool,
                       std::size_t pool_sample_size, Rng& rng) {
  if (pool.unlabeled().empty()) throw PoolExhaustedError("no unlabeled items left to query");
  if (pool_sample_size == 0) throw ConfigError("pool sample size must be positive");
  if (model1.num_outputs() != model2.num_outputs()) {
    throw StructuralError("the two models must share one output structure");
  }
  const std::size_t r = std::min(pool_sample_size, pool.unlabeled().size());
  const auto candidates = draw_without_replacement(pool.unlabeled(), r, rng);
  const auto out1 = model1.outputs(candidates);
  const auto out2 = model2.outputs(candidates);
  const std::size_t width = model1.num_outputs();

  DasPick best{std::numeric_limits<std::size_t>::max(), -1.0};
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double d = das_distance(std::span(out1).subspan(i * width, width), std::span(out2).subspan(i * width, width));
    if (d > best.score || (d == best.score && candidates[i] < best.index)) best = {candidates[i], d};
  }
  return best;
}

std::vector<SelectionRecord> das_select_batch(const ModelView& model1, const ModelView& model2,
                                              const PoolState& pool, std::size_t n,
                                              std::size_t pool_sample_size, Rng& rng, int step) {
  const MemoView cached1(model1);
  const MemoView cached2(model2);
  PoolState working = pool;
  std::vector<SelectionRecord> records;
  records.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (working.unlabeled().empty()) {
      throw PoolExhaustedError("pool exhausted at DAS iteration " + std::to_string(i) + " of " + std::to_string(n));
    }
    const auto pick = das_select_one(cached1, cached2, working, pool_sample_size, rng);
    working.mark_labeled(pick.index);
    records.push_back({step, pick.index, Strategy::das, pick.score});
  }
  return records;
}

FeatureMatrix embed(const NetworkView& model, std::span<const std::size_t> indices) {
  const auto& spec = model.spec();
  const std::size_t boundary = final_dense_index(spec);
  const std::size_t width = layer_shapes(spec)[boundary].size();
  FeatureMatrix features{width, {}};
  features.values.reserve(indices.size() * width);
  for (std::size_t start = 0; start < indices.size(); start += kEvalBatch) {
    const auto chunk = indices.subspan(start, std::min(kEvalBatch, indices.size() - start));
    const auto batch = gather(model.examples(), chunk, spec.input.size());
    const auto acts = daslab::embed<float>(model.params(), spec, batch, chunk.size());
    features.values.insert(features.values.end(), acts.begin(), acts.end());
  }
  return features;
}

std::vector<KCenterPick> kcenter_greedy(const FeatureMatrix& points, const FeatureMatrix& centers, std::size_t k) {
  const std::size_t m = points.rows();
  if (k > m) {
    throw PoolExhaustedError("k-center asked for " + std::to_string(k) + " picks from " + std::to_string(m) + " points");
  }
  if (k == 0) return {};
  if (centers.rows() > 0 && centers.dim != points.dim) {
    throw StructuralError("points and centers differ in dimension");
  }
  std::vector<double> nearest(m, std::numeric_limits<double>::infinity());
  for (std::size_t p = 0; p < m; ++p) {
    for (std::size_t c = 0; c < centers.rows(); ++c) {
      nearest[p] = std::min(nearest[p], squared_distance(points.row(p), centers.row(c)));
    }
  }
  std::vector<bool> taken(m, false);
  std::vector<KCenterPick> picks;
  picks.reserve(k);
  for (std::size_t step = 0; step < k; ++step) {
    std::size_t choice = m;
    std::optional<double> score;
    if (step == 0 && centers.rows() == 0) {
      choice = 0;
    } else {
      double best = -1.0;
      for (std::size_t p = 0; p < m; ++p) {
        if (!taken[p] && nearest[p] > best) {
          best = nearest[p];
          choice = p;
        }
      }
      score = std::sqrt(best);
    }
    taken[choice] = true;
    picks.push_back({choice, score});
    const auto center = points.row(choice);
    for (std::size_t p = 0; p < m; ++p) nearest[p] = std::min(nearest[p], squared_distance(points.row(p), center));
  }
  return picks;
}

double kcenter_radius(const FeatureMatrix& points, const FeatureMatrix& centers) {
  if (centers.rows() == 0) throw StructuralError("k-center radius needs at least one center");
  if (points.rows() > 0 && centers.dim != points.dim) throw StructuralError("points and centers differ in dimension");
  double radius = 0.0;
  for (std::size_t p = 0; p < points.rows(); ++p) {
    double nearest = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centers.rows(); ++c) nearest = std::min(nearest, squared_distance(points.row(p), centers.row(c)));
    radius = std::max(radius, nearest);
  }
  return std::sqrt(radius);
}

std::vector<SelectionRecord> coreset_select(const NetworkView& model, const PoolState& pool, std::size_t n, int step) {
  if (n > pool.unlabeled().size()) {
    throw PoolExhaustedError("requested " + std::to_string(n) + " items but only " +
                             std::to_string(pool.unlabeled().size()) + " are unlabeled");
  }
  const auto points = embed(model, pool.unlabeled());
  const auto centers = embed(model, pool.labeled());
  std::vector<SelectionRecord> records;
  for (const auto& pick : kcenter_greedy(points, centers, n)) {
    records.push_back({step, pool.unlabeled()[pick.index], Strategy::coreset, pick.min_distance});
  }
  return records;
}

}  // namespace daslab

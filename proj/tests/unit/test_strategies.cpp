#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "daslab/errors.hpp"
#include "daslab/network.hpp"
#include "daslab/strategies.hpp"

using namespace daslab;

namespace {

// Fixed output table, one row per pool index.
class TableView final : public ModelView {
 public:
  TableView(std::size_t width, std::vector<double> rows) : width_(width), rows_(std::move(rows)) {}
  std::size_t num_outputs() const override { return width_; }
  std::vector<double> outputs(std::span<const std::size_t> indices) const override {
    std::vector<double> out;
    for (auto i : indices) out.insert(out.end(), rows_.begin() + i * width_, rows_.begin() + (i + 1) * width_);
    return out;
  }

 private:
  std::size_t width_;
  std::vector<double> rows_;
};

std::vector<double> random_probs(std::size_t rows, std::size_t width, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> out(rows * width);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < width; ++c) s += out[r * width + c] = u(rng);
    for (std::size_t c = 0; c < width; ++c) out[r * width + c] /= s;
  }
  return out;
}

FeatureMatrix line(std::vector<double> xs) { return FeatureMatrix{1, std::move(xs)}; }

double brute_radius(const FeatureMatrix& pts, std::size_t k) {
  const std::size_t m = pts.rows();
  if (k >= m) return 0.0;
  std::vector<bool> pick(m, false);
  std::fill(pick.begin(), pick.begin() + static_cast<long>(k), true);
  double best = 1e300;
  do {
    double r = 0.0;
    for (std::size_t p = 0; p < m; ++p) {
      double near = 1e300;
      for (std::size_t c = 0; c < m; ++c) {
        if (!pick[c]) continue;
        double s = 0.0;
        for (std::size_t d = 0; d < pts.dim; ++d) s += std::pow(pts.row(p)[d] - pts.row(c)[d], 2);
        near = std::min(near, std::sqrt(s));
      }
      r = std::max(r, near);
    }
    best = std::min(best, r);
  } while (std::prev_permutation(pick.begin(), pick.end()));
  return best;
}

}  // namespace

TEST_CASE("strategy names") {
  CHECK(parse_strategy("das") == Strategy::das);
  CHECK(to_string(Strategy::coreset) == "coreset");
  CHECK_THROWS_AS(parse_strategy("entropy"), ConfigError);
}

TEST_CASE("pool state bookkeeping") {
  auto pool = PoolState::all_unlabeled(5);
  pool.mark_labeled(3);
  CHECK(pool.labeled() == std::vector<std::size_t>{3});
  CHECK(pool.unlabeled() == std::vector<std::size_t>{0, 1, 2, 4});
  CHECK_THROWS_AS(pool.mark_labeled(3), StructuralError);
  CHECK_THROWS_AS(PoolState({1, 2}, {2, 3}), StructuralError);
}

TEST_CASE("random select") {
  auto pool = PoolState::all_unlabeled(20);
  Rng rng(1);
  CHECK(random_select(pool, 0, rng).empty());
  auto all = random_select(pool, 20, rng);
  std::sort(all.begin(), all.end());
  CHECK(all == pool.unlabeled());
  Rng a(9), b(9);
  CHECK(random_select(pool, 7, a) == random_select(pool, 7, b));
  CHECK_THROWS_AS(random_select(pool, 21, rng), PoolExhaustedError);
}

TEST_CASE("das distance examples and metric properties") {
  CHECK(das_distance(std::vector<double>{0.2, 0.8}, std::vector<double>{0.2, 0.8}) == 0.0);
  CHECK(das_distance(std::vector<double>{1, 0, 0}, std::vector<double>{0, 0, 1}) == doctest::Approx(std::sqrt(2.0)));
  CHECK(das_distance(std::vector<double>{0.5, 0.5}, std::vector<double>{1, 0}) == doctest::Approx(0.70711).epsilon(1e-5));
  CHECK_THROWS_AS(das_distance(std::vector<double>{1}, std::vector<double>{1, 0}), StructuralError);

  Rng rng(17);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t w = 2 + static_cast<std::size_t>(trial % 9);
    const auto rows = random_probs(3, w, rng);
    std::span<const double> p(rows.data(), w), q(rows.data() + w, w), r(rows.data() + 2 * w, w);
    const double pq = das_distance(p, q), qp = das_distance(q, p);
    CHECK(pq >= 0.0);
    CHECK(pq <= std::sqrt(2.0) + 1e-12);
    CHECK(pq == qp);
    CHECK(pq <= das_distance(p, r) + das_distance(r, q) + 1e-12);
    CHECK(das_distance(p, p) == 0.0);
  }
}

TEST_CASE("das select one") {
  SUBCASE("identical models tie at 0 and pick the smallest sampled index") {
    Rng rng(3);
    const auto rows = random_probs(10, 3, rng);
    TableView m(3, rows);
    auto pool = PoolState({0, 1}, {2, 3, 4, 5, 6, 7, 8, 9});
    const auto pick = das_select_one(m, m, pool, 100, rng);
    CHECK(pick.index == 2);
    CHECK(pick.score == 0.0);
  }
  SUBCASE("stubbed distances 0.1, 0.9, 0.4 pick the middle index") {
    TableView a(1, {0.0, 0.0, 0.0});
    TableView b(1, {0.1, 0.9, 0.4});
    Rng rng(1);
    const auto pick = das_select_one(a, b, PoolState::all_unlabeled(3), 3, rng);
    CHECK(pick.index == 1);
    CHECK(pick.score == doctest::Approx(0.9));
  }
  SUBCASE("exhaustive sample equals brute-force argmax with smallest-index ties") {
    Rng rng(5);
    for (int trial = 0; trial < 40; ++trial) {
      const std::size_t n = 1 + rng() % 60;
      auto r1 = random_probs(n, 4, rng);
      auto r2 = random_probs(n, 4, rng);
      // force ties on some trials by copying rows
      if (trial % 3 == 0) std::copy(r1.begin(), r1.end(), r2.begin());
      TableView a(4, r1), b(4, r2);
      auto pool = PoolState::all_unlabeled(n);
      std::size_t best = 0;
      double best_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t c = 0; c < 4; ++c) s += (r1[i * 4 + c] - r2[i * 4 + c]) * (r1[i * 4 + c] - r2[i * 4 + c]);
        if (std::sqrt(s) > best_d) best_d = std::sqrt(s), best = i;
      }
      const auto pick = das_select_one(a, b, pool, n + trial, rng);
      CHECK(pick.index == best);
    }
  }
  SUBCASE("errors") {
    TableView a(1, {0.0});
    Rng rng(1);
    CHECK_THROWS_AS(das_select_one(a, a, PoolState({0}, {}), 4, rng), PoolExhaustedError);
    CHECK_THROWS_AS(das_select_one(a, a, PoolState::all_unlabeled(1), 0, rng), ConfigError);
  }
}

TEST_CASE("das select batch") {
  Rng gen(8);
  const std::size_t n = 40;
  TableView a(3, random_probs(n, 3, gen)), b(3, random_probs(n, 3, gen));
  const auto pool = PoolState({0, 5}, [&] {
    std::vector<std::size_t> u;
    for (std::size_t i = 0; i < n; ++i) if (i != 0 && i != 5) u.push_back(i);
    return u;
  }());

  SUBCASE("n = 1 equals das_select_one") {
    Rng r1(4), r2(4);
    const auto one = das_select_one(a, b, pool, 10, r1);
    const auto batch = das_select_batch(a, b, pool, 1, 10, r2, 3);
    REQUIRE(batch.size() == 1);
    CHECK(batch[0].index == one.index);
    CHECK(*batch[0].score == one.score);
    CHECK(batch[0].step == 3);
    CHECK(batch[0].strategy == Strategy::das);
  }
  SUBCASE("identical models pick the smallest member of each fresh draw") {
    Rng r1(6), r2(6);
    const auto picks = das_select_batch(a, a, pool, 2, 5, r1);
    // replay the draws: sample 5 of U, take the min; remove; repeat
    auto working = pool;
    for (const auto& p : picks) {
      auto draw = random_select(working, 5, r2);
      CHECK(p.index == *std::min_element(draw.begin(), draw.end()));
      working.mark_labeled(p.index);
    }
    CHECK(picks[0].index != picks[1].index);
  }
  SUBCASE("distinct picks from the unlabeled set; exhaustion") {
    Rng r(2);
    const auto picks = das_select_batch(a, b, pool, 38, 7, r);
    std::set<std::size_t> seen;
    for (const auto& p : picks) {
      CHECK(pool.is_unlabeled(p.index));
      seen.insert(p.index);
    }
    CHECK(seen.size() == 38);
    CHECK_THROWS_AS(das_select_batch(a, b, pool, 39, 7, r), PoolExhaustedError);
  }
}

TEST_CASE("k-center greedy hand traces") {
  const auto pts = line({0, 1, 2, 10});
  const auto centers = line({0});
  CHECK(kcenter_greedy(pts, centers, 0).empty());
  const auto one = kcenter_greedy(pts, centers, 1);
  REQUIRE(one.size() == 1);
  CHECK(one[0].index == 3);
  CHECK(*one[0].min_distance == doctest::Approx(10.0));
  const auto two = kcenter_greedy(pts, centers, 2);
  CHECK(two[0].index == 3);
  CHECK(two[1].index == 2);
  CHECK(*two[1].min_distance == doctest::Approx(2.0));

  const auto seeded = kcenter_greedy(pts, FeatureMatrix{1, {}}, 2);
  CHECK(seeded[0].index == 0);
  CHECK_FALSE(seeded[0].min_distance.has_value());
  CHECK(seeded[1].index == 3);
  CHECK_THROWS_AS(kcenter_greedy(pts, centers, 5), PoolExhaustedError);
}

TEST_CASE("k-center radius") {
  CHECK(kcenter_radius(line({0, 10}), line({0})) == doctest::Approx(10.0));
  CHECK(kcenter_radius(line({1, 2, 3}), line({3, 1, 2})) == 0.0);
  CHECK_THROWS_AS(kcenter_radius(line({1}), FeatureMatrix{1, {}}), StructuralError);
}

TEST_CASE("k-center greedy stays within twice the optimum on random 8-point sets") {
  Rng rng(21);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 60; ++trial) {
    FeatureMatrix pts{2, {}};
    for (int i = 0; i < 16; ++i) pts.values.push_back(u(rng));
    for (std::size_t k = 1; k <= 4; ++k) {
      const auto picks = kcenter_greedy(pts, FeatureMatrix{2, {}}, k);
      FeatureMatrix c{2, {}};
      for (const auto& p : picks) c.values.insert(c.values.end(), pts.row(p.index).begin(), pts.row(p.index).end());
      CHECK(kcenter_radius(pts, c) <= 2.0 * brute_radius(pts, k) + 1e-12);
    }
  }
}

TEST_CASE("network view, embedding and coreset selection") {
  const auto spec = named_model_spec("small-conv", ImageShape{1, 4, 4}, 3, 0.5);
  const auto params = init_params<float>(spec, 2);
  std::vector<LabeledExample> examples;
  Rng rng(1);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (int i = 0; i < 30; ++i) {
    LabeledExample e{std::vector<float>(16), i % 3};
    for (auto& p : e.pixels) p = u(rng);
    examples.push_back(e);
  }
  NetworkView view(spec, params, examples);
  const std::vector<std::size_t> idx{0, 1, 2};
  const auto probs = view.outputs(idx);
  REQUIRE(probs.size() == 9);
  for (int r = 0; r < 3; ++r) CHECK(probs[r * 3] + probs[r * 3 + 1] + probs[r * 3 + 2] == doctest::Approx(1.0));

  const auto feats = embed(view, idx);
  const auto final_in = std::get<DenseLayer>(spec.layers[final_dense_index(spec)]).in;
  CHECK(feats.dim == final_in);
  CHECK(feats.rows() == 3);
  examples[4] = examples[0];
  const auto same = embed(view, std::vector<std::size_t>{0, 4});
  for (std::size_t d = 0; d < same.dim; ++d) CHECK(same.row(0)[d] == same.row(1)[d]);

  auto zero = params;
  std::fill(zero.values.begin(), zero.values.end(), 0.0f);
  NetworkView zero_view(spec, zero, examples);
  for (double v : embed(zero_view, idx).values) CHECK(v == 0.0);

  auto pool = PoolState({0, 1}, [] {
    std::vector<std::size_t> u;
    for (std::size_t i = 2; i < 30; ++i) u.push_back(i);
    return u;
  }());
  const auto picks = coreset_select(view, pool, 5, 2);
  REQUIRE(picks.size() == 5);
  std::set<std::size_t> seen;
  for (const auto& p : picks) {
    CHECK(pool.is_unlabeled(p.index));
    CHECK(p.strategy == Strategy::coreset);
    CHECK(p.score.has_value());
    seen.insert(p.index);
  }
  CHECK(seen.size() == 5);
  // scores are non-increasing in farthest-first order
  for (std::size_t i = 1; i < picks.size(); ++i) CHECK(*picks[i].score <= *picks[i - 1].score + 1e-12);
}

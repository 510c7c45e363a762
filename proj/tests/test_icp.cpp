#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <vector>

#include "doctest.h"
#include "streamcp/icp.hpp"

using namespace streamcp;

namespace {

// ---- independent oracles (plain loops, no streamcp kernels) ----

double oracle_dist2(std::span<const double> a, std::span<const double> b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += (a[i] - b[i]) * (a[i] - b[i]);
  return sum;
}

// Sort every stored point by (distance, index) and take the first k.
std::vector<std::size_t> oracle_knn(const TrainingIndex& index,
                                    std::span<const double> query) {
  std::vector<std::pair<double, std::size_t>> all;
  for (std::size_t i = 0; i < index.size(); ++i)
    all.emplace_back(oracle_dist2(query, index.embedding(i)), i);
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < index.k; ++i) out.push_back(all[i].second);
  std::sort(out.begin(), out.end());
  return out;
}

int oracle_nonconformity(const TrainingIndex& index, std::span<const double> query,
                         int label) {
  int score = 0;
  for (std::size_t i : oracle_knn(index, query))
    if (index.labels[i] != label) ++score;
  return score;
}

std::vector<double> oracle_pvalues(const std::vector<int>& scores_multiset,
                                   const TrainingIndex& index,
                                   std::span<const double> query) {
  std::vector<double> out(static_cast<std::size_t>(index.num_classes));
  for (int j = 0; j < index.num_classes; ++j) {
    const int s = oracle_nonconformity(index, query, j);
    std::size_t at_least = 0;
    for (int a : scores_multiset)
      if (a >= s) ++at_least;
    out[static_cast<std::size_t>(j)] =
        static_cast<double>(at_least) / static_cast<double>(scores_multiset.size());
  }
  return out;
}

// Try every distinct p-value (plus zero) as a candidate significance level
// and return the smallest one that suppresses all multi-label sets.
double oracle_select_epsilon(const std::vector<std::vector<double>>& pvalues) {
  std::set<double> candidates{0.0};
  for (const std::vector<double>& p : pvalues)
    for (double v : p) candidates.insert(v);
  for (double epsilon : candidates) {
    bool any_multiple = false;
    for (const std::vector<double>& p : pvalues) {
      std::size_t in_set = 0;
      for (double v : p)
        if (v > epsilon) ++in_set;
      if (in_set > 1) any_multiple = true;
    }
    if (!any_multiple) return epsilon;
  }
  return 1.0;
}

TrainingIndex make_index(const std::vector<std::vector<double>>& points,
                         const std::vector<int>& labels, std::size_t k,
                         int num_classes) {
  TrainingIndex index;
  index.dim = points.front().size();
  index.k = k;
  index.num_classes = num_classes;
  for (const std::vector<double>& p : points)
    index.embeddings.insert(index.embeddings.end(), p.begin(), p.end());
  index.labels = labels;
  index.validate();
  return index;
}

TrainingIndex random_index(std::mt19937_64& rng, std::size_t count, std::size_t dim,
                           int classes, std::size_t k) {
  std::uniform_real_distribution<double> coord(-5.0, 5.0);
  std::uniform_int_distribution<int> label(0, classes - 1);
  std::vector<std::vector<double>> points(count, std::vector<double>(dim));
  std::vector<int> labels(count);
  for (std::size_t i = 0; i < count; ++i) {
    for (double& v : points[i]) v = coord(rng);
    labels[i] = label(rng);
  }
  return make_index(points, labels, k, classes);
}

CalibrationRecord record_from_scores(const std::vector<int>& scores, std::size_t k) {
  CalibrationRecord record;
  record.k = k;
  record.counts.assign(k + 1, 0);
  for (int s : scores) ++record.counts[static_cast<std::size_t>(s)];
  return record;
}

}  // namespace

TEST_CASE("nonconformity: self-match with k=1") {
  const TrainingIndex index =
      make_index({{0.0, 0.0}, {5.0, 5.0}}, {1, 0}, 1, 2);
  const std::vector<double> query{0.0, 0.0};
  CHECK(nonconformity(index, query, 1) == 0);
  CHECK(nonconformity(index, query, 0) == 1);
}

TEST_CASE("nonconformity: direct count over a mixed neighborhood") {
  // k=3 neighborhood of the origin holds labels {A, A, B}.
  const TrainingIndex index = make_index(
      {{0.1, 0.0}, {0.0, 0.1}, {0.2, 0.0}, {9.0, 9.0}}, {0, 0, 1, 2}, 3, 3);
  const std::vector<double> query{0.0, 0.0};
  CHECK(nonconformity(index, query, 0) == 1);
  CHECK(nonconformity(index, query, 1) == 2);
  CHECK(nonconformity(index, query, 2) == 3);
}

TEST_CASE("nonconformity: rejects bad labels and oversized k") {
  const TrainingIndex index =
      make_index({{0.0}, {1.0}}, {0, 1}, 2, 2);
  CHECK_THROWS_AS(nonconformity(index, std::vector<double>{0.0}, 7),
                  std::invalid_argument);
  TrainingIndex bad = index;
  bad.k = 3;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  CHECK_THROWS_AS(knn_indices(bad, std::vector<double>{0.0}), std::invalid_argument);
}

TEST_CASE("knn ties at equal distance resolve to the lower storage index") {
  const TrainingIndex index =
      make_index({{1.0, 0.0}, {-1.0, 0.0}, {3.0, 0.0}}, {0, 1, 1}, 1, 2);
  const std::vector<std::size_t> nn = knn_indices(index, std::vector<double>{0.0, 0.0});
  CHECK(nn == std::vector<std::size_t>{0});
}

TEST_CASE("nonconformity matches the brute-force sort oracle") {
  std::mt19937_64 rng(207);
  const TrainingIndex index = random_index(rng, 50, 2, 3, 5);
  std::uniform_real_distribution<double> coord(-5.0, 5.0);
  for (int q = 0; q < 20; ++q) {
    std::vector<double> query{coord(rng), coord(rng)};
    CHECK(knn_indices(index, query) == oracle_knn(index, query));
    for (int label = 0; label < 3; ++label) {
      const int score = nonconformity(index, query, label);
      CHECK(score == oracle_nonconformity(index, query, label));
      CHECK(score >= 0);
      CHECK(score <= static_cast<int>(index.k));
    }
  }
}

TEST_CASE("calibrate: training duplicates score zero with k=1") {
  const std::vector<std::vector<double>> points{{0.0, 0.0}, {4.0, 0.0}, {0.0, 4.0}};
  const std::vector<int> labels{0, 1, 2};
  const TrainingIndex index = make_index(points, labels, 1, 3);
  const CalibrationRecord record = calibrate(index, points, labels);
  CHECK(record.total() == 3);
  CHECK(record.counts[0] == 3);
  CHECK(record.counts[1] == 0);
}

TEST_CASE("calibrate: an all-other-label neighborhood scores k") {
  const TrainingIndex index = make_index(
      {{0.0, 0.0}, {0.1, 0.0}, {0.0, 0.1}}, {0, 0, 0}, 3, 2);
  const CalibrationRecord record =
      calibrate(index, {{0.05, 0.05}}, std::vector<int>{1});
  CHECK(record.total() == 1);
  CHECK(record.counts[3] == 1);
}

TEST_CASE("calibrate: rejects an empty calibration set") {
  const TrainingIndex index = make_index({{0.0}, {1.0}}, {0, 1}, 1, 2);
  CHECK_THROWS_AS(calibrate(index, {}, std::vector<int>{}), std::invalid_argument);
}

TEST_CASE("calibrate matches per-example oracle recomputation") {
  std::mt19937_64 rng(209);
  const TrainingIndex index = random_index(rng, 60, 3, 3, 7);
  std::uniform_real_distribution<double> coord(-5.0, 5.0);
  std::uniform_int_distribution<int> label(0, 2);
  std::vector<std::vector<double>> calib(40, std::vector<double>(3));
  std::vector<int> calib_labels(40);
  for (std::size_t i = 0; i < calib.size(); ++i) {
    for (double& v : calib[i]) v = coord(rng);
    calib_labels[i] = label(rng);
  }
  const CalibrationRecord record = calibrate(index, calib, calib_labels);
  CHECK(record.total() == calib.size());

  std::vector<std::uint64_t> expected(index.k + 1, 0);
  for (std::size_t i = 0; i < calib.size(); ++i)
    ++expected[static_cast<std::size_t>(
        oracle_nonconformity(index, calib[i], calib_labels[i]))];
  CHECK(record.counts == expected);
}

TEST_CASE("p_values: extreme test scores hit the boundaries") {
  // A = {0, 1, 2, 3} with k = 4; a same-label query at a stored cluster
  // scores 0 (p = 4/4) and an other-label query scores 4 (p = 0/4).
  const TrainingIndex index = make_index(
      {{0.0, 0.0}, {0.1, 0.0}, {0.0, 0.1}, {0.1, 0.1}}, {0, 0, 0, 0}, 4, 2);
  const CalibrationRecord record = record_from_scores({0, 1, 2, 3}, 4);
  const std::vector<double> p = p_values(record, index, std::vector<double>{0.05, 0.05});
  CHECK(p[0] == doctest::Approx(1.0));
  CHECK(p[1] == doctest::Approx(0.0));
}

TEST_CASE("p_values: rejects a k mismatch") {
  const TrainingIndex index = make_index({{0.0}, {1.0}}, {0, 1}, 2, 2);
  const CalibrationRecord record = record_from_scores({0, 1}, 1);
  CHECK_THROWS_AS(p_values(record, index, std::vector<double>{0.0}),
                  std::invalid_argument);
}

TEST_CASE("p_values match an independent counting oracle") {
  std::mt19937_64 rng(211);
  const TrainingIndex index = random_index(rng, 80, 2, 4, 9);
  std::uniform_real_distribution<double> coord(-5.0, 5.0);
  std::uniform_int_distribution<int> label(0, 3);

  std::vector<std::vector<double>> calib(50, std::vector<double>(2));
  std::vector<int> calib_labels(50);
  std::vector<int> scores;
  for (std::size_t i = 0; i < calib.size(); ++i) {
    for (double& v : calib[i]) v = coord(rng);
    calib_labels[i] = label(rng);
    scores.push_back(oracle_nonconformity(index, calib[i], calib_labels[i]));
  }
  const CalibrationRecord record = calibrate(index, calib, calib_labels);

  for (int q = 0; q < 25; ++q) {
    std::vector<double> query{coord(rng), coord(rng)};
    const std::vector<double> p = p_values(record, index, query);
    const std::vector<double> expected = oracle_pvalues(scores, index, query);
    REQUIRE(p.size() == expected.size());
    for (std::size_t j = 0; j < p.size(); ++j) {
      CHECK(p[j] == doctest::Approx(expected[j]).epsilon(1e-12));
      // Every p-value is an exact multiple of 1/|A| inside [0, 1].
      CHECK(p[j] >= 0.0);
      CHECK(p[j] <= 1.0);
      const double scaled = p[j] * static_cast<double>(record.total());
      CHECK(std::abs(scaled - std::round(scaled)) < 1e-9);
    }
  }
}

TEST_CASE("prediction_set keeps labels with p strictly above epsilon") {
  const std::vector<double> p{0.5, 0.01};
  CHECK(prediction_set(p, 0.1).labels == std::vector<int>{0});
  CHECK(prediction_set(p, 1.0).labels.empty());           // nothing exceeds 1
  CHECK(prediction_set(p, 0.0).labels == std::vector<int>{0, 1});
  CHECK(prediction_set(std::vector<double>{0.5, 0.0}, 0.0).labels ==
        std::vector<int>{0});                             // zero p stays out
  CHECK_THROWS_AS(prediction_set(p, -0.1), std::invalid_argument);
  CHECK_THROWS_AS(prediction_set(p, 1.5), std::invalid_argument);
}

TEST_CASE("prediction sets are nested across significance levels") {
  std::mt19937_64 rng(213);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int iter = 0; iter < 200; ++iter) {
    std::vector<double> p(6);
    for (double& v : p) v = unit(rng);
    const double e1 = unit(rng);
    const double e2 = unit(rng);
    const double lo = std::min(e1, e2);
    const double hi = std::max(e1, e2);
    const PredictionSet big = prediction_set(p, lo);
    const PredictionSet small = prediction_set(p, hi);
    for (int label : small.labels) CHECK(big.contains(label));
  }
}

TEST_CASE("select_epsilon: all-singleton validation needs no slack") {
  const std::vector<std::vector<double>> pvalues{
      {0.9, 0.0, 0.0}, {0.0, 0.7, 0.0}, {0.0, 0.0, 1.0}};
  CHECK(select_epsilon(pvalues) == 0.0);
}

TEST_CASE("select_epsilon: maximum of the second-largest p-values") {
  const std::vector<std::vector<double>> pvalues{
      {0.9, 0.3, 0.1}, {0.8, 0.05, 0.0}};
  CHECK(select_epsilon(pvalues) == doctest::Approx(0.3));
}

TEST_CASE("select_epsilon: rejects an empty validation set") {
  CHECK_THROWS_AS(select_epsilon({}), std::invalid_argument);
}

TEST_CASE("select_epsilon matches the grid-scan oracle") {
  std::mt19937_64 rng(217);
  std::uniform_int_distribution<int> quantize(0, 20);
  for (int iter = 0; iter < 40; ++iter) {
    std::vector<std::vector<double>> pvalues(100, std::vector<double>(5));
    for (std::vector<double>& p : pvalues)
      for (double& v : p) v = static_cast<double>(quantize(rng)) / 20.0;
    const double selected = select_epsilon(pvalues);
    CHECK(selected == doctest::Approx(oracle_select_epsilon(pvalues)).epsilon(1e-12));

    // The defining property, verified directly: no multi-label set survives
    // at the selected level.
    for (const std::vector<double>& p : pvalues)
      CHECK(prediction_set(p, selected).labels.size() <= 1);
  }
}

TEST_CASE("index digests change with content") {
  std::mt19937_64 rng(219);
  const TrainingIndex a = random_index(rng, 10, 2, 2, 3);
  TrainingIndex b = a;
  CHECK(a.digest() == b.digest());
  b.embeddings[0] += 1e-9;
  CHECK(a.digest() != b.digest());
  TrainingIndex c = a;
  c.labels[3] = 1 - c.labels[3];
  CHECK(a.digest() != c.digest());
}

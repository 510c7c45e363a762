#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "streamcp/embedder.hpp"

// Inductive conformal prediction with a k-NN nonconformity measure: the score
// of (x, y) is how many of x's k nearest proper-training embeddings carry a
// label other than y. Calibration scores turn test scores into empirical
// p-values, and a label enters the prediction set at significance epsilon
// exactly when its p-value exceeds epsilon.

namespace streamcp {

struct TrainingIndex {
  std::size_t dim = 0;
  std::size_t k = 0;
  int num_classes = 0;
  std::vector<double> embeddings;  // size() x dim, row-major
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::span<const double> embedding(std::size_t i) const {
    return {embeddings.data() + i * dim, dim};
  }

  void validate() const;       // throws std::invalid_argument
  std::uint64_t digest() const;  // content fingerprint for artifact binding
};

// Embeds `data` with `model` and indexes the results.
TrainingIndex build_training_index(const EmbedderModel& model,
                                   std::span<const LabeledExample> data,
                                   std::size_t k, int num_classes);

// Indexes of the k nearest stored embeddings under Euclidean distance, ties
// broken by ascending storage position. Returned in ascending index order.
std::vector<std::size_t> knn_indices(const TrainingIndex& index,
                                     std::span<const double> embedding);

// |{i in Omega : i != label}| where Omega is the k-nearest-neighbor label
// multiset. Integer in [0, k].
int nonconformity(const TrainingIndex& index, std::span<const double> embedding,
                  int label);

struct CalibrationRecord {
  std::size_t k = 0;
  std::vector<std::uint64_t> counts;  // histogram of scores 0..k
  std::uint64_t index_digest = 0;
  double epsilon_star = -1.0;  // filled once selected; < 0 means unset

  std::uint64_t total() const;
  void validate() const;
};

// Scores every calibration example against its true label.
CalibrationRecord calibrate(const TrainingIndex& index,
                            const std::vector<std::vector<double>>& embeddings,
                            std::span<const int> labels);

// p[j] = |{a in A : a >= nonconformity(index, embedding, j)}| / |A| for every
// label j in [0, num_classes).
std::vector<double> p_values(const CalibrationRecord& record,
                             const TrainingIndex& index,
                             std::span<const double> embedding);

struct PredictionSet {
  std::vector<int> labels;  // ascending
  double epsilon = 0.0;

  bool singleton() const { return labels.size() == 1; }
  bool contains(int label) const;
};

// {j : p[j] > epsilon}, strict inequality.
PredictionSet prediction_set(std::span<const double> pvalues, double epsilon);

// Smallest epsilon at which no validation input yields a multi-label set:
// the maximum second-largest p-value across inputs.
double select_epsilon(const std::vector<std::vector<double>>& validation_pvalues);

}  // namespace streamcp

#include "streamcp/icp.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <queue>
#include <stdexcept>

#include "streamcp/kernels.hpp"

namespace streamcp {

namespace {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ull;
constexpr std::uint64_t kFnvPrime = 1099511628211ull;

void fnv_mix(std::uint64_t& h, std::uint64_t value) {
  for (int byte = 0; byte < 8; ++byte) {
    h ^= (value >> (byte * 8)) & 0xffu;
    h *= kFnvPrime;
  }
}

}  // namespace

void TrainingIndex::validate() const {
  if (dim == 0) throw std::invalid_argument("index: embedding dim must be >= 1");
  if (labels.empty()) throw std::invalid_argument("index: no stored embeddings");
  if (embeddings.size() != labels.size() * dim)
    throw std::invalid_argument("index: embedding storage size mismatch");
  if (k == 0 || k > size())
    throw std::invalid_argument("index: k must be in [1, stored embeddings]");
  if (num_classes < 2)
    throw std::invalid_argument("index: needs at least two classes");
  for (double v : embeddings)
    if (!std::isfinite(v))
      throw std::invalid_argument("index: non-finite embedding value");
  for (int label : labels)
    if (label < 0 || label >= num_classes)
      throw std::invalid_argument("index: label outside [0, classes)");
}

std::uint64_t TrainingIndex::digest() const {
  std::uint64_t h = kFnvOffset;
  fnv_mix(h, dim);
  fnv_mix(h, k);
  fnv_mix(h, static_cast<std::uint64_t>(num_classes));
  fnv_mix(h, size());
  for (double v : embeddings) fnv_mix(h, std::bit_cast<std::uint64_t>(v));
  for (int label : labels) fnv_mix(h, static_cast<std::uint64_t>(label));
  return h;
}

TrainingIndex build_training_index(const EmbedderModel& model,
                                   std::span<const LabeledExample> data,
                                   std::size_t k, int num_classes) {
  TrainingIndex index;
  index.dim = model.embedding_dim();
  index.k = k;
  index.num_classes = num_classes;
  index.embeddings.reserve(data.size() * index.dim);
  index.labels.reserve(data.size());
  for (const LabeledExample& example : data) {
    const std::vector<double> v = embed(model, example.features);
    index.embeddings.insert(index.embeddings.end(), v.begin(), v.end());
    index.labels.push_back(example.label);
  }
  index.validate();
  return index;
}

std::vector<std::size_t> knn_indices(const TrainingIndex& index,
                                     std::span<const double> embedding) {
  if (embedding.size() != index.dim)
    throw std::invalid_argument("knn: query dimension mismatch");
  if (index.k > index.size())
    throw std::invalid_argument("knn: k exceeds index size");

  // Max-heap of the best k seen so far, ordered by (distance, index) so the
  // top is the current worst. Candidates arrive in ascending storage order,
  // so replacing only on strictly smaller distance keeps the lowest index on
  // ties.
  std::priority_queue<std::pair<double, std::size_t>> heap;
  for (std::size_t i = 0; i < index.size(); ++i) {
    const double d = kernels::squared_distance(embedding, index.embedding(i));
    if (heap.size() < index.k) {
      heap.emplace(d, i);
    } else if (d < heap.top().first) {
      heap.pop();
      heap.emplace(d, i);
    }
  }

  std::vector<std::size_t> result;
  result.reserve(index.k);
  while (!heap.empty()) {
    result.push_back(heap.top().second);
    heap.pop();
  }
  std::sort(result.begin(), result.end());
  return result;
}

int nonconformity(const TrainingIndex& index, std::span<const double> embedding,
                  int label) {
  if (label < 0 || label >= index.num_classes)
    throw std::invalid_argument("nonconformity: label outside [0, classes)");
  int score = 0;
  for (std::size_t i : knn_indices(index, embedding))
    if (index.labels[i] != label) ++score;
  return score;
}

std::uint64_t CalibrationRecord::total() const {
  std::uint64_t sum = 0;
  for (std::uint64_t c : counts) sum += c;
  return sum;
}

void CalibrationRecord::validate() const {
  if (k == 0) throw std::invalid_argument("calibration: k must be >= 1");
  if (counts.size() != k + 1)
    throw std::invalid_argument("calibration: score histogram must cover 0..k");
  if (total() == 0)
    throw std::invalid_argument("calibration: empty score multiset");
}

CalibrationRecord calibrate(const TrainingIndex& index,
                            const std::vector<std::vector<double>>& embeddings,
                            std::span<const int> labels) {
  if (embeddings.empty())
    throw std::invalid_argument("calibrate: empty calibration set");
  if (embeddings.size() != labels.size())
    throw std::invalid_argument("calibrate: embeddings/labels size mismatch");

  CalibrationRecord record;
  record.k = index.k;
  record.counts.assign(index.k + 1, 0);
  record.index_digest = index.digest();
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    const int score = nonconformity(index, embeddings[i], labels[i]);
    ++record.counts[static_cast<std::size_t>(score)];
  }
  record.validate();
  return record;
}

std::vector<double> p_values(const CalibrationRecord& record,
                             const TrainingIndex& index,
                             std::span<const double> embedding) {
  record.validate();
  if (record.k != index.k)
    throw std::invalid_argument("p_values: record and index disagree on k");

  // One k-NN search serves every candidate label: the neighborhood does not
  // depend on y, so score(y) = k - (occurrences of y among the neighbors).
  std::vector<std::uint64_t> label_counts(
      static_cast<std::size_t>(index.num_classes), 0);
  for (std::size_t i : knn_indices(index, embedding))
    ++label_counts[static_cast<std::size_t>(index.labels[i])];

  // at_least[s] = |{a in A : a >= s}|
  std::vector<std::uint64_t> at_least(record.k + 2, 0);
  for (std::size_t s = record.k + 1; s-- > 0;)
    at_least[s] = at_least[s + 1] + record.counts[s];

  const double inv_total = 1.0 / static_cast<double>(record.total());
  std::vector<double> result(static_cast<std::size_t>(index.num_classes));
  for (std::size_t j = 0; j < result.size(); ++j) {
    const std::size_t score = record.k - static_cast<std::size_t>(label_counts[j]);
    result[j] = static_cast<double>(at_least[score]) * inv_total;
  }
  return result;
}

bool PredictionSet::contains(int label) const {
  return std::binary_search(labels.begin(), labels.end(), label);
}

PredictionSet prediction_set(std::span<const double> pvalues, double epsilon) {
  if (epsilon < 0.0 || epsilon > 1.0)
    throw std::invalid_argument("prediction_set: epsilon outside [0, 1]");
  PredictionSet set;
  set.epsilon = epsilon;
  for (std::size_t j = 0; j < pvalues.size(); ++j)
    if (pvalues[j] > epsilon) set.labels.push_back(static_cast<int>(j));
  return set;
}

double select_epsilon(const std::vector<std::vector<double>>& validation_pvalues) {
  if (validation_pvalues.empty())
    throw std::invalid_argument("select_epsilon: empty validation set");
  double epsilon = 0.0;
  for (const std::vector<double>& p : validation_pvalues) {
    double largest = 0.0;
    double second = 0.0;
    for (double value : p) {
      if (value > largest) {
        second = largest;
        largest = value;
      } else if (value > second) {
        second = value;
      }
    }
    epsilon = std::max(epsilon, second);
  }
  return epsilon;
}

}  // namespace streamcp

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

// Distance-learning embedder: a small fully connected network trained with a
// hinged triplet loss over hard-mined triplets. The network maps feature
// vectors into an embedding space where same-class inputs sit close together
// and different-class inputs sit at least `margin` further apart.

namespace streamcp {

struct LabeledExample {
  std::vector<double> features;
  int label = 0;
};

enum class Activation { linear, tanh };

const char* activation_name(Activation a);
std::optional<Activation> activation_from_name(const std::string& name);

struct Layer {
  std::size_t inputs = 0;
  std::size_t outputs = 0;
  std::vector<double> weights;  // row-major, outputs x inputs
  std::vector<double> bias;     // outputs
};

struct EmbedderModel {
  std::vector<Layer> layers;
  Activation hidden_activation = Activation::tanh;

  std::size_t input_dim() const;
  std::size_t embedding_dim() const;
  bool all_finite() const;
};

// Indices into the batch that produced the triplet. Anchor and positive share
// a label, the negative has a different one, and the negative sits closer to
// the anchor than the (hardest) positive does.
struct Triplet {
  std::size_t anchor = 0;
  std::size_t positive = 0;
  std::size_t negative = 0;
};

struct TrainingConfig {
  double margin = 0.2;
  double learning_rate = 0.05;
  std::size_t epochs = 15;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  std::vector<std::size_t> hidden_dims{64, 64};
  std::size_t embedding_dim = 32;

  void validate() const;  // throws std::invalid_argument
};

// Forward pass. Pure: identical (model, features) gives identical output.
// Throws std::invalid_argument on a feature-dimension mismatch.
std::vector<double> embed(const EmbedderModel& model,
                          std::span<const double> features);

// max(|a - p| - |a - n| + margin, 0) with Euclidean norms.
double triplet_loss(std::span<const double> anchor,
                    std::span<const double> positive,
                    std::span<const double> negative, double margin);

// Hard mining within one batch: each element with at least one same-label
// partner anchors a search; its hardest (farthest) positive is fixed and one
// triplet is emitted per negative strictly closer to the anchor than that
// positive. Equidistant candidates resolve to the lowest batch index.
std::vector<Triplet> mine_triplets(
    const std::vector<std::vector<double>>& embeddings,
    std::span<const int> labels);

// Fresh model with seeded uniform init in [-r, r], r = 1/sqrt(fan_in).
EmbedderModel make_seeded_model(std::size_t input_dim,
                                const TrainingConfig& config);

// Mean triplet loss over the triplets mined from `batch_indices` under the
// current model, plus its gradient for every parameter (laid out like the
// model's layers). Empty when mining produces no triplets. The hinge
// subgradient at the boundary is zero.
struct BatchGradient {
  double loss = 0.0;
  std::vector<Layer> layers;
};
std::optional<BatchGradient> triplet_batch_gradient(
    const EmbedderModel& model, std::span<const LabeledExample> data,
    std::span<const std::size_t> batch_indices, double margin);

// Mini-batch gradient descent on the mined-triplet loss. Deterministic for a
// fixed seed. Throws std::invalid_argument when fewer than two classes are
// present or the config is invalid.
EmbedderModel train_embedder(std::span<const LabeledExample> data,
                             const TrainingConfig& config);

}  // namespace streamcp

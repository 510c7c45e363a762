#include "streamcp/embedder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <unordered_set>

#include "streamcp/kernels.hpp"

namespace streamcp {

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::linear: return "linear";
    case Activation::tanh: return "tanh";
  }
  return "unknown";
}

std::optional<Activation> activation_from_name(const std::string& name) {
  if (name == "linear") return Activation::linear;
  if (name == "tanh") return Activation::tanh;
  return std::nullopt;
}

std::size_t EmbedderModel::input_dim() const {
  return layers.empty() ? 0 : layers.front().inputs;
}

std::size_t EmbedderModel::embedding_dim() const {
  return layers.empty() ? 0 : layers.back().outputs;
}

bool EmbedderModel::all_finite() const {
  for (const Layer& layer : layers) {
    for (double w : layer.weights)
      if (!std::isfinite(w)) return false;
    for (double b : layer.bias)
      if (!std::isfinite(b)) return false;
  }
  return true;
}

void TrainingConfig::validate() const {
  if (margin < 0.0) throw std::invalid_argument("training: margin must be >= 0");
  if (!(learning_rate > 0.0))
    throw std::invalid_argument("training: learning rate must be > 0");
  if (batch_size < 2)
    throw std::invalid_argument("training: batch size must be >= 2");
  if (embedding_dim == 0)
    throw std::invalid_argument("training: embedding dim must be >= 1");
  for (std::size_t h : hidden_dims)
    if (h == 0) throw std::invalid_argument("training: hidden dims must be >= 1");
}

namespace {

void apply_activation(Activation a, std::span<double> values) {
  if (a == Activation::tanh) {
    for (double& v : values) v = std::tanh(v);
  }
}

// Forward pass keeping every layer's post-activation output; activations[0]
// is the input, activations.back() the embedding.
std::vector<std::vector<double>> forward_trace(const EmbedderModel& model,
                                               std::span<const double> features) {
  if (model.layers.empty())
    throw std::invalid_argument("embed: model has no layers");
  if (features.size() != model.input_dim())
    throw std::invalid_argument("embed: feature dimension " +
                                std::to_string(features.size()) +
                                " does not match model input dimension " +
                                std::to_string(model.input_dim()));
  std::vector<std::vector<double>> activations;
  activations.reserve(model.layers.size() + 1);
  activations.emplace_back(features.begin(), features.end());
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const Layer& layer = model.layers[l];
    std::vector<double> out(layer.outputs);
    kernels::affine(layer.weights, layer.bias, activations.back(), out);
    if (l + 1 < model.layers.size())
      apply_activation(model.hidden_activation, out);
    activations.push_back(std::move(out));
  }
  return activations;
}

std::vector<Layer> zero_gradients(const EmbedderModel& model) {
  std::vector<Layer> grads;
  grads.reserve(model.layers.size());
  for (const Layer& layer : model.layers) {
    Layer g;
    g.inputs = layer.inputs;
    g.outputs = layer.outputs;
    g.weights.assign(layer.weights.size(), 0.0);
    g.bias.assign(layer.bias.size(), 0.0);
    grads.push_back(std::move(g));
  }
  return grads;
}

// Accumulates d(loss)/d(parameters) for one example given the gradient at
// its embedding.
void backward(const EmbedderModel& model,
              const std::vector<std::vector<double>>& activations,
              std::span<const double> embedding_grad,
              std::vector<Layer>& grads) {
  std::vector<double> delta(embedding_grad.begin(), embedding_grad.end());
  for (std::size_t l = model.layers.size(); l-- > 0;) {
    const Layer& layer = model.layers[l];
    Layer& grad = grads[l];
    const std::vector<double>& input = activations[l];
    for (std::size_t r = 0; r < layer.outputs; ++r) {
      grad.bias[r] += delta[r];
      kernels::axpy(delta[r], input,
                    std::span<double>(grad.weights.data() + r * layer.inputs,
                                      layer.inputs));
    }
    if (l == 0) break;
    std::vector<double> prev(layer.inputs, 0.0);
    for (std::size_t r = 0; r < layer.outputs; ++r) {
      kernels::axpy(delta[r],
                    std::span<const double>(layer.weights.data() + r * layer.inputs,
                                            layer.inputs),
                    prev);
    }
    // The layer below is a hidden layer; fold in its activation derivative
    // (tanh' = 1 - tanh^2, recovered from the stored post-activation).
    if (model.hidden_activation == Activation::tanh) {
      const std::vector<double>& post = activations[l];
      for (std::size_t c = 0; c < prev.size(); ++c)
        prev[c] *= 1.0 - post[c] * post[c];
    }
    delta = std::move(prev);
  }
}

EmbedderModel init_model(std::size_t input_dim, const TrainingConfig& config,
                         std::mt19937_64& rng) {
  std::vector<std::size_t> dims;
  dims.push_back(input_dim);
  dims.insert(dims.end(), config.hidden_dims.begin(), config.hidden_dims.end());
  dims.push_back(config.embedding_dim);

  EmbedderModel model;
  model.hidden_activation = Activation::tanh;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    Layer layer;
    layer.inputs = dims[l];
    layer.outputs = dims[l + 1];
    const double r = 1.0 / std::sqrt(static_cast<double>(layer.inputs));
    std::uniform_real_distribution<double> dist(-r, r);
    layer.weights.resize(layer.inputs * layer.outputs);
    for (double& w : layer.weights) w = dist(rng);
    layer.bias.assign(layer.outputs, 0.0);
    model.layers.push_back(std::move(layer));
  }
  return model;
}

}  // namespace

std::vector<double> embed(const EmbedderModel& model,
                          std::span<const double> features) {
  return forward_trace(model, features).back();
}

double triplet_loss(std::span<const double> anchor,
                    std::span<const double> positive,
                    std::span<const double> negative, double margin) {
  if (anchor.size() != positive.size() || anchor.size() != negative.size())
    throw std::invalid_argument("triplet_loss: embedding dimensions differ");
  if (margin < 0.0)
    throw std::invalid_argument("triplet_loss: margin must be >= 0");
  const double d_ap = std::sqrt(kernels::squared_distance(anchor, positive));
  const double d_an = std::sqrt(kernels::squared_distance(anchor, negative));
  return std::max(d_ap - d_an + margin, 0.0);
}

std::vector<Triplet> mine_triplets(
    const std::vector<std::vector<double>>& embeddings,
    std::span<const int> labels) {
  const std::size_t n = embeddings.size();
  if (labels.size() != n)
    throw std::invalid_argument("mine_triplets: embeddings/labels size mismatch");

  // Pairwise squared distances; squaring preserves every comparison below.
  std::vector<double> dist2(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = kernels::squared_distance(embeddings[i], embeddings[j]);
      dist2[i * n + j] = d;
      dist2[j * n + i] = d;
    }
  }

  std::vector<Triplet> triplets;
  for (std::size_t a = 0; a < n; ++a) {
    // Hardest positive: same label, farthest from the anchor, lowest index on
    // ties.
    std::size_t positive = n;
    double best = -1.0;
    for (std::size_t p = 0; p < n; ++p) {
      if (p == a || labels[p] != labels[a]) continue;
      if (dist2[a * n + p] > best) {
        best = dist2[a * n + p];
        positive = p;
      }
    }
    if (positive == n) continue;  // no same-label partner
    for (std::size_t neg = 0; neg < n; ++neg) {
      if (labels[neg] == labels[a]) continue;
      if (dist2[a * n + neg] < best)
        triplets.push_back(Triplet{a, positive, neg});
    }
  }
  return triplets;
}

EmbedderModel make_seeded_model(std::size_t input_dim,
                                const TrainingConfig& config) {
  config.validate();
  if (input_dim == 0)
    throw std::invalid_argument("model: input dim must be >= 1");
  std::mt19937_64 rng(config.seed);
  return init_model(input_dim, config, rng);
}

std::optional<BatchGradient> triplet_batch_gradient(
    const EmbedderModel& model, std::span<const LabeledExample> data,
    std::span<const std::size_t> batch_indices, double margin) {
  const std::size_t batch = batch_indices.size();
  std::vector<std::vector<std::vector<double>>> traces(batch);
  std::vector<std::vector<double>> embeddings(batch);
  std::vector<int> labels(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const LabeledExample& example = data[batch_indices[b]];
    traces[b] = forward_trace(model, example.features);
    embeddings[b] = traces[b].back();
    labels[b] = example.label;
  }

  const std::vector<Triplet> triplets = mine_triplets(embeddings, labels);
  if (triplets.empty()) return std::nullopt;
  const double inv_count = 1.0 / static_cast<double>(triplets.size());

  const std::size_t dim = model.embedding_dim();
  std::vector<std::vector<double>> embedding_grads(
      batch, std::vector<double>(dim, 0.0));
  double loss_sum = 0.0;
  for (const Triplet& t : triplets) {
    const std::vector<double>& ea = embeddings[t.anchor];
    const std::vector<double>& ep = embeddings[t.positive];
    const std::vector<double>& en = embeddings[t.negative];
    const double d_ap = std::sqrt(kernels::squared_distance(ea, ep));
    const double d_an = std::sqrt(kernels::squared_distance(ea, en));
    const double hinge = d_ap - d_an + margin;
    if (hinge <= 0.0) continue;  // hinge subgradient: inactive branch is zero
    loss_sum += hinge;
    // d|ea-ep|/d(ea) = (ea-ep)/|ea-ep|; undefined at zero distance, where the
    // subgradient taken is zero.
    for (std::size_t c = 0; c < dim; ++c) {
      const double u_ap = d_ap > 0.0 ? (ea[c] - ep[c]) / d_ap : 0.0;
      const double u_an = d_an > 0.0 ? (ea[c] - en[c]) / d_an : 0.0;
      embedding_grads[t.anchor][c] += (u_ap - u_an) * inv_count;
      embedding_grads[t.positive][c] -= u_ap * inv_count;
      embedding_grads[t.negative][c] += u_an * inv_count;
    }
  }

  BatchGradient result;
  result.loss = loss_sum * inv_count;
  result.layers = zero_gradients(model);
  for (std::size_t b = 0; b < batch; ++b)
    backward(model, traces[b], embedding_grads[b], result.layers);
  return result;
}

EmbedderModel train_embedder(std::span<const LabeledExample> data,
                             const TrainingConfig& config) {
  config.validate();
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  const std::size_t dim = data.front().features.size();
  std::unordered_set<int> classes;
  for (const LabeledExample& example : data) {
    if (example.features.size() != dim)
      throw std::invalid_argument("train: inconsistent feature dimensions");
    classes.insert(example.label);
  }
  if (classes.size() < 2)
    throw std::invalid_argument(
        "train: dataset holds a single class; triplet training needs at least two");

  std::mt19937_64 rng(config.seed);
  EmbedderModel model = init_model(dim, config, rng);

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t count = std::min(config.batch_size, order.size() - start);
      if (count < 2) continue;
      auto grad = triplet_batch_gradient(
          model, data, std::span<const std::size_t>(order.data() + start, count),
          config.margin);
      if (!grad) continue;
      for (std::size_t l = 0; l < model.layers.size(); ++l) {
        kernels::axpy(-config.learning_rate, grad->layers[l].weights,
                      model.layers[l].weights);
        kernels::axpy(-config.learning_rate, grad->layers[l].bias,
                      model.layers[l].bias);
      }
    }
  }
  if (!model.all_finite())
    throw std::runtime_error("train: parameters diverged; lower the learning rate");
  return model;
}

}  // namespace streamcp

#include "streamcp/synth.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace streamcp {

void SyntheticConfig::validate() const {
  if (classes < 2) throw std::invalid_argument("synth: need at least two classes");
  if (input_dim < static_cast<std::size_t>(classes))
    throw std::invalid_argument(
        "synth: input_dim must be >= classes (prototypes occupy one axis each)");
  if (!(separation > 0.0))
    throw std::invalid_argument("synth: separation must be > 0");
  if (sigma_initial < sigma_final)
    throw std::invalid_argument("synth: noise schedule must be non-increasing");
  if (sigma_final < 0.0 || sequence_jitter < 0.0)
    throw std::invalid_argument("synth: noise levels must be >= 0");
  if (frames_per_sequence == 0)
    throw std::invalid_argument("synth: frames_per_sequence must be >= 1");
  if (train_count == 0 || calibration_count == 0 || validation_count == 0 ||
      iid_test_count == 0 || sequence_test_count == 0)
    throw std::invalid_argument("synth: all split counts must be positive");
}

double SyntheticConfig::sigma_at(std::size_t frame) const {
  if (frames_per_sequence <= 1) return sigma_final;
  const double t = static_cast<double>(frame) /
                   static_cast<double>(frames_per_sequence - 1);
  return sigma_initial + (sigma_final - sigma_initial) * t;
}

namespace {

std::vector<double> noisy_point(const std::vector<double>& center, double sigma,
                                std::mt19937_64& rng) {
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<double> point(center.size());
  for (std::size_t d = 0; d < point.size(); ++d)
    point[d] = center[d] + sigma * noise(rng);
  return point;
}

std::vector<LabeledExample> iid_split(const std::vector<std::vector<double>>& prototypes,
                                      std::size_t count, double sigma,
                                      std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(0, static_cast<int>(prototypes.size()) - 1);
  std::vector<LabeledExample> split;
  split.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const int label = pick(rng);
    split.push_back({noisy_point(prototypes[static_cast<std::size_t>(label)], sigma, rng),
                     label});
  }
  return split;
}

}  // namespace

GeneratedData generate(const SyntheticConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);

  GeneratedData data;
  // One scaled coordinate axis per class puts every prototype pair exactly
  // `separation` apart.
  const double radius = config.separation / std::sqrt(2.0);
  data.prototypes.assign(static_cast<std::size_t>(config.classes),
                         std::vector<double>(config.input_dim, 0.0));
  for (int c = 0; c < config.classes; ++c)
    data.prototypes[static_cast<std::size_t>(c)][static_cast<std::size_t>(c)] = radius;

  data.train = iid_split(data.prototypes, config.train_count, config.sigma_final, rng);
  data.calibration =
      iid_split(data.prototypes, config.calibration_count, config.sigma_final, rng);
  data.validation =
      iid_split(data.prototypes, config.validation_count, config.sigma_final, rng);
  data.iid_test =
      iid_split(data.prototypes, config.iid_test_count, config.sigma_final, rng);

  std::uniform_int_distribution<int> pick(0, config.classes - 1);
  data.sequence_test.frames_per_sequence = config.frames_per_sequence;
  data.sequence_test.sequences.reserve(config.sequence_test_count);
  for (std::size_t s = 0; s < config.sequence_test_count; ++s) {
    Sequence sequence;
    sequence.label = pick(rng);
    const std::vector<double> latent = noisy_point(
        data.prototypes[static_cast<std::size_t>(sequence.label)],
        config.sequence_jitter, rng);
    sequence.frames.reserve(config.frames_per_sequence);
    for (std::size_t t = 0; t < config.frames_per_sequence; ++t)
      sequence.frames.push_back(noisy_point(latent, config.sigma_at(t), rng));
    data.sequence_test.sequences.push_back(std::move(sequence));
  }
  return data;
}

}  // namespace streamcp

#pragma once

#include <cstdint>
#include <vector>

#include "streamcp/embedder.hpp"

// Seeded synthetic data: well-separated class prototypes plus isotropic
// Gaussian noise. IID splits draw at the terminal noise level; test
// sequences model a degrading sensor by starting at sigma_initial and
// shrinking linearly to sigma_final over the frames, with a per-sequence
// latent offset so frames are correlated rather than IID.

namespace streamcp {

struct SyntheticConfig {
  int classes = 10;
  std::size_t input_dim = 16;
  double separation = 6.0;       // exact pairwise prototype distance
  double sigma_initial = 3.0;    // per-coordinate noise at frame 0
  double sigma_final = 0.5;      // per-coordinate noise for IID draws / last frame
  double sequence_jitter = 0.5;  // per-coordinate sigma of the latent offset
  std::size_t frames_per_sequence = 30;
  std::size_t train_count = 2000;
  std::size_t calibration_count = 1000;
  std::size_t validation_count = 1000;
  std::size_t iid_test_count = 2000;
  std::size_t sequence_test_count = 200;
  std::uint64_t seed = 0;

  void validate() const;  // throws std::invalid_argument
  double sigma_at(std::size_t frame) const;
};

struct Sequence {
  int label = 0;
  std::vector<std::vector<double>> frames;
};

struct SequenceDataset {
  std::vector<Sequence> sequences;
  std::size_t frames_per_sequence = 0;
};

struct GeneratedData {
  std::vector<LabeledExample> train;
  std::vector<LabeledExample> calibration;
  std::vector<LabeledExample> validation;
  std::vector<LabeledExample> iid_test;
  SequenceDataset sequence_test;
  std::vector<std::vector<double>> prototypes;
};

// Deterministic per seed.
GeneratedData generate(const SyntheticConfig& config);

}  // namespace streamcp

#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "streamcp/consensus.hpp"
#include "streamcp/synth.hpp"

// Replays sequence datasets through the trained pipeline and produces the
// evaluation tables: per-frame error curves and the (epsilon, k_consecutive)
// sweep.

namespace streamcp {

struct PipelineHandles {
  const EmbedderModel& model;
  const TrainingIndex& index;
  const CalibrationRecord& record;
};

// Embeds one sequence's frames and runs the consensus loop over them.
SequenceOutcome classify_sequence(const Sequence& sequence,
                                  const PipelineHandles& pipeline,
                                  const ConsensusConfig& config,
                                  std::vector<FrameTrace>* trace = nullptr);

// errors[t] = fraction of sequences whose frame-t prediction set misses the
// true label.
std::vector<double> per_frame_error(const SequenceDataset& dataset,
                                    const PipelineHandles& pipeline,
                                    double epsilon);

struct SweepCell {
  double epsilon = 0.0;
  std::size_t k_consecutive = 0;
  double error_rate = 0.0;      // wrong decisions / decided (NaN if none decided)
  double undecided_rate = 0.0;  // undecided / sequences
  double mean_frames = 0.0;     // frames consumed per sequence; undecided
                                // sequences consume the full length
};

struct SweepResult {
  std::vector<SweepCell> cells;  // ordered by (epsilon, k_consecutive)
};

SweepResult sweep(const SequenceDataset& dataset,
                  std::span<const double> epsilon_grid,
                  std::span<const std::size_t> k_values,
                  const PipelineHandles& pipeline);

// CSV with header epsilon,k,error_rate,undecided_rate,mean_frames.
void emit_metrics(const SweepResult& result, const std::filesystem::path& path);

}  // namespace streamcp

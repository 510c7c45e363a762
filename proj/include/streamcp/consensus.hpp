#pragma once

#include <optional>
#include <span>
#include <vector>

#include "streamcp/icp.hpp"

// Sensor-query feedback loop: per-frame prediction sets feed a consensus
// automaton that keeps querying for new inputs and commits to a label only
// after k consecutive identical singleton predictions.

namespace streamcp {

struct ConsensusConfig {
  std::size_t k_consecutive = 3;
  double epsilon = 0.0;

  void validate() const;  // throws std::invalid_argument
};

struct ConsensusState {
  std::optional<int> candidate;
  std::size_t streak = 0;
};

// `decided` empty means: query the sensors for another input.
struct StepResult {
  ConsensusState state;
  std::optional<int> decided;
};

// One automaton step. A non-singleton set clears the candidate; a singleton
// extends the streak when it repeats the candidate and restarts it at 1
// otherwise. Reaching k_consecutive emits the decision and resets the state.
StepResult step(const ConsensusState& state, const PredictionSet& set,
                const ConsensusConfig& config);

struct FrameTrace {
  std::size_t frame = 0;  // 0-based
  std::vector<double> pvalues;
  std::vector<int> prediction;  // set contents
  std::size_t streak = 0;       // after the step
  std::optional<int> decided;
};

struct SequenceOutcome {
  std::optional<int> decided_label;
  std::size_t frames_consumed = 0;

  bool decided() const { return decided_label.has_value(); }
};

// Replays embedded frames through p_values -> prediction_set -> step in
// order, stopping at the first decision. Exhausting the stream without one
// yields an undecided outcome with every frame consumed. When `trace` is
// non-null one record per consumed frame is appended.
SequenceOutcome run_sequence(const std::vector<std::vector<double>>& frames,
                             const TrainingIndex& index,
                             const CalibrationRecord& record,
                             const ConsensusConfig& config,
                             std::vector<FrameTrace>* trace = nullptr);

}  // namespace streamcp

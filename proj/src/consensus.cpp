#include "streamcp/consensus.hpp"

#include <stdexcept>

namespace streamcp {

void ConsensusConfig::validate() const {
  if (k_consecutive == 0)
    throw std::invalid_argument("consensus: k_consecutive must be >= 1");
  if (epsilon < 0.0 || epsilon > 1.0)
    throw std::invalid_argument("consensus: epsilon outside [0, 1]");
}

StepResult step(const ConsensusState& state, const PredictionSet& set,
                const ConsensusConfig& config) {
  config.validate();
  if (!set.singleton()) return {ConsensusState{}, std::nullopt};

  const int label = set.labels.front();
  ConsensusState next;
  next.candidate = label;
  next.streak = (state.candidate == label) ? state.streak + 1 : 1;
  if (next.streak >= config.k_consecutive) return {ConsensusState{}, label};
  return {next, std::nullopt};
}

SequenceOutcome run_sequence(const std::vector<std::vector<double>>& frames,
                             const TrainingIndex& index,
                             const CalibrationRecord& record,
                             const ConsensusConfig& config,
                             std::vector<FrameTrace>* trace) {
  if (frames.empty())
    throw std::invalid_argument("run_sequence: empty frame list");
  config.validate();

  ConsensusState state;
  SequenceOutcome outcome;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const std::vector<double> p = p_values(record, index, frames[t]);
    const PredictionSet set = prediction_set(p, config.epsilon);
    const StepResult result = step(state, set, config);
    outcome.frames_consumed = t + 1;
    if (trace) {
      FrameTrace entry;
      entry.frame = t;
      entry.pvalues = p;
      entry.prediction = set.labels;
      entry.streak = result.decided ? config.k_consecutive : result.state.streak;
      entry.decided = result.decided;
      trace->push_back(std::move(entry));
    }
    if (result.decided) {
      outcome.decided_label = result.decided;
      return outcome;
    }
    state = result.state;
  }
  return outcome;
}

}  // namespace streamcp

#include "streamcp/harness.hpp"

#include <algorithm>
#include <limits>

#include "streamcp/io.hpp"

namespace streamcp {

SequenceOutcome classify_sequence(const Sequence& sequence,
                                  const PipelineHandles& pipeline,
                                  const ConsensusConfig& config,
                                  std::vector<FrameTrace>* trace) {
  std::vector<std::vector<double>> embedded;
  embedded.reserve(sequence.frames.size());
  for (const std::vector<double>& frame : sequence.frames)
    embedded.push_back(embed(pipeline.model, frame));
  return run_sequence(embedded, pipeline.index, pipeline.record, config, trace);
}

std::vector<double> per_frame_error(const SequenceDataset& dataset,
                                    const PipelineHandles& pipeline,
                                    double epsilon) {
  std::size_t max_len = 0;
  for (const Sequence& sequence : dataset.sequences)
    max_len = std::max(max_len, sequence.frames.size());

  std::vector<std::size_t> misses(max_len, 0);
  std::vector<std::size_t> totals(max_len, 0);
  for (const Sequence& sequence : dataset.sequences) {
    for (std::size_t t = 0; t < sequence.frames.size(); ++t) {
      const std::vector<double> v = embed(pipeline.model, sequence.frames[t]);
      const std::vector<double> p = p_values(pipeline.record, pipeline.index, v);
      const PredictionSet set = prediction_set(p, epsilon);
      ++totals[t];
      if (!set.contains(sequence.label)) ++misses[t];
    }
  }

  std::vector<double> errors(max_len, 0.0);
  for (std::size_t t = 0; t < max_len; ++t)
    errors[t] = totals[t] ? static_cast<double>(misses[t]) /
                                static_cast<double>(totals[t])
                          : 0.0;
  return errors;
}

SweepResult sweep(const SequenceDataset& dataset,
                  std::span<const double> epsilon_grid,
                  std::span<const std::size_t> k_values,
                  const PipelineHandles& pipeline) {
  if (epsilon_grid.empty() || k_values.empty())
    throw std::invalid_argument("sweep: epsilon grid and k list must be nonempty");

  std::vector<double> epsilons(epsilon_grid.begin(), epsilon_grid.end());
  std::sort(epsilons.begin(), epsilons.end());
  epsilons.erase(std::unique(epsilons.begin(), epsilons.end()), epsilons.end());
  std::vector<std::size_t> ks(k_values.begin(), k_values.end());
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());

  // Embeddings and p-values do not depend on (epsilon, k); compute them once
  // per frame and replay only the thresholding and the automaton per cell.
  std::vector<std::vector<std::vector<double>>> pvalues(dataset.sequences.size());
  for (std::size_t s = 0; s < dataset.sequences.size(); ++s) {
    const Sequence& sequence = dataset.sequences[s];
    pvalues[s].reserve(sequence.frames.size());
    for (const std::vector<double>& frame : sequence.frames) {
      const std::vector<double> v = embed(pipeline.model, frame);
      pvalues[s].push_back(p_values(pipeline.record, pipeline.index, v));
    }
  }

  SweepResult result;
  for (double epsilon : epsilons) {
    for (std::size_t k : ks) {
      const ConsensusConfig config{k, epsilon};
      std::size_t decided = 0;
      std::size_t wrong = 0;
      std::size_t frames_total = 0;
      for (std::size_t s = 0; s < dataset.sequences.size(); ++s) {
        ConsensusState state;
        std::optional<int> label;
        std::size_t consumed = pvalues[s].size();
        for (std::size_t t = 0; t < pvalues[s].size(); ++t) {
          const StepResult r = step(state, prediction_set(pvalues[s][t], epsilon),
                                    config);
          if (r.decided) {
            label = r.decided;
            consumed = t + 1;
            break;
          }
          state = r.state;
        }
        frames_total += consumed;
        if (label) {
          ++decided;
          if (*label != dataset.sequences[s].label) ++wrong;
        }
      }
      SweepCell cell;
      cell.epsilon = epsilon;
      cell.k_consecutive = k;
      cell.error_rate = decided ? static_cast<double>(wrong) /
                                      static_cast<double>(decided)
                                : std::numeric_limits<double>::quiet_NaN();
      cell.undecided_rate =
          static_cast<double>(dataset.sequences.size() - decided) /
          static_cast<double>(dataset.sequences.size());
      cell.mean_frames = static_cast<double>(frames_total) /
                         static_cast<double>(dataset.sequences.size());
      result.cells.push_back(cell);
    }
  }
  return result;
}

void emit_metrics(const SweepResult& result, const std::filesystem::path& path) {
  std::string out = "epsilon,k,error_rate,undecided_rate,mean_frames\n";
  for (const SweepCell& cell : result.cells) {
    out += format_double(cell.epsilon);
    out += ',';
    out += std::to_string(cell.k_consecutive);
    out += ',';
    out += format_double(cell.error_rate);
    out += ',';
    out += format_double(cell.undecided_rate);
    out += ',';
    out += format_double(cell.mean_frames);
    out += '\n';
  }
  write_file_atomic(path, out);
}

}  // namespace streamcp

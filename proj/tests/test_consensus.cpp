#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "streamcp/consensus.hpp"

using namespace streamcp;

namespace {

PredictionSet make_set(std::vector<int> labels, double epsilon = 0.05) {
  PredictionSet set;
  set.labels = std::move(labels);
  set.epsilon = epsilon;
  return set;
}

struct DriveResult {
  std::optional<int> label;
  std::size_t frames_consumed = 0;
};

// Feed a fixed list of prediction sets through the automaton.
DriveResult drive(const std::vector<PredictionSet>& sets, std::size_t k) {
  const ConsensusConfig config{k, 0.05};
  ConsensusState state;
  for (std::size_t t = 0; t < sets.size(); ++t) {
    const StepResult r = step(state, sets[t], config);
    if (r.decided) return {r.decided, t + 1};
    state = r.state;
  }
  return {std::nullopt, sets.size()};
}

// Independent restatement of the rule: the first decision lands on the first
// frame that completes k consecutive identical singleton sets.
DriveResult oracle_first_decision(const std::vector<PredictionSet>& sets,
                                  std::size_t k) {
  std::size_t run = 0;
  std::optional<int> current;
  for (std::size_t t = 0; t < sets.size(); ++t) {
    if (sets[t].labels.size() == 1) {
      const int label = sets[t].labels.front();
      run = (current && *current == label) ? run + 1 : 1;
      current = label;
    } else {
      run = 0;
      current.reset();
    }
    if (run >= k) return {current, t + 1};
  }
  return {std::nullopt, sets.size()};
}

std::vector<PredictionSet> random_sets(std::mt19937_64& rng, std::size_t count) {
  std::uniform_int_distribution<int> size(0, 3);
  std::uniform_int_distribution<int> label(0, 2);
  std::vector<PredictionSet> sets;
  for (std::size_t t = 0; t < count; ++t) {
    std::vector<int> labels;
    const int n = size(rng);
    for (int i = 0; i < n; ++i) {
      const int candidate = label(rng);
      bool dup = false;
      for (int existing : labels) dup |= existing == candidate;
      if (!dup) labels.push_back(candidate);
    }
    sets.push_back(make_set(std::move(labels)));
  }
  return sets;
}

}  // namespace

TEST_CASE("two identical singletons decide at k=2") {
  const std::vector<PredictionSet> sets{make_set({4}), make_set({4})};
  const DriveResult result = drive(sets, 2);
  REQUIRE(result.label.has_value());
  CHECK(*result.label == 4);
  CHECK(result.frames_consumed == 2);

  // The first frame alone only asks for more input.
  const ConsensusConfig config{2, 0.05};
  const StepResult first = step(ConsensusState{}, sets[0], config);
  CHECK(!first.decided);
  CHECK(first.state.streak == 1);
  CHECK(first.state.candidate == 4);
}

TEST_CASE("a multi-label set resets the streak") {
  const std::vector<PredictionSet> sets{make_set({0}), make_set({0, 1}),
                                        make_set({0}), make_set({0})};
  const DriveResult result = drive(sets, 2);
  REQUIRE(result.label.has_value());
  CHECK(*result.label == 0);
  CHECK(result.frames_consumed == 4);
}

TEST_CASE("k=1 decides on the first singleton") {
  const DriveResult result = drive({make_set({1})}, 1);
  REQUIRE(result.label.has_value());
  CHECK(*result.label == 1);
  CHECK(result.frames_consumed == 1);
}

TEST_CASE("an empty set clears the candidate like a multi-label set") {
  const ConsensusConfig config{3, 0.05};
  ConsensusState state{2, 2};
  const StepResult r = step(state, make_set({}), config);
  CHECK(!r.decided);
  CHECK(!r.state.candidate.has_value());
  CHECK(r.state.streak == 0);
}

TEST_CASE("a different singleton restarts the streak at one") {
  const ConsensusConfig config{3, 0.05};
  ConsensusState state{2, 2};
  const StepResult r = step(state, make_set({5}), config);
  CHECK(!r.decided);
  CHECK(r.state.candidate == 5);
  CHECK(r.state.streak == 1);
}

TEST_CASE("step is a pure transition") {
  const ConsensusConfig config{4, 0.05};
  const ConsensusState state{7, 2};
  const PredictionSet set = make_set({7});
  const StepResult a = step(state, set, config);
  const StepResult b = step(state, set, config);
  CHECK(a.state.candidate == b.state.candidate);
  CHECK(a.state.streak == b.state.streak);
  CHECK(a.decided == b.decided);
}

TEST_CASE("config validation rejects k=0 and bad epsilon") {
  const ConsensusConfig zero_k{0, 0.1};
  const ConsensusConfig bad_epsilon{1, 1.5};
  CHECK_THROWS_AS(zero_k.validate(), std::invalid_argument);
  CHECK_THROWS_AS(bad_epsilon.validate(), std::invalid_argument);
}

TEST_CASE("decisions happen exactly when k identical singletons close a run") {
  std::mt19937_64 rng(301);
  for (int iter = 0; iter < 500; ++iter) {
    const std::vector<PredictionSet> sets = random_sets(rng, 25);
    for (std::size_t k = 1; k <= 5; ++k) {
      const DriveResult got = drive(sets, k);
      const DriveResult expected = oracle_first_decision(sets, k);
      CHECK(got.label == expected.label);
      CHECK(got.frames_consumed == expected.frames_consumed);
      if (got.label) CHECK(got.frames_consumed >= k);
    }
  }
}

TEST_CASE("larger k never decides earlier and never rescues an undecided run") {
  std::mt19937_64 rng(303);
  for (int iter = 0; iter < 300; ++iter) {
    const std::vector<PredictionSet> sets = random_sets(rng, 20);
    DriveResult previous = drive(sets, 1);
    for (std::size_t k = 2; k <= 6; ++k) {
      const DriveResult current = drive(sets, k);
      if (!previous.label) CHECK(!current.label);
      CHECK(current.frames_consumed >= previous.frames_consumed);
      previous = current;
    }
  }
}

TEST_CASE("run_sequence composes p_values, prediction_set and step per frame") {
  // Two well-separated classes; queries near each give clean singletons.
  TrainingIndex index;
  index.dim = 2;
  index.k = 2;
  index.num_classes = 2;
  const std::vector<std::vector<double>> points{
      {0.0, 0.0}, {0.2, 0.0}, {6.0, 0.0}, {6.2, 0.0}};
  const std::vector<int> labels{0, 0, 1, 1};
  for (const std::vector<double>& p : points)
    index.embeddings.insert(index.embeddings.end(), p.begin(), p.end());
  index.labels = labels;
  index.validate();

  const CalibrationRecord record =
      calibrate(index, {{0.1, 0.0}, {6.1, 0.0}, {0.0, 0.1}}, std::vector<int>{0, 1, 0});

  std::mt19937_64 rng(305);
  std::normal_distribution<double> unit_noise(0.0, 1.0);
  std::uniform_int_distribution<int> side(0, 1);
  for (int iter = 0; iter < 50; ++iter) {
    // Degrading sequence: per-frame noise shrinks from 3.0 towards 0.1.
    std::vector<std::vector<double>> frames;
    const std::size_t length = 1 + static_cast<std::size_t>(rng() % 12);
    const double center = side(rng) ? 6.0 : 0.0;
    for (std::size_t t = 0; t < length; ++t) {
      const double sigma =
          3.0 - (3.0 - 0.1) * static_cast<double>(t) /
                    static_cast<double>(std::max<std::size_t>(length - 1, 1));
      frames.push_back({center + sigma * unit_noise(rng), sigma * unit_noise(rng)});
    }
    const ConsensusConfig config{3, 0.2};

    std::vector<FrameTrace> trace;
    const SequenceOutcome outcome = run_sequence(frames, index, record, config, &trace);

    // Straight-line replay of the three operations.
    ConsensusState state;
    std::optional<int> expected_label;
    std::size_t expected_consumed = frames.size();
    for (std::size_t t = 0; t < frames.size(); ++t) {
      const std::vector<double> p = p_values(record, index, frames[t]);
      const PredictionSet set = prediction_set(p, config.epsilon);
      const StepResult r = step(state, set, config);
      CHECK(trace[t].pvalues == p);
      CHECK(trace[t].prediction == set.labels);
      if (r.decided) {
        expected_label = r.decided;
        expected_consumed = t + 1;
        break;
      }
      state = r.state;
    }
    CHECK(outcome.decided_label == expected_label);
    CHECK(outcome.frames_consumed == expected_consumed);
    CHECK(trace.size() == expected_consumed);
  }
}

TEST_CASE("run_sequence: all-identical singletons decide after k frames") {
  TrainingIndex index;
  index.dim = 1;
  index.k = 1;
  index.num_classes = 2;
  index.embeddings = {0.0, 5.0};
  index.labels = {0, 1};
  index.validate();
  const CalibrationRecord record = calibrate(index, {{0.0}, {5.0}}, std::vector<int>{0, 1});

  const std::vector<std::vector<double>> frames(6, std::vector<double>{0.1});
  const SequenceOutcome outcome =
      run_sequence(frames, index, record, ConsensusConfig{3, 0.1});
  REQUIRE(outcome.decided());
  CHECK(*outcome.decided_label == 0);
  CHECK(outcome.frames_consumed == 3);
}

TEST_CASE("run_sequence: empty sets never decide") {
  TrainingIndex index;
  index.dim = 1;
  index.k = 1;
  index.num_classes = 2;
  index.embeddings = {0.0, 5.0};
  index.labels = {0, 1};
  index.validate();
  // epsilon = 1 makes every prediction set empty: no p-value exceeds 1.
  const CalibrationRecord record = calibrate(index, {{0.0}}, std::vector<int>{0});
  const std::vector<std::vector<double>> frames(4, std::vector<double>{0.0});
  const SequenceOutcome outcome =
      run_sequence(frames, index, record, ConsensusConfig{2, 1.0});
  CHECK(!outcome.decided());
  CHECK(outcome.frames_consumed == 4);
}

TEST_CASE("run_sequence rejects empty input") {
  TrainingIndex index;
  index.dim = 1;
  index.k = 1;
  index.num_classes = 2;
  index.embeddings = {0.0, 5.0};
  index.labels = {0, 1};
  const CalibrationRecord record = calibrate(index, {{0.0}}, std::vector<int>{0});
  CHECK_THROWS_AS(run_sequence({}, index, record, ConsensusConfig{1, 0.5}),
                  std::invalid_argument);
}

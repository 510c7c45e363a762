// streamcp: streaming conformal classification experiments.
//
// Subcommands cover the full pipeline: gen-data -> train -> calibrate ->
// predict / simulate / sweep. Settings come from a key=value config file;
// --set and the dedicated flags override it. Every command is deterministic
// for a fixed seed, and failed commands leave no partial outputs behind.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "streamcp/config.hpp"
#include "streamcp/consensus.hpp"
#include "streamcp/harness.hpp"
#include "streamcp/icp.hpp"
#include "streamcp/io.hpp"
#include "streamcp/synth.hpp"

namespace fs = std::filesystem;
using namespace streamcp;

namespace {

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  bool out_dir_set = false;
  std::vector<std::string> overrides;
};

KeyValueConfig resolve_config(const CommonOptions& options) {
  KeyValueConfig config;
  if (!options.config_path.empty())
    config = KeyValueConfig::load(options.config_path);
  for (const std::string& item : options.overrides) {
    const std::size_t eq = item.find('=');
    if (eq == std::string::npos || eq == 0)
      throw std::runtime_error("--set expects key=value, got '" + item + "'");
    config.set(item.substr(0, eq), item.substr(eq + 1));
  }
  if (options.seed) config.set("seed", std::to_string(*options.seed));
  if (options.out_dir_set || !config.has("out_dir"))
    config.set("out_dir", options.out_dir);
  return config;
}

fs::path out_path(const KeyValueConfig& config, const std::string& name) {
  return fs::path(config.get_string("out_dir", "out")) / name;
}

SyntheticConfig synthetic_config(const KeyValueConfig& config) {
  SyntheticConfig s;
  s.classes = config.get_int("classes", s.classes);
  s.input_dim = config.get_size("input_dim", s.input_dim);
  s.separation = config.get_double("separation", s.separation);
  s.sigma_initial = config.get_double("sigma_initial", s.sigma_initial);
  s.sigma_final = config.get_double("sigma_final", s.sigma_final);
  s.sequence_jitter = config.get_double("sequence_jitter", s.sequence_jitter);
  s.frames_per_sequence = config.get_size("frames_per_sequence", s.frames_per_sequence);
  s.train_count = config.get_size("train_count", s.train_count);
  s.calibration_count = config.get_size("calibration_count", s.calibration_count);
  s.validation_count = config.get_size("validation_count", s.validation_count);
  s.iid_test_count = config.get_size("iid_test_count", s.iid_test_count);
  s.sequence_test_count = config.get_size("sequence_test_count", s.sequence_test_count);
  s.seed = config.get_u64("seed", s.seed);
  return s;
}

TrainingConfig training_config(const KeyValueConfig& config) {
  TrainingConfig t;
  t.margin = config.get_double("margin", t.margin);
  t.learning_rate = config.get_double("learning_rate", t.learning_rate);
  t.epochs = config.get_size("epochs", t.epochs);
  t.batch_size = config.get_size("batch_size", t.batch_size);
  t.seed = config.get_u64("seed", t.seed);
  t.hidden_dims = config.get_size_list("hidden_dims", t.hidden_dims);
  t.embedding_dim = config.get_size("embedding_dim", t.embedding_dim);
  return t;
}

// Outputs staged in memory and written together, so a failure mid-command
// cannot leave a subset of the files behind.
class OutputBatch {
 public:
  void add(fs::path path, std::string content) {
    files_.emplace_back(std::move(path), std::move(content));
  }

  void commit() {
    std::vector<fs::path> written;
    try {
      for (const auto& [path, content] : files_) {
        if (path.has_parent_path()) fs::create_directories(path.parent_path());
        write_file_atomic(path, content);
        written.push_back(path);
      }
    } catch (...) {
      for (const fs::path& path : written) {
        std::error_code ignored;
        fs::remove(path, ignored);
      }
      throw;
    }
    for (const auto& [path, content] : files_)
      std::cout << "wrote " << path.string() << "\n";
  }

 private:
  std::vector<std::pair<fs::path, std::string>> files_;
};

int classes_from_examples(const std::vector<LabeledExample>& examples,
                          const std::string& context) {
  int max_label = 0;
  for (const LabeledExample& e : examples) {
    if (e.label < 0)
      throw std::runtime_error(context + ": negative label " + std::to_string(e.label));
    max_label = std::max(max_label, e.label);
  }
  return max_label + 1;
}

void remove_all(const std::vector<fs::path>& paths) {
  for (const fs::path& path : paths) {
    std::error_code ignored;
    fs::remove(path, ignored);
  }
}

void cmd_gen_data(const KeyValueConfig& config) {
  const SyntheticConfig synth = synthetic_config(config);
  const GeneratedData data = generate(synth);
  const fs::path dir = config.get_string("out_dir", "out");
  fs::create_directories(dir);
  const std::vector<fs::path> outputs = {
      dir / "train.csv", dir / "calibration.csv", dir / "validation.csv",
      dir / "iid_test.csv", dir / "sequences.csv"};
  try {
    save_examples(data.train, outputs[0]);
    save_examples(data.calibration, outputs[1]);
    save_examples(data.validation, outputs[2]);
    save_examples(data.iid_test, outputs[3]);
    save_sequences(data.sequence_test, outputs[4]);
  } catch (...) {
    remove_all(outputs);
    throw;
  }
  for (const fs::path& path : outputs) std::cout << "wrote " << path.string() << "\n";
}

void cmd_train(const KeyValueConfig& config, const std::string& data_path) {
  const fs::path input =
      data_path.empty() ? out_path(config, "train.csv") : fs::path(data_path);
  const std::vector<LabeledExample> data = load_examples(input);
  const EmbedderModel model = train_embedder(data, training_config(config));

  const fs::path model_path = out_path(config, "model.txt");
  if (model_path.has_parent_path()) fs::create_directories(model_path.parent_path());
  save_model(model, model_path);
  std::cout << "wrote " << model_path.string() << "\n";
}

void cmd_calibrate(const KeyValueConfig& config, const std::string& model_path,
                   const std::string& train_path, const std::string& calib_path,
                   const std::string& valid_path) {
  const EmbedderModel model = load_model(
      model_path.empty() ? out_path(config, "model.txt") : fs::path(model_path));
  const std::vector<LabeledExample> train = load_examples(
      train_path.empty() ? out_path(config, "train.csv") : fs::path(train_path));
  const std::vector<LabeledExample> calib = load_examples(
      calib_path.empty() ? out_path(config, "calibration.csv") : fs::path(calib_path));
  const std::vector<LabeledExample> valid = load_examples(
      valid_path.empty() ? out_path(config, "validation.csv") : fs::path(valid_path));

  const int classes = std::max(
      {classes_from_examples(train, "train"), classes_from_examples(calib, "calibration"),
       classes_from_examples(valid, "validation"),
       config.get_int("classes", 0)});
  const std::size_t k = config.get_size("knn_k", 15);
  const TrainingIndex index = build_training_index(model, train, k, classes);

  std::vector<std::vector<double>> calib_embeddings;
  std::vector<int> calib_labels;
  for (const LabeledExample& e : calib) {
    calib_embeddings.push_back(embed(model, e.features));
    calib_labels.push_back(e.label);
  }
  CalibrationRecord record = calibrate(index, calib_embeddings, calib_labels);

  std::vector<std::vector<double>> validation_pvalues;
  for (const LabeledExample& e : valid)
    validation_pvalues.push_back(p_values(record, index, embed(model, e.features)));
  record.epsilon_star = select_epsilon(validation_pvalues);

  const fs::path index_path = out_path(config, "index.txt");
  const fs::path record_path = out_path(config, "calibration_record.txt");
  if (index_path.has_parent_path()) fs::create_directories(index_path.parent_path());
  try {
    save_index(index, index_path);
    save_calibration(record, record_path);
  } catch (...) {
    remove_all({index_path, record_path});
    throw;
  }
  std::cout << "wrote " << index_path.string() << "\n";
  std::cout << "wrote " << record_path.string() << "\n";
  std::cout << "epsilon_star " << format_double(record.epsilon_star) << "\n";
}

struct LoadedPipeline {
  EmbedderModel model;
  TrainingIndex index;
  CalibrationRecord record;
};

LoadedPipeline load_pipeline(const KeyValueConfig& config) {
  LoadedPipeline p;
  p.model = load_model(out_path(config, "model.txt"));
  p.index = load_index(out_path(config, "index.txt"));
  p.record = load_calibration(out_path(config, "calibration_record.txt"), p.index);
  return p;
}

double resolve_epsilon(const KeyValueConfig& config, const CalibrationRecord& record) {
  const double epsilon = config.get_double("epsilon", -1.0);
  if (epsilon >= 0.0) return epsilon;
  if (record.epsilon_star >= 0.0) return record.epsilon_star;
  throw std::runtime_error(
      "no significance level available: set epsilon or run calibrate first");
}

void cmd_predict(const KeyValueConfig& config, const std::string& input_path) {
  const LoadedPipeline pipeline = load_pipeline(config);
  const std::vector<LabeledExample> inputs = load_examples(
      input_path.empty() ? out_path(config, "iid_test.csv") : fs::path(input_path));
  const double epsilon = resolve_epsilon(config, pipeline.record);

  std::string out = "index,label";
  for (int j = 0; j < pipeline.index.num_classes; ++j)
    out += ",p_" + std::to_string(j);
  out += ",set,hit\n";
  std::size_t errors = 0;
  std::size_t multiples = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const std::vector<double> p =
        p_values(pipeline.record, pipeline.index, embed(pipeline.model, inputs[i].features));
    const PredictionSet set = prediction_set(p, epsilon);
    const bool hit = set.contains(inputs[i].label);
    if (!hit) ++errors;
    if (set.labels.size() > 1) ++multiples;
    out += std::to_string(i) + ',' + std::to_string(inputs[i].label);
    for (double value : p) out += ',' + format_double(value);
    out += ',';
    for (std::size_t s = 0; s < set.labels.size(); ++s) {
      if (s) out += ';';
      out += std::to_string(set.labels[s]);
    }
    out += hit ? ",1\n" : ",0\n";
  }

  OutputBatch batch;
  batch.add(out_path(config, "predictions.csv"), std::move(out));
  batch.commit();
  const double n = static_cast<double>(inputs.size());
  std::cout << "epsilon " << format_double(epsilon) << "\n";
  std::cout << "error_rate " << format_double(static_cast<double>(errors) / n) << "\n";
  std::cout << "multiple_rate " << format_double(static_cast<double>(multiples) / n)
            << "\n";
}

void cmd_simulate(const KeyValueConfig& config, const std::string& sequences_path) {
  const LoadedPipeline pipeline = load_pipeline(config);
  const SequenceDataset dataset = load_sequences(
      sequences_path.empty() ? out_path(config, "sequences.csv")
                             : fs::path(sequences_path));
  ConsensusConfig consensus;
  consensus.epsilon = resolve_epsilon(config, pipeline.record);
  consensus.k_consecutive = config.get_size("k_consecutive", 3);
  consensus.validate();

  const PipelineHandles handles{pipeline.model, pipeline.index, pipeline.record};
  std::string decisions = "sequence_id,true_label,outcome,decided_label,frames_consumed,correct\n";
  std::string trace_lines;
  std::size_t decided = 0;
  std::size_t wrong = 0;
  std::size_t frames_total = 0;
  for (std::size_t s = 0; s < dataset.sequences.size(); ++s) {
    const Sequence& sequence = dataset.sequences[s];
    std::vector<FrameTrace> trace;
    const SequenceOutcome outcome = classify_sequence(sequence, handles, consensus, &trace);
    frames_total += outcome.frames_consumed;
    const bool correct = outcome.decided() && *outcome.decided_label == sequence.label;
    if (outcome.decided()) {
      ++decided;
      if (!correct) ++wrong;
    }
    decisions += std::to_string(s) + ',' + std::to_string(sequence.label) + ',';
    decisions += outcome.decided() ? "decided" : "undecided";
    decisions += ',' + std::to_string(outcome.decided_label.value_or(-1));
    decisions += ',' + std::to_string(outcome.frames_consumed);
    decisions += correct ? ",1\n" : ",0\n";

    for (const FrameTrace& frame : trace) {
      nlohmann::ordered_json record;
      record["sequence"] = s;
      record["frame"] = frame.frame;
      record["p_values"] = frame.pvalues;
      record["prediction_set"] = frame.prediction;
      record["streak"] = frame.streak;
      record["outcome"] = frame.decided ? "decided" : "query";
      if (frame.decided) record["label"] = *frame.decided;
      trace_lines += record.dump();
      trace_lines += '\n';
    }
  }

  std::string frame_errors = "frame,error_rate\n";
  const std::vector<double> per_frame =
      per_frame_error(dataset, handles, consensus.epsilon);
  for (std::size_t t = 0; t < per_frame.size(); ++t)
    frame_errors += std::to_string(t) + ',' + format_double(per_frame[t]) + '\n';

  OutputBatch batch;
  batch.add(out_path(config, "decisions.csv"), std::move(decisions));
  batch.add(out_path(config, "trace.jsonl"), std::move(trace_lines));
  batch.add(out_path(config, "per_frame_error.csv"), std::move(frame_errors));
  batch.commit();

  const double n = static_cast<double>(dataset.sequences.size());
  std::cout << "epsilon " << format_double(consensus.epsilon) << "\n";
  std::cout << "k_consecutive " << consensus.k_consecutive << "\n";
  std::cout << "decided " << decided << "/" << dataset.sequences.size() << "\n";
  std::cout << "decided_error_rate "
            << format_double(decided ? static_cast<double>(wrong) /
                                           static_cast<double>(decided)
                                     : 0.0)
            << "\n";
  std::cout << "mean_frames " << format_double(static_cast<double>(frames_total) / n)
            << "\n";
}

void cmd_sweep(const KeyValueConfig& config, const std::string& sequences_path) {
  const LoadedPipeline pipeline = load_pipeline(config);
  const SequenceDataset dataset = load_sequences(
      sequences_path.empty() ? out_path(config, "sequences.csv")
                             : fs::path(sequences_path));
  const std::vector<double> epsilon_grid = config.get_double_list(
      "epsilon_grid", {0.005, 0.01, 0.02, 0.05, 0.1, 0.2});
  const std::vector<std::size_t> k_list =
      config.get_size_list("k_list", {1, 2, 3, 5});

  const PipelineHandles handles{pipeline.model, pipeline.index, pipeline.record};
  const SweepResult result = sweep(dataset, epsilon_grid, k_list, handles);
  const fs::path path = out_path(config, "sweep.csv");
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  emit_metrics(result, path);
  std::cout << "wrote " << path.string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"streaming conformal classification experiments"};
  app.require_subcommand(1);

  CommonOptions common;
  std::string data_path, model_path, train_path, calib_path, valid_path, input_path,
      sequences_path;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", common.config_path, "key=value config file");
    cmd->add_option("--seed", common.seed, "RNG seed (overrides config)");
    cmd->add_option("--out-dir", common.out_dir, "output directory")
        ->each([&](const std::string&) { common.out_dir_set = true; });
    cmd->add_option("--set", common.overrides, "override a config key (key=value)");
  };

  CLI::App* gen = app.add_subcommand("gen-data", "generate synthetic datasets");
  add_common(gen);
  CLI::App* train = app.add_subcommand("train", "train the embedder");
  add_common(train);
  train->add_option("--data", data_path, "training dataset (default out_dir/train.csv)");
  CLI::App* calibrate = app.add_subcommand(
      "calibrate", "build the k-NN index, calibration scores and epsilon*");
  add_common(calibrate);
  calibrate->add_option("--model", model_path, "model file");
  calibrate->add_option("--train", train_path, "proper training dataset");
  calibrate->add_option("--calibration", calib_path, "calibration dataset");
  calibrate->add_option("--validation", valid_path, "validation dataset");
  CLI::App* predict =
      app.add_subcommand("predict", "batch per-input p-values and prediction sets");
  add_common(predict);
  predict->add_option("--input", input_path, "input dataset (default out_dir/iid_test.csv)");
  CLI::App* simulate =
      app.add_subcommand("simulate", "run the feedback loop over sequences");
  add_common(simulate);
  simulate->add_option("--sequences", sequences_path, "sequence dataset");
  CLI::App* sweep_cmd =
      app.add_subcommand("sweep", "error/undecided/frames over the (epsilon, k) grid");
  add_common(sweep_cmd);
  sweep_cmd->add_option("--sequences", sequences_path, "sequence dataset");

  CLI11_PARSE(app, argc, argv);

  try {
    const KeyValueConfig config = resolve_config(common);
    if (gen->parsed()) cmd_gen_data(config);
    if (train->parsed()) cmd_train(config, data_path);
    if (calibrate->parsed())
      cmd_calibrate(config, model_path, train_path, calib_path, valid_path);
    if (predict->parsed()) cmd_predict(config, input_path);
    if (simulate->parsed()) cmd_simulate(config, sequences_path);
    if (sweep_cmd->parsed()) cmd_sweep(config, sequences_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

#include "streamcp/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <system_error>

namespace streamcp {

namespace {

constexpr std::string_view kModelMagic = "streamcp-embedder v1";
constexpr std::string_view kIndexMagic = "streamcp-index v1";
constexpr std::string_view kCalibrationMagic = "streamcp-calibration v1";

[[noreturn]] void fail(const std::filesystem::path& path, const std::string& what) {
  throw std::runtime_error(path.string() + ": " + what);
}

[[noreturn]] void fail(const std::filesystem::path& path, std::size_t line,
                       const std::string& what) {
  fail(path, "line " + std::to_string(line) + ": " + what);
}

struct LineReader {
  std::ifstream stream;
  std::filesystem::path path;
  std::size_t line_number = 0;

  explicit LineReader(const std::filesystem::path& p) : stream(p), path(p) {
    if (!stream) fail(p, "cannot open file");
  }

  bool next(std::string& line) {
    if (!std::getline(stream, line)) return false;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    ++line_number;
    return true;
  }

  std::string expect_line(const std::string& what) {
    std::string line;
    if (!next(line)) fail(path, line_number + 1, "unexpected end of file, expected " + what);
    return line;
  }

  [[noreturn]] void error(const std::string& what) { fail(path, line_number, what); }
};

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = text.find(sep, start);
    if (pos == std::string_view::npos) {
      fields.push_back(text.substr(start));
      return fields;
    }
    fields.push_back(text.substr(start, pos - start));
    start = pos + 1;
  }
}

// Like split(' ') but collapsing runs of spaces.
std::vector<std::string_view> tokens(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && text[i] == ' ') ++i;
    std::size_t start = i;
    while (i < text.size() && text[i] != ' ') ++i;
    if (i > start) out.push_back(text.substr(start, i - start));
  }
  return out;
}

long long parse_int(std::string_view text, LineReader& reader) {
  long long value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size())
    reader.error("malformed integer '" + std::string(text) + "'");
  return value;
}

double parse_double_field(std::string_view text, LineReader& reader) {
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size())
    reader.error("malformed number '" + std::string(text) + "'");
  return value;
}

void expect_magic(LineReader& reader, std::string_view magic) {
  const std::string line = reader.expect_line("magic header");
  if (line != magic)
    reader.error("bad magic header '" + line + "', expected '" + std::string(magic) + "'");
}

// Reads a "<keyword> <values...>" line.
std::vector<std::string_view> keyword_line(LineReader& reader, std::string& storage,
                                           std::string_view keyword,
                                           std::size_t value_count) {
  storage = reader.expect_line("'" + std::string(keyword) + "' line");
  std::vector<std::string_view> fields = tokens(storage);
  if (fields.empty() || fields.front() != keyword)
    reader.error("expected '" + std::string(keyword) + "' line");
  if (fields.size() != value_count + 1)
    reader.error("'" + std::string(keyword) + "' line needs " +
                 std::to_string(value_count) + " value(s)");
  fields.erase(fields.begin());
  return fields;
}

}  // namespace

std::string format_double(double value) {
  char buffer[64];
  const auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
  if (ec != std::errc()) throw std::runtime_error("format_double failed");
  return std::string(buffer, ptr);
}

double parse_double(std::string_view text, const std::string& context) {
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw std::runtime_error(context + ": malformed number '" + std::string(text) + "'");
  return value;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  const std::filesystem::path temp = path.string() + ".tmp";
  {
    std::ofstream out(temp, std::ios::binary | std::ios::trunc);
    if (!out) fail(path, "cannot open for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      std::error_code ignored;
      std::filesystem::remove(temp, ignored);
      fail(path, "write failed");
    }
  }
  std::error_code ec;
  std::filesystem::rename(temp, path, ec);
  if (ec) {
    std::error_code ignored;
    std::filesystem::remove(temp, ignored);
    fail(path, "rename failed: " + ec.message());
  }
}

void save_examples(const std::vector<LabeledExample>& examples,
                   const std::filesystem::path& path) {
  if (examples.empty())
    throw std::invalid_argument(path.string() + ": refusing to write empty dataset");
  const std::size_t dim = examples.front().features.size();
  std::string out;
  for (std::size_t d = 0; d < dim; ++d) out += "feature_" + std::to_string(d) + ",";
  out += "label\n";
  for (const LabeledExample& example : examples) {
    if (example.features.size() != dim)
      throw std::invalid_argument(path.string() + ": inconsistent feature dimensions");
    for (double f : example.features) {
      out += format_double(f);
      out += ',';
    }
    out += std::to_string(example.label);
    out += '\n';
  }
  write_file_atomic(path, out);
}

std::vector<LabeledExample> load_examples(const std::filesystem::path& path) {
  LineReader reader(path);
  const std::string header = reader.expect_line("header");
  const std::vector<std::string_view> columns = split(header, ',');
  if (columns.size() < 2 || columns.back() != "label")
    reader.error("header must list feature columns then 'label'");
  const std::size_t dim = columns.size() - 1;

  std::vector<LabeledExample> examples;
  std::string line;
  while (reader.next(line)) {
    if (line.empty()) continue;
    const std::vector<std::string_view> fields = split(line, ',');
    if (fields.size() != dim + 1)
      reader.error("expected " + std::to_string(dim + 1) + " fields, got " +
                   std::to_string(fields.size()));
    LabeledExample example;
    example.features.reserve(dim);
    for (std::size_t d = 0; d < dim; ++d) {
      const double v = parse_double_field(fields[d], reader);
      if (!std::isfinite(v)) reader.error("non-finite feature value");
      example.features.push_back(v);
    }
    example.label = static_cast<int>(parse_int(fields[dim], reader));
    examples.push_back(std::move(example));
  }
  if (examples.empty()) reader.error("no data rows");
  return examples;
}

void save_sequences(const SequenceDataset& dataset,
                    const std::filesystem::path& path) {
  if (dataset.sequences.empty())
    throw std::invalid_argument(path.string() + ": refusing to write empty dataset");
  const std::size_t dim = dataset.sequences.front().frames.empty()
                              ? 0
                              : dataset.sequences.front().frames.front().size();
  std::string out = "sequence_id,frame_index,";
  for (std::size_t d = 0; d < dim; ++d) out += "feature_" + std::to_string(d) + ",";
  out += "label\n";
  for (std::size_t s = 0; s < dataset.sequences.size(); ++s) {
    const Sequence& sequence = dataset.sequences[s];
    for (std::size_t t = 0; t < sequence.frames.size(); ++t) {
      out += std::to_string(s);
      out += ',';
      out += std::to_string(t);
      out += ',';
      for (double f : sequence.frames[t]) {
        out += format_double(f);
        out += ',';
      }
      out += std::to_string(sequence.label);
      out += '\n';
    }
  }
  write_file_atomic(path, out);
}

SequenceDataset load_sequences(const std::filesystem::path& path) {
  LineReader reader(path);
  const std::string header = reader.expect_line("header");
  const std::vector<std::string_view> columns = split(header, ',');
  if (columns.size() < 4 || columns[0] != "sequence_id" ||
      columns[1] != "frame_index" || columns.back() != "label")
    reader.error("header must be sequence_id,frame_index,features...,label");
  const std::size_t dim = columns.size() - 3;

  SequenceDataset dataset;
  long long current_id = -1;
  std::string line;
  while (reader.next(line)) {
    if (line.empty()) continue;
    const std::vector<std::string_view> fields = split(line, ',');
    if (fields.size() != dim + 3)
      reader.error("expected " + std::to_string(dim + 3) + " fields, got " +
                   std::to_string(fields.size()));
    const long long id = parse_int(fields[0], reader);
    const long long frame = parse_int(fields[1], reader);
    const int label = static_cast<int>(parse_int(fields.back(), reader));
    if (id != current_id) {
      if (id != current_id + 1)
        reader.error("sequence ids must be consecutive starting at 0");
      current_id = id;
      dataset.sequences.push_back(Sequence{label, {}});
    }
    Sequence& sequence = dataset.sequences.back();
    if (frame != static_cast<long long>(sequence.frames.size()))
      reader.error("frame indexes must be consecutive within a sequence");
    if (label != sequence.label)
      reader.error("frames of one sequence must share the label");
    std::vector<double> features;
    features.reserve(dim);
    for (std::size_t d = 0; d < dim; ++d) {
      const double v = parse_double_field(fields[d + 2], reader);
      if (!std::isfinite(v)) reader.error("non-finite feature value");
      features.push_back(v);
    }
    sequence.frames.push_back(std::move(features));
  }
  if (dataset.sequences.empty()) reader.error("no data rows");
  for (const Sequence& sequence : dataset.sequences)
    dataset.frames_per_sequence =
        std::max(dataset.frames_per_sequence, sequence.frames.size());
  return dataset;
}

void save_model(const EmbedderModel& model, const std::filesystem::path& path) {
  std::string out(kModelMagic);
  out += '\n';
  out += "activation ";
  out += activation_name(model.hidden_activation);
  out += '\n';
  out += "layers " + std::to_string(model.layers.size()) + '\n';
  for (const Layer& layer : model.layers) {
    out += "layer " + std::to_string(layer.outputs) + ' ' +
           std::to_string(layer.inputs) + '\n';
    for (std::size_t r = 0; r < layer.outputs; ++r) {
      out += 'w';
      for (std::size_t c = 0; c < layer.inputs; ++c) {
        out += ' ';
        out += format_double(layer.weights[r * layer.inputs + c]);
      }
      out += '\n';
    }
    out += 'b';
    for (double b : layer.bias) {
      out += ' ';
      out += format_double(b);
    }
    out += '\n';
  }
  write_file_atomic(path, out);
}

EmbedderModel load_model(const std::filesystem::path& path) {
  LineReader reader(path);
  expect_magic(reader, kModelMagic);

  std::string storage;
  EmbedderModel model;
  const auto activation = keyword_line(reader, storage, "activation", 1);
  const auto parsed = activation_from_name(std::string(activation[0]));
  if (!parsed) reader.error("unknown activation '" + std::string(activation[0]) + "'");
  model.hidden_activation = *parsed;

  const std::size_t layer_count =
      static_cast<std::size_t>(parse_int(keyword_line(reader, storage, "layers", 1)[0], reader));
  if (layer_count == 0) reader.error("model must have at least one layer");

  for (std::size_t l = 0; l < layer_count; ++l) {
    const auto dims = keyword_line(reader, storage, "layer", 2);
    Layer layer;
    layer.outputs = static_cast<std::size_t>(parse_int(dims[0], reader));
    layer.inputs = static_cast<std::size_t>(parse_int(dims[1], reader));
    if (layer.outputs == 0 || layer.inputs == 0)
      reader.error("layer dimensions must be positive");
    if (!model.layers.empty() && model.layers.back().outputs != layer.inputs)
      reader.error("layer input dimension does not match previous layer output");
    layer.weights.reserve(layer.outputs * layer.inputs);
    for (std::size_t r = 0; r < layer.outputs; ++r) {
      const auto row = keyword_line(reader, storage, "w", layer.inputs);
      for (std::string_view field : row) {
        const double v = parse_double_field(field, reader);
        if (!std::isfinite(v)) reader.error("non-finite weight");
        layer.weights.push_back(v);
      }
    }
    const auto bias = keyword_line(reader, storage, "b", layer.outputs);
    for (std::string_view field : bias) {
      const double v = parse_double_field(field, reader);
      if (!std::isfinite(v)) reader.error("non-finite bias");
      layer.bias.push_back(v);
    }
    model.layers.push_back(std::move(layer));
  }
  return model;
}

void save_index(const TrainingIndex& index, const std::filesystem::path& path) {
  index.validate();
  std::string out(kIndexMagic);
  out += '\n';
  out += "k " + std::to_string(index.k) + '\n';
  out += "classes " + std::to_string(index.num_classes) + '\n';
  out += "dim " + std::to_string(index.dim) + '\n';
  out += "count " + std::to_string(index.size()) + '\n';
  for (std::size_t i = 0; i < index.size(); ++i) {
    for (double v : index.embedding(i)) {
      out += format_double(v);
      out += ' ';
    }
    out += std::to_string(index.labels[i]);
    out += '\n';
  }
  write_file_atomic(path, out);
}

TrainingIndex load_index(const std::filesystem::path& path) {
  LineReader reader(path);
  expect_magic(reader, kIndexMagic);

  std::string storage;
  TrainingIndex index;
  index.k = static_cast<std::size_t>(
      parse_int(keyword_line(reader, storage, "k", 1)[0], reader));
  index.num_classes = static_cast<int>(
      parse_int(keyword_line(reader, storage, "classes", 1)[0], reader));
  index.dim = static_cast<std::size_t>(
      parse_int(keyword_line(reader, storage, "dim", 1)[0], reader));
  const std::size_t count = static_cast<std::size_t>(
      parse_int(keyword_line(reader, storage, "count", 1)[0], reader));

  index.embeddings.reserve(count * index.dim);
  index.labels.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::string line = reader.expect_line("embedding row");
    const std::vector<std::string_view> fields = tokens(line);
    if (fields.size() != index.dim + 1)
      reader.error("expected " + std::to_string(index.dim + 1) + " fields, got " +
                   std::to_string(fields.size()));
    for (std::size_t d = 0; d < index.dim; ++d)
      index.embeddings.push_back(parse_double_field(fields[d], reader));
    index.labels.push_back(static_cast<int>(parse_int(fields.back(), reader)));
  }
  try {
    index.validate();
  } catch (const std::invalid_argument& e) {
    fail(path, e.what());
  }
  return index;
}

void save_calibration(const CalibrationRecord& record,
                      const std::filesystem::path& path) {
  record.validate();
  std::string out(kCalibrationMagic);
  out += '\n';
  out += "k " + std::to_string(record.k) + '\n';
  char digest[17];
  std::snprintf(digest, sizeof(digest), "%016llx",
                static_cast<unsigned long long>(record.index_digest));
  out += "index_digest ";
  out += digest;
  out += '\n';
  out += "epsilon_star ";
  out += record.epsilon_star < 0.0 ? "unset" : format_double(record.epsilon_star);
  out += '\n';
  out += "counts";
  for (std::uint64_t c : record.counts) out += ' ' + std::to_string(c);
  out += '\n';
  write_file_atomic(path, out);
}

CalibrationRecord load_calibration(const std::filesystem::path& path,
                                   const TrainingIndex& index) {
  LineReader reader(path);
  expect_magic(reader, kCalibrationMagic);

  std::string storage;
  CalibrationRecord record;
  record.k = static_cast<std::size_t>(
      parse_int(keyword_line(reader, storage, "k", 1)[0], reader));

  const auto digest_field = keyword_line(reader, storage, "index_digest", 1);
  std::uint64_t digest = 0;
  {
    const std::string_view text = digest_field[0];
    const auto [ptr, ec] =
        std::from_chars(text.data(), text.data() + text.size(), digest, 16);
    if (ec != std::errc() || ptr != text.data() + text.size())
      reader.error("malformed digest '" + std::string(text) + "'");
  }
  record.index_digest = digest;

  const auto epsilon = keyword_line(reader, storage, "epsilon_star", 1);
  record.epsilon_star =
      epsilon[0] == "unset" ? -1.0 : parse_double_field(epsilon[0], reader);

  const std::string counts_line = reader.expect_line("'counts' line");
  const std::vector<std::string_view> fields = tokens(counts_line);
  if (fields.empty() || fields.front() != "counts")
    reader.error("expected 'counts' line");
  for (std::size_t i = 1; i < fields.size(); ++i) {
    const long long c = parse_int(fields[i], reader);
    if (c < 0) reader.error("negative score count");
    record.counts.push_back(static_cast<std::uint64_t>(c));
  }
  try {
    record.validate();
  } catch (const std::invalid_argument& e) {
    fail(path, e.what());
  }
  if (record.k != index.k)
    fail(path, "calibration k=" + std::to_string(record.k) +
                   " does not match index k=" + std::to_string(index.k));
  if (record.index_digest != index.digest())
    fail(path, "calibration was built against a different training index "
               "(digest mismatch)");
  return record;
}

}  // namespace streamcp

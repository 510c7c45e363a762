#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "streamcp/icp.hpp"
#include "streamcp/synth.hpp"

// File formats. All numeric text uses shortest round-trip decimal form, so a
// save/load cycle reproduces every double bit for bit and outputs are
// byte-stable across runs. Every artifact starts with a magic line carrying a
// format version; loaders reject anything else. Load errors name the
// offending path (and line, where there is one).

namespace streamcp {

std::string format_double(double value);
double parse_double(std::string_view text, const std::string& context);

// Writes via a temp file + rename so failures never leave partial content.
void write_file_atomic(const std::filesystem::path& path,
                       const std::string& content);

// Example datasets: header line, then comma-separated features followed by
// the label.
void save_examples(const std::vector<LabeledExample>& examples,
                   const std::filesystem::path& path);
std::vector<LabeledExample> load_examples(const std::filesystem::path& path);

// Sequence datasets: same layout with leading sequence_id and frame_index
// columns. Frames of one sequence must be contiguous and in order, and must
// agree on the label.
void save_sequences(const SequenceDataset& dataset,
                    const std::filesystem::path& path);
SequenceDataset load_sequences(const std::filesystem::path& path);

void save_model(const EmbedderModel& model, const std::filesystem::path& path);
EmbedderModel load_model(const std::filesystem::path& path);

void save_index(const TrainingIndex& index, const std::filesystem::path& path);
TrainingIndex load_index(const std::filesystem::path& path);

// Loading a calibration record checks its stored digest against `index` and
// fails when the record was built against different training data.
void save_calibration(const CalibrationRecord& record,
                      const std::filesystem::path& path);
CalibrationRecord load_calibration(const std::filesystem::path& path,
                                   const TrainingIndex& index);

}  // namespace streamcp

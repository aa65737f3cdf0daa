#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lpf/data.hpp"
#include "lpf/eval.hpp"
#include "lpf/label_prediction.hpp"

namespace lpf {

enum class DataSource { kSynthetic, kFiles };

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::size_t repetitions = 5;
  std::vector<Mode> modes{Mode::kFull, Mode::kLabeled, Mode::kSemiSupervised};
  std::size_t r = 50;
  std::filesystem::path output_dir = "lpf_out";

  DataSource source = DataSource::kSynthetic;
  std::filesystem::path features_1;
  std::filesystem::path features_2;
  std::filesystem::path labels;
  SynthSpec synth;  // its seed is derived from `seed`
  bool normalize = true;

  SplitSpec split;  // its seed is derived per repetition
  std::size_t unseen_classes = 0;  // > 0 turns on the open-set protocol
  double kappa = 0.0;

  LpfConfig lpf;  // its seed is derived per repetition
  double ridge = kDefaultRidge;

  ExperimentConfig();
  void validate() const;
};

/// Sets one "section.key" entry. Throws std::invalid_argument on unknown keys
/// or unparsable values.
void apply_setting(ExperimentConfig& config, std::string_view key, std::string_view value);

/// INI text: "[section]" headers followed by "key = value" lines. Keys not set
/// keep their defaults.
ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Every key with its current value, in the same INI layout parse_config reads.
std::string to_ini(const ExperimentConfig& config);

struct RepetitionResult {
  std::size_t repetition = 0;
  std::uint64_t seed = 0;
  std::vector<MapReport> maps;           // one per configured mode, same order
  std::vector<IterationRecord> history;  // empty unless ss ran
  std::size_t pool_size = 0;
  std::size_t out_of_class = 0;
  std::optional<double> pool_accuracy;
  double effective_kappa = 0.0;
  std::size_t labeled_count = 0;
  std::size_t unlabeled_count = 0;
  std::vector<std::string> warnings;

  const MapReport* map_for(Mode m) const;
};

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<RepetitionResult> repetitions;
};

/// Loads or generates the dataset described by the config.
PairedDataset prepare_dataset(const ExperimentConfig& config);

RepetitionResult run_repetition(const ExperimentConfig& config, const PairedDataset& ds,
                                std::size_t repetition);

ExperimentResult run_experiment(const ExperimentConfig& config);

/// Per-iteration pool size and accuracy; accuracy is absent when nothing was
/// selected.
struct SelectionRow {
  std::size_t iteration = 0;
  std::size_t selected = 0;
  std::optional<double> accuracy;
};

std::vector<SelectionRow> selection_rows(const std::vector<IterationRecord>& history);

/// Writes config.ini, map.tsv, history.tsv, per_class.tsv, selection.tsv and
/// summary.txt into `dir`.
void write_report(const ExperimentResult& result, const std::filesystem::path& dir);

/// Human-readable tables rebuilt from the machine-readable files in `dir`.
std::string render_report(const std::filesystem::path& dir);

double median(std::vector<double> values);

}  // namespace lpf

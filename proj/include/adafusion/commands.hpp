#pragma once

#include "adafusion/config.hpp"
#include "adafusion/retrieval_eval.hpp"
#include "adafusion/training.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace adafusion {

// The CLI subcommand bodies, exposed as functions so the pipeline can be
// driven programmatically (and tested) without spawning processes.

struct SynthResult {
  std::string root;
  int frames = 0;
  int sequences = 0;
};

/// Generates the configured synthetic dataset under dataset.root.
SynthResult runSynth(const LoadedConfig& loaded);

struct PrepareResult {
  std::string frames_csv;
  std::string pairs_csv;
  int frames = 0;
  int train_frames = 0;
  int test_frames = 0;
  int positive_pairs = 0;
  int negative_pairs = 0;
};

/// Loads sequences, associates modalities, selects frames by traveled
/// distance, splits regions and mines pairs; writes the index files.
PrepareResult runPrepare(const LoadedConfig& loaded);

struct TrainCommandResult {
  std::string checkpoint_path;
  std::string log_path;
  double best_ar1 = 0.0;
  long steps = 0;
  std::vector<double> step_losses;
};

TrainCommandResult runTrain(const LoadedConfig& loaded);

struct EmbedResult {
  std::string db_path;
  int frames = 0;
};

/// Embeds the selected frames with a checkpoint into a DescriptorDb file.
/// `sequences` empty means every sequence present in the index.
EmbedResult runEmbed(const LoadedConfig& loaded, const std::string& checkpoint_path,
                     const std::vector<std::string>& sequences = {});

struct EvalResult {
  std::string results_csv;
  double ar1 = 0.0;
  double ar1pct = 0.0;
  int combinations = 0;
};

/// Runs the all-combination evaluation over a DescriptorDb (built on the fly
/// from a checkpoint when `db_path` is empty).
EvalResult runEval(const LoadedConfig& loaded, const std::string& db_path,
                   const std::string& checkpoint_path);

struct WeightsReportResult {
  std::string csv_path;
  double mean_alpha_i = 0.0;
  double mean_alpha_p = 0.0;
};

WeightsReportResult runWeightsReport(const LoadedConfig& loaded, const std::string& db_path);

}  // namespace adafusion

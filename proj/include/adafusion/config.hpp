#pragma once

#include "adafusion/common.hpp"
#include "adafusion/data_ingest.hpp"
#include "adafusion/model.hpp"
#include "adafusion/preprocess.hpp"
#include "adafusion/synthetic.hpp"
#include "adafusion/training.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace adafusion {

/// The declarative run configuration backing every CLI command. Loaded from
/// a JSON file, optionally patched by --set key=value overrides and the
/// ADAFUSION_DATA_ROOT environment variable; the FNV hash of the canonical
/// merged document identifies the run in every output.
struct RunConfig {
  // dataset
  std::string dataset_root;
  std::vector<std::string> sequences;  // empty -> discover
  double max_dt = 0.1;
  double frame_spacing = 10.0;
  std::vector<TestBox> test_boxes;
  std::string index_dir;  // default: <dataset_root>/index

  // preprocess
  PreprocessParams preprocess;

  // model
  std::string width_preset = "paper";  // "paper" | "width8"
  int descriptor_dim = 256;
  int attention_channels = 64;
  int fusion_channels = 128;
  bool adaptive_weights = true;

  // train
  TrainConfig train;
  double val_fraction = 0.1;
  std::string checkpoint_path = "model.ckpt";
  std::string train_log_path = "train_log.csv";

  // eval
  std::vector<int> eval_ns{1, 5, 10, 25};
  std::string eval_metric = "l1";
  double d_tp = 20.0;
  std::string eval_split = "test";  // "test" | "train" | "all"
  std::string db_path = "descriptors.db";
  std::string results_path = "recall.csv";
  std::string weights_report_path = "weights_report.csv";
  bool emit_plot = false;

  // synth
  SyntheticSpec synth;
  std::string synth_profile = "mixed";  // "mixed" or a profile name

  std::string indexDir() const;
  ModelConfig modelConfig() const;
};

struct LoadedConfig {
  RunConfig config;
  std::uint64_t hash = 0;
  std::string canonical;  // merged document the hash covers
};

/// Parses a config JSON document (already merged) into a RunConfig.
LoadedConfig parseRunConfig(const std::string& json_text,
                            const std::vector<std::string>& overrides = {});

/// Loads a config file, applies overrides and the data-root environment
/// variable, and computes the config hash.
LoadedConfig loadRunConfig(const std::filesystem::path& path,
                           const std::vector<std::string>& overrides = {});

}  // namespace adafusion

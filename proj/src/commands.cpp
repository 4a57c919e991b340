#include "adafusion/commands.hpp"

#include "adafusion/dataset_io.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <tuple>

namespace adafusion {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> configuredSequences(const RunConfig& cfg) {
  if (!cfg.sequences.empty()) return cfg.sequences;
  return listSequences(cfg.dataset_root);
}

std::vector<IndexedFrame> loadIndex(const RunConfig& cfg) {
  const fs::path frames_csv = fs::path(cfg.indexDir()) / "frames.csv";
  if (!fs::exists(frames_csv)) {
    throw IoError("frame index " + frames_csv.string() + " not found; run prepare first");
  }
  return readFrameIndex(frames_csv);
}

std::vector<Frame> selectSplit(const std::vector<IndexedFrame>& index, const std::string& split,
                               const std::vector<std::string>& sequences) {
  std::set<std::string> wanted(sequences.begin(), sequences.end());
  std::vector<Frame> frames;
  for (const IndexedFrame& row : index) {
    if (split != "all" && row.split != split) continue;
    if (!wanted.empty() && wanted.count(row.frame.sequence_id) == 0) continue;
    frames.push_back(row.frame);
  }
  return frames;
}

std::vector<PreparedFrame> prepareAll(const std::vector<Frame>& frames,
                                      const PreprocessParams& params) {
  DiskFrameSource source;
  std::vector<PreparedFrame> prepared;
  prepared.reserve(frames.size());
  for (const Frame& frame : frames) {
    auto [image, cloud] = source.load(frame);
    prepared.push_back(prepareFrame(frame, image, cloud, params));
  }
  return prepared;
}

}  // namespace

SynthResult runSynth(const LoadedConfig& loaded) {
  const RunConfig& cfg = loaded.config;
  if (cfg.dataset_root.empty()) throw ValidationError("dataset.root is required for synth");
  const SyntheticDataset dataset = generateSyntheticDataset(cfg.synth);
  fs::create_directories(cfg.dataset_root);
  writeSyntheticDataset(dataset, cfg.dataset_root);
  SynthResult result;
  result.root = cfg.dataset_root;
  result.frames = static_cast<int>(dataset.observations.size());
  result.sequences = static_cast<int>(dataset.sequence_ids.size());
  return result;
}

PrepareResult runPrepare(const LoadedConfig& loaded) {
  const RunConfig& cfg = loaded.config;
  if (cfg.dataset_root.empty()) throw ValidationError("dataset.root is required for prepare");

  std::vector<IndexedFrame> index;
  std::vector<Frame> all_train;
  int total_frames = 0;
  for (const std::string& seq : configuredSequences(cfg)) {
    std::vector<Frame> frames = loadSequence(cfg.dataset_root, seq, cfg.max_dt);
    if (frames.empty()) {
      std::cerr << "warning: sequence " << seq << " has no associated frames\n";
    }
    frames = selectFramesByDistance(frames, cfg.frame_spacing);
    const DatasetSplit split = splitRegions(frames, cfg.test_boxes);
    for (const Frame& f : split.train_frames) index.push_back({f, "train"});
    for (const Frame& f : split.test_frames) index.push_back({f, "test"});
    all_train.insert(all_train.end(), split.train_frames.begin(), split.train_frames.end());
    total_frames += static_cast<int>(frames.size());
  }
  std::sort(index.begin(), index.end(), [](const IndexedFrame& a, const IndexedFrame& b) {
    return a.frame.frame_id < b.frame.frame_id;
  });
  std::sort(all_train.begin(), all_train.end(),
            [](const Frame& a, const Frame& b) { return a.frame_id < b.frame_id; });

  Rng rng(mixSeed(cfg.train.seed, "prepare_pairs"));
  const std::vector<PairLabel> pairs =
      minePairs(all_train, cfg.train.d_pos, cfg.train.d_neg, cfg.train.neg_cap, rng);

  const fs::path index_dir = cfg.indexDir();
  fs::create_directories(index_dir);
  const fs::path frames_csv = index_dir / "frames.csv";
  const fs::path pairs_csv = index_dir / "pairs.csv";
  writeFrameIndex(frames_csv, index);
  writePairIndex(pairs_csv, pairs);

  PrepareResult result;
  result.frames_csv = frames_csv.string();
  result.pairs_csv = pairs_csv.string();
  result.frames = total_frames;
  for (const IndexedFrame& row : index) {
    (row.split == "train" ? result.train_frames : result.test_frames) += 1;
  }
  for (const PairLabel& pair : pairs) {
    (pair.y > 0 ? result.positive_pairs : result.negative_pairs) += 1;
  }
  return result;
}

TrainCommandResult runTrain(const LoadedConfig& loaded) {
  const RunConfig& cfg = loaded.config;
  const std::vector<IndexedFrame> index = loadIndex(cfg);
  const std::vector<Frame> train_frames = selectSplit(index, "train", cfg.sequences);
  if (train_frames.size() < 2) {
    throw ValidationError("the training split holds fewer than two frames");
  }

  TrainDataset dataset;
  dataset.preprocess = cfg.preprocess;
  std::vector<PreparedFrame> prepared = prepareAll(train_frames, cfg.preprocess);
  std::tie(dataset.train_frames, dataset.val_frames) =
      splitValidationByRegion(prepared, cfg.val_fraction);

  const TrainResult result =
      train(cfg.modelConfig(), cfg.train, dataset, loaded.hash);

  if (const fs::path p = cfg.checkpoint_path; p.has_parent_path()) {
    fs::create_directories(p.parent_path());
  }
  result.best.save(cfg.checkpoint_path);
  if (const fs::path p = cfg.train_log_path; p.has_parent_path()) {
    fs::create_directories(p.parent_path());
  }
  writeTrainLog(cfg.train_log_path, result.log);

  TrainCommandResult out;
  out.checkpoint_path = cfg.checkpoint_path;
  out.log_path = cfg.train_log_path;
  out.best_ar1 = result.best_ar1;
  out.steps = result.steps;
  out.step_losses = result.step_losses;
  return out;
}

EmbedResult runEmbed(const LoadedConfig& loaded, const std::string& checkpoint_path,
                     const std::vector<std::string>& sequences) {
  const RunConfig& cfg = loaded.config;
  const Checkpoint checkpoint = Checkpoint::load(checkpoint_path);
  AdaFusionNet net = checkpoint.buildModel();

  const std::vector<IndexedFrame> index = loadIndex(cfg);
  const std::vector<std::string>& wanted = sequences.empty() ? cfg.sequences : sequences;
  const std::vector<Frame> frames = selectSplit(index, cfg.eval_split, wanted);

  DiskFrameSource source;
  DescriptorDb db =
      buildDatabase(net, frames, source, cfg.preprocess, checkpoint.contentHash());
  if (const fs::path p = cfg.db_path; p.has_parent_path()) {
    fs::create_directories(p.parent_path());
  }
  db.save(cfg.db_path);

  EmbedResult result;
  result.db_path = cfg.db_path;
  result.frames = db.size();
  return result;
}

EvalResult runEval(const LoadedConfig& loaded, const std::string& db_path,
                   const std::string& checkpoint_path) {
  const RunConfig& cfg = loaded.config;
  DescriptorDb db;
  if (!db_path.empty()) {
    db = DescriptorDb::load(db_path);
  } else if (!checkpoint_path.empty()) {
    const EmbedResult embedded = runEmbed(loaded, checkpoint_path);
    db = DescriptorDb::load(embedded.db_path);
  } else {
    throw ValidationError("eval needs either a descriptor database or a checkpoint");
  }

  const SuiteResult suite =
      averageRecallSuite(db, cfg.eval_ns, cfg.d_tp, parseMetric(cfg.eval_metric));
  if (const fs::path p = cfg.results_path; p.has_parent_path()) {
    fs::create_directories(p.parent_path());
  }
  std::ofstream out(cfg.results_path, std::ios::trunc);
  if (!out) throw IoError("cannot write results " + cfg.results_path);
  out << renderSuiteCsv(suite);
  out.close();
  std::cout << renderSuiteSummary(suite);

  EvalResult result;
  result.results_csv = cfg.results_path;
  result.ar1 = suite.ar1;
  result.ar1pct = suite.ar1pct;
  result.combinations = static_cast<int>(suite.combinations.size());
  return result;
}

WeightsReportResult runWeightsReport(const LoadedConfig& loaded, const std::string& db_path) {
  const RunConfig& cfg = loaded.config;
  const DescriptorDb db = DescriptorDb::load(db_path.empty() ? cfg.db_path : db_path);
  const WeightReport report = weightRatioReport(db);
  if (const fs::path p = cfg.weights_report_path; p.has_parent_path()) {
    fs::create_directories(p.parent_path());
  }
  std::ofstream out(cfg.weights_report_path, std::ios::trunc);
  if (!out) throw IoError("cannot write weights report " + cfg.weights_report_path);
  out << renderWeightReportCsv(report);
  out.close();
  if (cfg.emit_plot) {
    fs::path svg = cfg.weights_report_path;
    svg.replace_extension(".svg");
    writeWeightReportSvg(svg, report);
  }

  WeightsReportResult result;
  result.csv_path = cfg.weights_report_path;
  result.mean_alpha_i = report.mean_alpha_i;
  result.mean_alpha_p = report.mean_alpha_p;
  return result;
}

}  // namespace adafusion

#pragma once

#include "adafusion/common.hpp"
#include "adafusion/data_ingest.hpp"
#include "adafusion/image_io.hpp"
#include "adafusion/retrieval_eval.hpp"
#include "adafusion/synthetic.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace adafusion {

// Dataset directory layout:
//   <root>/<sequence_id>/images/<timestamp>.png
//   <root>/<sequence_id>/clouds/<timestamp>.xyz   (x y z per line, meters)
//   <root>/<sequence_id>/poses.csv                (timestamp,x,y,z)

/// Timestamps in file names and CSVs, fixed 6-decimal rendering.
std::string formatTimestamp(double t);

Matrix readXyz(const std::filesystem::path& path);
void writeXyz(const std::filesystem::path& path, const Matrix& cloud);

struct PoseRow {
  double timestamp = 0.0;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
};

std::vector<PoseRow> readPosesCsv(const std::filesystem::path& path);
void writePosesCsv(const std::filesystem::path& path, const std::vector<PoseRow>& poses);

/// Files `<timestamp>.<extension>` under dir, sorted by timestamp.
std::vector<TimestampedRef> indexDirectory(const std::filesystem::path& dir,
                                           const std::string& extension);

/// Sorted subdirectory names of a dataset root.
std::vector<std::string> listSequences(const std::filesystem::path& root);

/// Loads one sequence: associates images with clouds by timestamp and
/// attaches the pose nearest in time to each frame.
std::vector<Frame> loadSequence(const std::filesystem::path& root,
                                const std::string& sequence_id, double max_dt);

/// Writes a synthetic dataset in the directory layout above.
void writeSyntheticDataset(const SyntheticDataset& dataset, const std::filesystem::path& root);

struct IndexedFrame {
  Frame frame;
  std::string split;  // "train" or "test"
};

/// frames.csv: frame_id,sequence_id,timestamp,x,y,z,image_path,cloud_path,split
void writeFrameIndex(const std::filesystem::path& path, const std::vector<IndexedFrame>& frames);
std::vector<IndexedFrame> readFrameIndex(const std::filesystem::path& path);

/// pairs.csv: frame_a,frame_b,y
void writePairIndex(const std::filesystem::path& path, const std::vector<PairLabel>& pairs);
std::vector<PairLabel> readPairIndex(const std::filesystem::path& path);

/// FrameDataSource reading PNG images and .xyz clouds from disk.
class DiskFrameSource : public FrameDataSource {
 public:
  std::pair<ImageU8, Matrix> load(const Frame& frame) override;
};

}  // namespace adafusion

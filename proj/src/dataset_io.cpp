#include "adafusion/dataset_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace adafusion {

namespace fs = std::filesystem;

std::string formatTimestamp(double t) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", t);
  return buf;
}

namespace {

double parseDouble(const std::string& text, const std::string& context) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw IoError("cannot parse number '" + text + "' in " + context);
  }
}

std::vector<std::string> splitCsvLine(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::string formatCoord(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

Matrix readXyz(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open point cloud " + path.string());
  std::vector<Eigen::Vector3d> points;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    Eigen::Vector3d p;
    if (!(row >> p.x() >> p.y() >> p.z())) {
      throw IoError("malformed point line '" + line + "' in " + path.string());
    }
    points.push_back(p);
  }
  Matrix cloud(static_cast<Eigen::Index>(points.size()), 3);
  for (std::size_t i = 0; i < points.size(); ++i) {
    cloud.row(static_cast<Eigen::Index>(i)) = points[i].transpose();
  }
  return cloud;
}

void writeXyz(const fs::path& path, const Matrix& cloud) {
  if (cloud.size() > 0 && cloud.cols() != 3) throw ValidationError("point cloud must be N x 3");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write point cloud " + path.string());
  for (Eigen::Index i = 0; i < cloud.rows(); ++i) {
    out << formatCoord(cloud(i, 0)) << ' ' << formatCoord(cloud(i, 1)) << ' '
        << formatCoord(cloud(i, 2)) << '\n';
  }
}

std::vector<PoseRow> readPosesCsv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open poses file " + path.string());
  std::vector<PoseRow> poses;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (first && line.rfind("timestamp", 0) == 0) {
      first = false;
      continue;
    }
    first = false;
    const auto fields = splitCsvLine(line);
    if (fields.size() != 4) throw IoError("malformed pose line '" + line + "' in " + path.string());
    PoseRow row;
    row.timestamp = parseDouble(fields[0], path.string());
    row.position = Eigen::Vector3d(parseDouble(fields[1], path.string()),
                                   parseDouble(fields[2], path.string()),
                                   parseDouble(fields[3], path.string()));
    poses.push_back(row);
  }
  return poses;
}

void writePosesCsv(const fs::path& path, const std::vector<PoseRow>& poses) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write poses file " + path.string());
  out << "timestamp,x,y,z\n";
  for (const PoseRow& row : poses) {
    out << formatTimestamp(row.timestamp) << ',' << formatCoord(row.position.x()) << ','
        << formatCoord(row.position.y()) << ',' << formatCoord(row.position.z()) << '\n';
  }
}

std::vector<TimestampedRef> indexDirectory(const fs::path& dir, const std::string& extension) {
  std::vector<TimestampedRef> index;
  if (!fs::exists(dir)) return index;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != extension) continue;
    TimestampedRef ref;
    try {
      ref.timestamp = std::stod(entry.path().stem().string());
    } catch (const std::exception&) {
      continue;  // not a timestamped file
    }
    ref.ref = entry.path().string();
    index.push_back(std::move(ref));
  }
  std::sort(index.begin(), index.end(), [](const TimestampedRef& a, const TimestampedRef& b) {
    return a.timestamp < b.timestamp || (a.timestamp == b.timestamp && a.ref < b.ref);
  });
  return index;
}

std::vector<std::string> listSequences(const fs::path& root) {
  if (!fs::exists(root)) throw IoError("dataset root " + root.string() + " does not exist");
  std::vector<std::string> sequences;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) sequences.push_back(entry.path().filename().string());
  }
  std::sort(sequences.begin(), sequences.end());
  return sequences;
}

std::vector<Frame> loadSequence(const fs::path& root, const std::string& sequence_id,
                                double max_dt) {
  const fs::path seq_dir = root / sequence_id;
  if (!fs::exists(seq_dir)) {
    throw IoError("sequence directory " + seq_dir.string() + " does not exist");
  }
  const auto images = indexDirectory(seq_dir / "images", ".png");
  const auto clouds = indexDirectory(seq_dir / "clouds", ".xyz");
  std::vector<Frame> frames = associateFrames(images, clouds, max_dt);

  const fs::path poses_path = seq_dir / "poses.csv";
  std::vector<PoseRow> poses;
  if (fs::exists(poses_path)) poses = readPosesCsv(poses_path);
  std::sort(poses.begin(), poses.end(),
            [](const PoseRow& a, const PoseRow& b) { return a.timestamp < b.timestamp; });

  for (Frame& frame : frames) {
    frame.sequence_id = sequence_id;
    frame.frame_id = sequence_id + "/" + formatTimestamp(frame.timestamp);
    if (!poses.empty()) {
      const auto it = std::lower_bound(
          poses.begin(), poses.end(), frame.timestamp,
          [](const PoseRow& row, double t) { return row.timestamp < t; });
      const PoseRow* best = nullptr;
      if (it != poses.end()) best = &*it;
      if (it != poses.begin()) {
        const PoseRow* prev = &*(it - 1);
        if (best == nullptr || std::abs(prev->timestamp - frame.timestamp) <=
                                   std::abs(best->timestamp - frame.timestamp)) {
          best = prev;
        }
      }
      frame.position = best->position;
    }
  }
  return frames;
}

void writeSyntheticDataset(const SyntheticDataset& dataset, const fs::path& root) {
  for (const std::string& seq : dataset.sequence_ids) {
    fs::create_directories(root / seq / "images");
    fs::create_directories(root / seq / "clouds");
  }
  std::vector<std::vector<PoseRow>> poses(dataset.sequence_ids.size());
  for (const SyntheticObservation& obs : dataset.observations) {
    const auto seq_it = std::find(dataset.sequence_ids.begin(), dataset.sequence_ids.end(),
                                  obs.frame.sequence_id);
    if (seq_it == dataset.sequence_ids.end()) {
      throw ValidationError("observation references unknown sequence " + obs.frame.sequence_id);
    }
    const auto seq_index =
        static_cast<std::size_t>(seq_it - dataset.sequence_ids.begin());
    const std::string stamp = formatTimestamp(obs.frame.timestamp);
    const fs::path seq_dir = root / obs.frame.sequence_id;
    writePng(seq_dir / "images" / (stamp + ".png"), obs.image);
    writeXyz(seq_dir / "clouds" / (stamp + ".xyz"), obs.cloud);
    poses[seq_index].push_back(PoseRow{obs.frame.timestamp, obs.frame.position});
  }
  for (std::size_t s = 0; s < dataset.sequence_ids.size(); ++s) {
    std::sort(poses[s].begin(), poses[s].end(),
              [](const PoseRow& a, const PoseRow& b) { return a.timestamp < b.timestamp; });
    writePosesCsv(root / dataset.sequence_ids[s] / "poses.csv", poses[s]);
  }
}

void writeFrameIndex(const fs::path& path, const std::vector<IndexedFrame>& frames) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write frame index " + path.string());
  out << "frame_id,sequence_id,timestamp,x,y,z,image_path,cloud_path,split\n";
  for (const IndexedFrame& row : frames) {
    const Frame& f = row.frame;
    out << f.frame_id << ',' << f.sequence_id << ',' << formatTimestamp(f.timestamp) << ','
        << formatCoord(f.position.x()) << ',' << formatCoord(f.position.y()) << ','
        << formatCoord(f.position.z()) << ',' << f.image_ref << ',' << f.cloud_ref << ','
        << row.split << '\n';
  }
}

std::vector<IndexedFrame> readFrameIndex(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open frame index " + path.string());
  std::vector<IndexedFrame> frames;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (header) {
      header = false;
      if (line.rfind("frame_id", 0) == 0) continue;
    }
    const auto fields = splitCsvLine(line);
    if (fields.size() != 9) {
      throw IoError("malformed frame index line '" + line + "' in " + path.string());
    }
    IndexedFrame row;
    row.frame.frame_id = fields[0];
    row.frame.sequence_id = fields[1];
    row.frame.timestamp = parseDouble(fields[2], path.string());
    row.frame.position = Eigen::Vector3d(parseDouble(fields[3], path.string()),
                                         parseDouble(fields[4], path.string()),
                                         parseDouble(fields[5], path.string()));
    row.frame.image_ref = fields[6];
    row.frame.cloud_ref = fields[7];
    row.split = fields[8];
    if (row.split != "train" && row.split != "test") {
      throw IoError("unknown split '" + row.split + "' in " + path.string());
    }
    frames.push_back(std::move(row));
  }
  return frames;
}

void writePairIndex(const fs::path& path, const std::vector<PairLabel>& pairs) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write pair index " + path.string());
  out << "frame_a,frame_b,y\n";
  for (const PairLabel& pair : pairs) {
    out << pair.frame_a << ',' << pair.frame_b << ',' << pair.y << '\n';
  }
}

std::vector<PairLabel> readPairIndex(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open pair index " + path.string());
  std::vector<PairLabel> pairs;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (header) {
      header = false;
      if (line.rfind("frame_a", 0) == 0) continue;
    }
    const auto fields = splitCsvLine(line);
    if (fields.size() != 3) {
      throw IoError("malformed pair line '" + line + "' in " + path.string());
    }
    PairLabel pair;
    pair.frame_a = fields[0];
    pair.frame_b = fields[1];
    pair.y = static_cast<int>(parseDouble(fields[2], path.string()));
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

std::pair<ImageU8, Matrix> DiskFrameSource::load(const Frame& frame) {
  return {readPng(frame.image_ref), readXyz(frame.cloud_ref)};
}

}  // namespace adafusion

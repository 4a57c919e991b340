#include "adafusion/retrieval_eval.hpp"

#include "adafusion/serialize.hpp"
#include "adafusion/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

namespace adafusion {

namespace {

constexpr char kDbMagic[8] = {'A', 'D', 'A', 'F', 'D', 'B', '0', '0'};

std::string formatReal(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double rowDistance(const Matrix& descriptors, Eigen::Index col, const Vector& query,
                   Metric metric) {
  if (metric == Metric::kL1) return (descriptors.col(col) - query).lpNorm<1>();
  return (descriptors.col(col) - query).norm();
}

}  // namespace

Metric parseMetric(const std::string& name) {
  if (name == "l1" || name == "L1") return Metric::kL1;
  if (name == "l2" || name == "L2") return Metric::kL2;
  throw ValidationError("unknown metric '" + name + "' (expected l1 or l2)");
}

std::string metricName(Metric metric) { return metric == Metric::kL1 ? "l1" : "l2"; }

DescriptorDb DescriptorDb::filterSequence(const std::string& sequence_id) const {
  DescriptorDb out;
  out.checkpoint_hash = checkpoint_hash;
  std::vector<int> keep;
  for (int i = 0; i < size(); ++i) {
    if (sequence_ids[static_cast<std::size_t>(i)] == sequence_id) keep.push_back(i);
  }
  out.descriptors.resize(descriptors.rows(), static_cast<Eigen::Index>(keep.size()));
  out.alphas.resize(2, static_cast<Eigen::Index>(keep.size()));
  out.positions.resize(3, static_cast<Eigen::Index>(keep.size()));
  for (std::size_t i = 0; i < keep.size(); ++i) {
    const int src = keep[i];
    out.descriptors.col(static_cast<Eigen::Index>(i)) = descriptors.col(src);
    out.alphas.col(static_cast<Eigen::Index>(i)) = alphas.col(src);
    out.positions.col(static_cast<Eigen::Index>(i)) = positions.col(src);
    out.frame_ids.push_back(frame_ids[static_cast<std::size_t>(src)]);
    out.sequence_ids.push_back(sequence_ids[static_cast<std::size_t>(src)]);
  }
  return out;
}

std::vector<std::string> DescriptorDb::sequences() const {
  std::set<std::string> unique(sequence_ids.begin(), sequence_ids.end());
  return {unique.begin(), unique.end()};
}

std::string DescriptorDb::serialize() const {
  std::ostringstream out(std::ios::binary);
  out.write(kDbMagic, sizeof(kDbMagic));
  io::writeU32(out, kFormatVersion);
  io::writeU64(out, checkpoint_hash);
  io::writeU32(out, static_cast<std::uint32_t>(size()));
  io::writeMatrix(out, descriptors);
  io::writeMatrix(out, alphas);
  io::writeMatrix(out, positions);
  for (const auto& id : frame_ids) io::writeString(out, id);
  for (const auto& id : sequence_ids) io::writeString(out, id);
  return std::move(out).str();
}

DescriptorDb DescriptorDb::deserialize(const std::string& bytes) {
  std::istringstream in(bytes, std::ios::binary);
  char magic[8];
  io::readRaw(in, magic, sizeof(magic), "magic");
  if (!std::equal(magic, magic + 8, kDbMagic)) throw IoError("not a descriptor database");
  const std::uint32_t version = io::readU32(in, "format version");
  if (version != kFormatVersion) {
    throw IoError("unsupported descriptor database version " + std::to_string(version));
  }
  DescriptorDb db;
  db.checkpoint_hash = io::readU64(in, "checkpoint hash");
  const std::uint32_t n = io::readU32(in, "row count");
  db.descriptors = io::readMatrix(in, "descriptors");
  db.alphas = io::readMatrix(in, "alphas");
  db.positions = io::readMatrix(in, "positions");
  if (db.descriptors.cols() != n || db.alphas.cols() != n || db.positions.cols() != n) {
    throw IoError("descriptor database row counts are inconsistent");
  }
  db.frame_ids.reserve(n);
  db.sequence_ids.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) db.frame_ids.push_back(io::readString(in, "frame id"));
  for (std::uint32_t i = 0; i < n; ++i) {
    db.sequence_ids.push_back(io::readString(in, "sequence id"));
  }
  return db;
}

void DescriptorDb::save(const std::filesystem::path& path) const {
  const std::string bytes = serialize();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write descriptor database " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing descriptor database " + path.string());
}

DescriptorDb DescriptorDb::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open descriptor database " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return deserialize(std::move(buffer).str());
}

DescriptorDb buildDatabase(AdaFusionNet& net, const std::vector<Frame>& frames,
                           FrameDataSource& source, const PreprocessParams& params,
                           std::uint64_t checkpoint_hash) {
  std::vector<PreparedFrame> prepared;
  prepared.reserve(frames.size());
  for (const Frame& frame : frames) {
    try {
      auto [image, cloud] = source.load(frame);
      prepared.push_back(prepareFrame(frame, image, cloud, params));
    } catch (const std::exception& e) {
      std::cerr << "warning: skipping frame " << frame.frame_id << ": " << e.what() << "\n";
    }
  }
  DescriptorDb db;
  db.checkpoint_hash = checkpoint_hash;
  if (prepared.empty()) {
    db.descriptors.resize(net.descriptorDim(), 0);
    db.alphas.resize(2, 0);
    db.positions.resize(3, 0);
    return db;
  }
  auto [descriptors, alphas] = embedFrames(net, prepared, params);
  db.descriptors = std::move(descriptors);
  db.alphas = std::move(alphas);
  db.positions.resize(3, static_cast<Eigen::Index>(prepared.size()));
  for (std::size_t i = 0; i < prepared.size(); ++i) {
    db.positions.col(static_cast<Eigen::Index>(i)) = prepared[i].frame.position;
    db.frame_ids.push_back(prepared[i].frame.frame_id);
    db.sequence_ids.push_back(prepared[i].frame.sequence_id);
  }
  return db;
}

std::vector<int> knnQuery(const DescriptorDb& db, const Vector& query, int n, Metric metric) {
  if (db.size() == 0) throw ValidationError("knn query against an empty database");
  if (n <= 0 || n > db.size()) {
    throw ValidationError("knn query size must lie in [1, database size]");
  }
  if (query.size() != db.descriptors.rows()) {
    throw ValidationError("query descriptor length mismatch");
  }
  std::vector<int> order(static_cast<std::size_t>(db.size()));
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> dist(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    dist[i] = rowDistance(db.descriptors, static_cast<Eigen::Index>(i), query, metric);
  }
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (dist[static_cast<std::size_t>(a)] != dist[static_cast<std::size_t>(b)]) {
      return dist[static_cast<std::size_t>(a)] < dist[static_cast<std::size_t>(b)];
    }
    return db.frame_ids[static_cast<std::size_t>(a)] < db.frame_ids[static_cast<std::size_t>(b)];
  });
  order.resize(static_cast<std::size_t>(n));
  return order;
}

RecallResult recallAtN(const DescriptorDb& queries, const DescriptorDb& db,
                       const std::vector<int>& ns, double d_tp, Metric metric) {
  if (db.size() == 0) throw ValidationError("recall against an empty database");
  RecallResult result;
  result.n1pct = std::max(1, static_cast<int>(std::ceil(0.01 * db.size())));
  std::set<int> levels(ns.begin(), ns.end());
  levels.insert(1);
  levels.insert(result.n1pct);
  for (int n : levels) {
    if (n <= 0) throw ValidationError("recall levels must be positive");
  }

  std::map<int, int> successes;
  for (int n : levels) successes[n] = 0;
  int counted = 0;
  for (int q = 0; q < queries.size(); ++q) {
    const Eigen::Vector3d query_pos = queries.positions.col(q);
    bool has_tp = false;
    for (int j = 0; j < db.size(); ++j) {
      if ((db.positions.col(j) - query_pos).norm() <= d_tp) {
        has_tp = true;
        break;
      }
    }
    if (!has_tp) continue;
    ++counted;
    const std::vector<int> ranked =
        knnQuery(db, queries.descriptors.col(q), db.size(), metric);
    int first_tp_rank = db.size() + 1;
    for (std::size_t r = 0; r < ranked.size(); ++r) {
      if ((db.positions.col(ranked[r]) - query_pos).norm() <= d_tp) {
        first_tp_rank = static_cast<int>(r) + 1;
        break;
      }
    }
    for (int n : levels) {
      if (first_tp_rank <= std::min(n, db.size())) ++successes[n];
    }
  }

  result.n_queries = counted;
  for (int n : levels) {
    result.recall_at[n] =
        counted == 0 ? 0.0 : static_cast<double>(successes[n]) / static_cast<double>(counted);
  }
  result.ar1 = result.recall_at[1];
  result.ar1pct = result.recall_at[result.n1pct];
  return result;
}

SuiteResult averageRecallSuite(const DescriptorDb& db, const std::vector<int>& ns, double d_tp,
                               Metric metric) {
  const std::vector<std::string> sequences = db.sequences();
  if (sequences.size() < 2) {
    throw ValidationError("the evaluation suite needs at least two sequences");
  }
  std::vector<DescriptorDb> per_sequence;
  per_sequence.reserve(sequences.size());
  for (const auto& seq : sequences) per_sequence.push_back(db.filterSequence(seq));

  SuiteResult suite;
  int combination = 0;
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    for (std::size_t j = i + 1; j < sequences.size(); ++j) {
      ++combination;
      RecallResult forward = recallAtN(per_sequence[i], per_sequence[j], ns, d_tp, metric);
      forward.query_seq = sequences[i];
      forward.db_seq = sequences[j];
      RecallResult reverse = recallAtN(per_sequence[j], per_sequence[i], ns, d_tp, metric);
      reverse.query_seq = sequences[j];
      reverse.db_seq = sequences[i];

      SuiteResult::Combination combo;
      combo.combination = combination;
      combo.seq_a = sequences[i];
      combo.seq_b = sequences[j];
      for (const auto& [n, r] : forward.recall_at) {
        const auto it = reverse.recall_at.find(n);
        if (it != reverse.recall_at.end()) combo.recall_at[n] = 0.5 * (r + it->second);
      }
      combo.ar1 = 0.5 * (forward.ar1 + reverse.ar1);
      combo.ar1pct = 0.5 * (forward.ar1pct + reverse.ar1pct);
      suite.combinations.push_back(combo);
      suite.assignments.push_back({combination, std::move(forward)});
      suite.assignments.push_back({combination, std::move(reverse)});
    }
  }
  for (const auto& combo : suite.combinations) {
    suite.ar1 += combo.ar1;
    suite.ar1pct += combo.ar1pct;
  }
  suite.ar1 /= static_cast<double>(suite.combinations.size());
  suite.ar1pct /= static_cast<double>(suite.combinations.size());
  return suite;
}

std::string renderSuiteCsv(const SuiteResult& suite) {
  std::string out = "combination,query_seq,db_seq,N,recall\n";
  for (const auto& assignment : suite.assignments) {
    for (const auto& [n, recall] : assignment.recall.recall_at) {
      out += std::to_string(assignment.combination) + "," + assignment.recall.query_seq + "," +
             assignment.recall.db_seq + "," + std::to_string(n) + "," + formatReal(recall) + "\n";
    }
  }
  return out;
}

std::string renderSuiteSummary(const SuiteResult& suite) {
  std::ostringstream out;
  out << "combinations: " << suite.combinations.size() << "\n";
  char line[160];
  for (const auto& combo : suite.combinations) {
    std::snprintf(line, sizeof(line), "  [%3d] %s <-> %s  AR@1 %.4f  AR@1%% %.4f\n",
                  combo.combination, combo.seq_a.c_str(), combo.seq_b.c_str(), combo.ar1,
                  combo.ar1pct);
    out << line;
  }
  std::snprintf(line, sizeof(line), "mean AR@1 %.4f  mean AR@1%% %.4f\n", suite.ar1,
                suite.ar1pct);
  out << line;
  return out.str();
}

WeightReport weightRatioReport(const DescriptorDb& db) {
  if (db.size() == 0) throw ValidationError("weight report needs a non-empty database");
  WeightReport report;
  report.mean_alpha_i = db.alphas.row(0).mean();
  report.mean_alpha_p = db.alphas.row(1).mean();
  report.degenerate_mean = report.mean_alpha_i == 0.0 || report.mean_alpha_p == 0.0;
  for (int i = 0; i < db.size(); ++i) {
    WeightReportRow row;
    row.frame_id = db.frame_ids[static_cast<std::size_t>(i)];
    row.sequence_id = db.sequence_ids[static_cast<std::size_t>(i)];
    row.alpha_i = db.alphas(0, i);
    row.alpha_p = db.alphas(1, i);
    if (report.degenerate_mean) {
      row.ratio_i_pct = row.alpha_i;
      row.ratio_p_pct = row.alpha_p;
    } else {
      row.ratio_i_pct = 100.0 * row.alpha_i / report.mean_alpha_i;
      row.ratio_p_pct = 100.0 * row.alpha_p / report.mean_alpha_p;
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

std::string renderWeightReportCsv(const WeightReport& report) {
  std::string out = "frame_id,sequence_id,alpha_i,alpha_p,ratio_i_pct,ratio_p_pct,degenerate\n";
  for (const auto& row : report.rows) {
    out += row.frame_id + "," + row.sequence_id + "," + formatReal(row.alpha_i) + "," +
           formatReal(row.alpha_p) + "," + formatReal(row.ratio_i_pct) + "," +
           formatReal(row.ratio_p_pct) + "," + (report.degenerate_mean ? "1" : "0") + "\n";
  }
  return out;
}

void writeWeightReportSvg(const std::filesystem::path& path, const WeightReport& report) {
  const int width = 800, height = 300, pad = 30;
  double max_ratio = 0.0;
  for (const auto& row : report.rows) {
    max_ratio = std::max({max_ratio, row.ratio_i_pct, row.ratio_p_pct});
  }
  if (max_ratio <= 0.0) max_ratio = 1.0;
  const auto n = static_cast<double>(report.rows.size());
  auto polyline = [&](auto value_of) {
    std::string points;
    for (std::size_t i = 0; i < report.rows.size(); ++i) {
      const double x = pad + (width - 2 * pad) * (n > 1 ? static_cast<double>(i) / (n - 1) : 0.5);
      const double y =
          height - pad - (height - 2 * pad) * (value_of(report.rows[i]) / max_ratio);
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.1f,%.1f ", x, y);
      points += buf;
    }
    return points;
  };
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write plot " + path.string());
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height
      << "'>\n"
      << "<rect width='100%' height='100%' fill='white'/>\n"
      << "<polyline fill='none' stroke='#1f77b4' stroke-width='1.5' points='"
      << polyline([](const WeightReportRow& r) { return r.ratio_i_pct; }) << "'/>\n"
      << "<polyline fill='none' stroke='#ff7f0e' stroke-width='1.5' points='"
      << polyline([](const WeightReportRow& r) { return r.ratio_p_pct; }) << "'/>\n"
      << "<text x='" << pad << "' y='15' font-size='12'>visual (blue) / lidar (orange) weight "
      << "ratio vs frame index</text>\n"
      << "</svg>\n";
}

}  // namespace adafusion

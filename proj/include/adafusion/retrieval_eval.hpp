#pragma once

#include "adafusion/common.hpp"
#include "adafusion/data_ingest.hpp"
#include "adafusion/image_io.hpp"
#include "adafusion/model.hpp"
#include "adafusion/preprocess.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace adafusion {

enum class Metric { kL1, kL2 };

Metric parseMetric(const std::string& name);
std::string metricName(Metric metric);

/// Immutable array of descriptors plus frame metadata supporting KNN
/// queries. Row order is the build order.
struct DescriptorDb {
  static constexpr std::uint32_t kFormatVersion = 1;

  Matrix descriptors;  // dim x n
  Matrix alphas;       // 2 x n (alpha_image, alpha_lidar)
  Matrix positions;    // 3 x n, meters
  std::vector<std::string> frame_ids;
  std::vector<std::string> sequence_ids;
  std::uint64_t checkpoint_hash = 0;

  int size() const { return static_cast<int>(descriptors.cols()); }
  int dim() const { return static_cast<int>(descriptors.rows()); }

  /// Sub-database restricted to one sequence (row order preserved).
  DescriptorDb filterSequence(const std::string& sequence_id) const;

  /// Sorted unique sequence ids.
  std::vector<std::string> sequences() const;

  std::string serialize() const;
  static DescriptorDb deserialize(const std::string& bytes);
  void save(const std::filesystem::path& path) const;
  static DescriptorDb load(const std::filesystem::path& path);
};

/// Loads the raw modality data behind a frame reference.
class FrameDataSource {
 public:
  virtual ~FrameDataSource() = default;
  virtual std::pair<ImageU8, Matrix> load(const Frame& frame) = 0;
};

/// Embeds frames in inference mode into a database; frames whose
/// preprocessing fails are skipped with a warning on stderr.
DescriptorDb buildDatabase(AdaFusionNet& net, const std::vector<Frame>& frames,
                           FrameDataSource& source, const PreprocessParams& params,
                           std::uint64_t checkpoint_hash);

/// Indices of the n nearest database rows, ascending distance, ties broken
/// by frame_id.
std::vector<int> knnQuery(const DescriptorDb& db, const Vector& query, int n, Metric metric);

struct RecallResult {
  std::map<int, double> recall_at;  // N -> fraction in [0, 1]
  double ar1 = 0.0;
  double ar1pct = 0.0;
  int n1pct = 1;       // N used for AR@1% (max(1, ceil(0.01 * db size)))
  int n_queries = 0;   // queries with at least one possible true positive
  std::string query_seq;
  std::string db_seq;
};

/// recall@N: a query succeeds at N iff one of its top-N retrievals lies
/// within d_tp meters of the query position. Queries with no true positive
/// anywhere in the database are excluded from the denominator.
RecallResult recallAtN(const DescriptorDb& queries, const DescriptorDb& db,
                       const std::vector<int>& ns, double d_tp, Metric metric);

struct SuiteResult {
  struct Assignment {
    int combination = 0;
    RecallResult recall;  // carries query_seq / db_seq
  };
  struct Combination {
    int combination = 0;
    std::string seq_a, seq_b;
    std::map<int, double> recall_at;  // role-averaged
    double ar1 = 0.0;
    double ar1pct = 0.0;
  };
  std::vector<Assignment> assignments;  // two per combination
  std::vector<Combination> combinations;
  double ar1 = 0.0;     // mean over combinations
  double ar1pct = 0.0;  // mean over combinations
};

/// Evaluates every unordered sequence pair in both role assignments
/// (query <-> database), averaging the two into one combination result.
SuiteResult averageRecallSuite(const DescriptorDb& db, const std::vector<int>& ns, double d_tp,
                               Metric metric);

std::string renderSuiteCsv(const SuiteResult& suite);
std::string renderSuiteSummary(const SuiteResult& suite);

struct WeightReportRow {
  std::string frame_id;
  std::string sequence_id;
  double alpha_i = 0.0;
  double alpha_p = 0.0;
  double ratio_i_pct = 0.0;
  double ratio_p_pct = 0.0;
};

/// Per-frame adaptive weights as percentages of the database means. When a
/// mean is zero the raw weights are reported instead and the degenerate flag
/// is set.
struct WeightReport {
  std::vector<WeightReportRow> rows;
  double mean_alpha_i = 0.0;
  double mean_alpha_p = 0.0;
  bool degenerate_mean = false;
};

WeightReport weightRatioReport(const DescriptorDb& db);
std::string renderWeightReportCsv(const WeightReport& report);

/// Minimal SVG polyline plot of the two ratio traces over frame index.
void writeWeightReportSvg(const std::filesystem::path& path, const WeightReport& report);

}  // namespace adafusion

#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mtlrank/common.hpp"
#include "mtlrank/rng.hpp"

namespace mtlrank::letor {

// --- raw LETOR/SVMLight data ---------------------------------------------------

struct RawItem {
  int grade = 0;
  std::map<int, double> features;  // 1-based sparse ids; missing means 0.0
  bool operator==(const RawItem&) const = default;
};

struct RawQuery {
  std::string qid;
  std::vector<RawItem> items;
  bool operator==(const RawQuery&) const = default;
};

struct RawDataset {
  std::vector<RawQuery> queries;  // ordered by first appearance in the file
  std::size_t max_feature_id = 0;
  bool operator==(const RawDataset&) const = default;
};

// Lines of the form `<grade> qid:<id> <fid>:<val> ... [# comment]`.
// Malformed input raises an Error naming the line number.
RawDataset parse_letor(std::istream& in);
RawDataset parse_letor_file(const std::string& path);
void serialize_letor(const RawDataset& ds, std::ostream& out);

// --- multi-task derivation -------------------------------------------------------

struct TaskDerivationSpec {
  // WEB30K protocol: Click 131, Dwell 132, QS 133, QS2 135.
  std::vector<int> auxiliary_ids = {131, 132, 133, 135};
  // >= 2: quantile-bin auxiliary values into this many grades; 0 = raw values.
  int quantile_bins = 5;
  // indices into {0 = original grade, 1.. = auxiliary tasks}; empty = all.
  std::vector<std::size_t> task_subset;
  // 0 = use the max feature id observed in the data.
  std::size_t num_features = 0;
};

struct DerivationStats {
  std::size_t num_features = 0;
  std::map<int, std::vector<double>> bin_edges;  // per auxiliary id, ascending
  bool operator==(const DerivationStats&) const = default;
};

struct NormalizationStats {
  std::vector<double> mean;  // of log(1+|v|)sign(v)-transformed features
  std::vector<double> stdev;
  bool operator==(const NormalizationStats&) const = default;
};

struct TaskQuery {
  std::string qid;
  std::vector<std::vector<double>> features;  // l rows of d_in
  std::vector<std::vector<double>> labels;    // l rows of K
  bool operator==(const TaskQuery&) const = default;
};

struct MultiTaskDataset {
  std::vector<TaskQuery> queries;
  std::size_t d_in = 0;
  std::size_t num_tasks = 0;
  std::vector<std::size_t> task_subset;  // resolved indices
  DerivationStats derivation;
  std::optional<NormalizationStats> normalization;
  bool operator==(const MultiTaskDataset&) const = default;
};

// Builds per-item task labels (Task 0 = grade, one task per auxiliary id) and
// strips auxiliary columns from the inputs. Bin edges come from `reuse` when
// given (validation/test) and are computed from `raw` otherwise (training).
MultiTaskDataset derive_tasks(const RawDataset& raw, const TaskDerivationSpec& spec,
                              const DerivationStats* reuse = nullptr);

// log(1+|v|)sign(v) then z-score; training statistics are computed when
// `reuse` is null and applied verbatim otherwise. Zero-variance features map
// to zero.
NormalizationStats normalize_features(MultiTaskDataset& ds,
                                      const NormalizationStats* reuse = nullptr);

// --- batching --------------------------------------------------------------------

struct PaddedBatch {
  std::size_t size = 0;      // B
  std::size_t list_len = 0;  // L (max real length in this batch, <= cap)
  std::size_t feat_dim = 0;
  std::size_t tasks = 0;
  std::vector<double> features;      // B*L*d_in row-major
  std::vector<std::uint8_t> mask;    // B*L; 1 = real item
  std::vector<double> labels;        // B*L*K
  double label(std::size_t b, std::size_t i, std::size_t k) const {
    return labels[(b * list_len + i) * tasks + k];
  }
};

// Deterministic epoch batching: queries are shuffled by (seed, epoch); lists
// longer than the cap keep a seeded random subset that preserves at least one
// positive-label item per task when possible.
class Batcher {
 public:
  Batcher(const MultiTaskDataset& ds, std::size_t batch_size, std::size_t max_list_len,
          std::uint64_t seed);
  std::vector<PaddedBatch> epoch(std::size_t epoch_index) const;

 private:
  const MultiTaskDataset* ds_;
  std::size_t batch_size_;
  std::size_t cap_;
  std::uint64_t seed_;
};

// --- binary cache ------------------------------------------------------------------
// Layout (little-endian): 16-byte magic "MTLRANK-DATA-V1\0", u64 header
// length, JSON header (dims, stats, qids, list lengths), then per query the
// feature matrix and label matrix as f64. See README for the full layout.

inline constexpr char kDataMagic[16] = {'M', 'T', 'L', 'R', 'A', 'N', 'K', '-',
                                        'D', 'A', 'T', 'A', '-', 'V', '1', '\0'};

void save_cache(const MultiTaskDataset& ds, const std::string& path);
MultiTaskDataset load_cache(const std::string& path);

// --- synthetic data ---------------------------------------------------------------

struct SynthSpec {
  std::size_t n_queries = 500;
  std::size_t list_len = 20;
  std::size_t d_f = 10;   // model-visible feature count
  std::size_t n_aux = 1;  // auxiliary label features appended after d_f
  int grades = 5;
  double noise = 0.0;
  std::uint64_t seed = 1;
};

// Random feature lists whose grade and auxiliary columns are quantile-binned
// values of distinct random linear score functions of the visible features.
RawDataset make_synthetic(const SynthSpec& spec);

}  // namespace mtlrank::letor

#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "mtlrank/common.hpp"

namespace mtlrank::metrics {

// Per-task metric or loss values with a per-coordinate orientation flag:
// true = higher is better (e.g. NDCG), false = lower is better (e.g. loss).
struct MetricPoint {
  std::vector<double> values;
  std::vector<bool> higher_better;
};

struct FrontSet {
  std::vector<MetricPoint> points;
  std::vector<bool> non_dominated;
};

// Labels rearranged into descending-score order, score ties broken by
// ascending original index.
std::vector<double> ranked_labels(const std::vector<double>& scores,
                                  const std::vector<double>& labels);

// NDCG@k with exponential gain 2^y - 1 and log2(rank+1) discount. Lists whose
// ideal DCG is zero (all labels zero) score 1.0: they are unrankable, and the
// convention is recorded per report so it can be audited.
double ndcg_at_k(const std::vector<double>& labels_in_score_order, std::size_t k);

// true iff a dominates b: at least as good everywhere, strictly better once.
bool dominates(const MetricPoint& a, const MetricPoint& b);

FrontSet pareto_filter(const std::vector<MetricPoint>& points);

// Hypervolume of minimization points against a reference box. Exact sweep for
// K = 2, inclusion-exclusion over the non-dominated set for K = 3 (front size
// capped at 20 there), K >= 4 unsupported. Points not coordinate-wise <= ref
// are dropped.
double hypervolume(const std::vector<std::vector<double>>& points,
                   const std::vector<double>& ref);

// Flips higher-is-better coordinates so hypervolume always runs in
// minimization space.
std::vector<double> to_minimization(const MetricPoint& p);

// Coordinate-wise max plus 0.1 over minimization points.
std::vector<double> default_reference(const std::vector<std::vector<double>>& points);

// Hypervolume of metric points, orientation-aware; ref defaults as above.
double hvi(const std::vector<MetricPoint>& points,
           const std::optional<std::vector<double>>& ref = std::nullopt);

// Average signed relative change vs single-task baselines, in percent; lower
// is better.
double delta_m_percent(const MetricPoint& model, const MetricPoint& baseline);

}  // namespace mtlrank::metrics

#include "mtlrank/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace mtlrank::metrics {

std::vector<double> ranked_labels(const std::vector<double>& scores,
                                  const std::vector<double>& labels) {
  check(scores.size() == labels.size(), "ranked_labels: size mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<double> out(labels.size());
  for (std::size_t i = 0; i < order.size(); ++i) out[i] = labels[order[i]];
  return out;
}

namespace {

double dcg_at_k(const std::vector<double>& labels, std::size_t k) {
  double s = 0.0;
  for (std::size_t i = 0; i < labels.size() && i < k; ++i)
    s += (std::pow(2.0, labels[i]) - 1.0) / std::log2(static_cast<double>(i) + 2.0);
  return s;
}

}  // namespace

double ndcg_at_k(const std::vector<double>& labels_in_score_order, std::size_t k) {
  check(k >= 1, "ndcg_at_k: cutoff must be >= 1");
  check(!labels_in_score_order.empty(), "ndcg_at_k: empty list");
  for (double y : labels_in_score_order) check(y >= 0.0, "ndcg_at_k: negative label");
  std::vector<double> ideal = labels_in_score_order;
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  const double idcg = dcg_at_k(ideal, k);
  if (idcg == 0.0) return 1.0;
  return dcg_at_k(labels_in_score_order, k) / idcg;
}

bool dominates(const MetricPoint& a, const MetricPoint& b) {
  check(a.values.size() == b.values.size() && a.higher_better == b.higher_better,
        "dominates: inconsistent points");
  bool strict = false;
  for (std::size_t d = 0; d < a.values.size(); ++d) {
    const double x = a.higher_better[d] ? -a.values[d] : a.values[d];
    const double y = a.higher_better[d] ? -b.values[d] : b.values[d];
    if (x > y) return false;
    if (x < y) strict = true;
  }
  return strict;
}

FrontSet pareto_filter(const std::vector<MetricPoint>& points) {
  for (const auto& p : points)
    check(p.values.size() == p.higher_better.size(), "pareto_filter: orientation mismatch");
  FrontSet fs;
  fs.points = points;
  fs.non_dominated.assign(points.size(), true);
  for (std::size_t i = 0; i < points.size(); ++i)
    for (std::size_t j = 0; j < points.size(); ++j) {
      if (i == j) continue;
      if (dominates(points[j], points[i])) {
        fs.non_dominated[i] = false;
        break;
      }
    }
  return fs;
}

namespace {

// Keeps points <= ref, then drops dominated ones (pure minimization space).
std::vector<std::vector<double>> clean_front(const std::vector<std::vector<double>>& points,
                                             const std::vector<double>& ref) {
  std::vector<std::vector<double>> kept;
  for (const auto& p : points) {
    check(p.size() == ref.size(), "hypervolume: dimension mismatch");
    bool inside = true;
    for (std::size_t d = 0; d < p.size(); ++d)
      if (p[d] > ref[d]) {
        inside = false;
        break;
      }
    if (inside) kept.push_back(p);
  }
  std::vector<std::vector<double>> front;
  for (std::size_t i = 0; i < kept.size(); ++i) {
    bool dominated = false;
    for (std::size_t j = 0; j < kept.size() && !dominated; ++j) {
      if (i == j) continue;
      bool all = true, strict = false;
      for (std::size_t d = 0; d < ref.size(); ++d) {
        if (kept[j][d] > kept[i][d]) all = false;
        if (kept[j][d] < kept[i][d]) strict = true;
      }
      dominated = all && strict;
    }
    if (!dominated) front.push_back(kept[i]);
  }
  return front;
}

double hypervolume_2d(std::vector<std::vector<double>> front, const std::vector<double>& ref) {
  std::sort(front.begin(), front.end());
  // de-duplicate identical points left by the dominance filter
  front.erase(std::unique(front.begin(), front.end()), front.end());
  double hv = 0.0;
  for (std::size_t i = 0; i < front.size(); ++i) {
    const double next_x = i + 1 < front.size() ? front[i + 1][0] : ref[0];
    hv += (next_x - front[i][0]) * (ref[1] - front[i][1]);
  }
  return hv;
}

double hypervolume_3d(const std::vector<std::vector<double>>& front,
                      const std::vector<double>& ref) {
  check(front.size() <= 20, "hypervolume: K=3 front too large for inclusion-exclusion");
  const std::size_t n = front.size();
  double hv = 0.0;
  for (std::size_t mask = 1; mask < (1u << n); ++mask) {
    double corner[3] = {-std::numeric_limits<double>::infinity(),
                        -std::numeric_limits<double>::infinity(),
                        -std::numeric_limits<double>::infinity()};
    int bits = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!(mask & (1u << i))) continue;
      ++bits;
      for (int d = 0; d < 3; ++d) corner[d] = std::max(corner[d], front[i][d]);
    }
    double vol = 1.0;
    for (int d = 0; d < 3; ++d) vol *= std::max(0.0, ref[d] - corner[d]);
    hv += (bits % 2 == 1 ? 1.0 : -1.0) * vol;
  }
  return hv;
}

}  // namespace

double hypervolume(const std::vector<std::vector<double>>& points,
                   const std::vector<double>& ref) {
  check(!ref.empty() && ref.size() <= 3, "hypervolume: only K in {1,2,3} supported");
  auto front = clean_front(points, ref);
  if (front.empty()) return 0.0;
  if (ref.size() == 1) {
    double best = ref[0];
    for (const auto& p : front) best = std::min(best, p[0]);
    return ref[0] - best;
  }
  if (ref.size() == 2) return hypervolume_2d(std::move(front), ref);
  return hypervolume_3d(front, ref);
}

std::vector<double> to_minimization(const MetricPoint& p) {
  check(p.values.size() == p.higher_better.size(), "to_minimization: orientation mismatch");
  std::vector<double> out(p.values.size());
  for (std::size_t d = 0; d < p.values.size(); ++d)
    out[d] = p.higher_better[d] ? -p.values[d] : p.values[d];
  return out;
}

std::vector<double> default_reference(const std::vector<std::vector<double>>& points) {
  check(!points.empty(), "default_reference: no points");
  std::vector<double> ref = points.front();
  for (const auto& p : points)
    for (std::size_t d = 0; d < ref.size(); ++d) ref[d] = std::max(ref[d], p[d]);
  for (auto& r : ref) r += 0.1;
  return ref;
}

double hvi(const std::vector<MetricPoint>& points,
           const std::optional<std::vector<double>>& ref) {
  check(!points.empty(), "hvi: no points");
  std::vector<std::vector<double>> mins;
  for (const auto& p : points) mins.push_back(to_minimization(p));
  return hypervolume(mins, ref ? *ref : default_reference(mins));
}

double delta_m_percent(const MetricPoint& model, const MetricPoint& baseline) {
  check(model.values.size() == baseline.values.size() &&
            model.higher_better == baseline.higher_better,
        "delta_m: inconsistent points");
  const std::size_t k = model.values.size();
  check(k >= 1, "delta_m: empty points");
  double sum = 0.0;
  for (std::size_t d = 0; d < k; ++d) {
    check(baseline.values[d] != 0.0, "delta_m: zero baseline coordinate");
    const double sign = model.higher_better[d] ? -1.0 : 1.0;
    sum += sign * (model.values[d] - baseline.values[d]) / baseline.values[d];
  }
  return sum / static_cast<double>(k) * 100.0;
}

}  // namespace mtlrank::metrics

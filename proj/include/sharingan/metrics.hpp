#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace sharingan {

struct Vec2 {
  double x = 0.0, y = 0.0;
};

inline double dist(const Vec2& a, const Vec2& b) { return std::hypot(a.x - b.x, a.y - b.y); }

// distance from the prediction to the mean annotator point
inline double metric_avg_dist(const Vec2& pred, const std::vector<Vec2>& points) {
  if (points.empty()) throw std::runtime_error("metric_distances: no annotator points");
  Vec2 mean;
  for (const auto& p : points) {
    mean.x += p.x;
    mean.y += p.y;
  }
  mean.x /= static_cast<double>(points.size());
  mean.y /= static_cast<double>(points.size());
  return dist(pred, mean);
}

inline double metric_min_dist(const Vec2& pred, const std::vector<Vec2>& points) {
  if (points.empty()) throw std::runtime_error("metric_distances: no annotator points");
  double best = dist(pred, points[0]);
  for (const auto& p : points) best = std::min(best, dist(pred, p));
  return best;
}

// ROC AUC of heatmap scores against a binary grid marking each annotator
// point's cell. Average ranks resolve ties (Mann-Whitney). Returns nothing
// when the grid is all-positive or all-negative.
template <typename S>
std::optional<double> metric_auc(const std::vector<S>& scores, int grid_h, int grid_w,
                                 const std::vector<Vec2>& points) {
  if (points.empty()) throw std::runtime_error("metric_auc: no annotator points");
  const int64_t n = static_cast<int64_t>(grid_h) * grid_w;
  if (static_cast<int64_t>(scores.size()) != n) throw std::runtime_error("metric_auc: score grid size mismatch");
  std::vector<char> positive(static_cast<size_t>(n), 0);
  for (const auto& p : points) {
    const int c = std::min(grid_w - 1, std::max(0, static_cast<int>(p.x * grid_w)));
    const int r = std::min(grid_h - 1, std::max(0, static_cast<int>(p.y * grid_h)));
    positive[static_cast<size_t>(r) * grid_w + c] = 1;
  }
  int64_t npos = 0;
  for (char c : positive) npos += c;
  const int64_t nneg = n - npos;
  if (npos == 0 || nneg == 0) return std::nullopt;

  std::vector<int64_t> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int64_t a, int64_t b) { return scores[static_cast<size_t>(a)] < scores[static_cast<size_t>(b)]; });
  // average ranks within tied runs; ranks are exact halves, so the sum stays exact
  double rank_sum_pos = 0.0;
  int64_t i = 0;
  while (i < n) {
    int64_t j = i;
    while (j + 1 < n && !(scores[static_cast<size_t>(order[static_cast<size_t>(i)])] <
                          scores[static_cast<size_t>(order[static_cast<size_t>(j + 1)])]))
      ++j;
    const double avg_rank = 0.5 * static_cast<double>((i + 1) + (j + 1));
    for (int64_t k = i; k <= j; ++k)
      if (positive[static_cast<size_t>(order[static_cast<size_t>(k)])]) rank_sum_pos += avg_rank;
    i = j + 1;
  }
  const double u = rank_sum_pos - 0.5 * static_cast<double>(npos) * static_cast<double>(npos + 1);
  return u / (static_cast<double>(npos) * static_cast<double>(nneg));
}

// Average precision: area under the interpolated precision-recall curve,
// sweeping thresholds in descending score order. Tied scores form one
// threshold step.
inline double metric_ap(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw std::runtime_error("metric_ap: size mismatch");
  int64_t total_pos = 0;
  for (int l : labels) total_pos += l ? 1 : 0;
  if (total_pos == 0) throw std::runtime_error("metric_ap: no positive labels");

  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return scores[a] > scores[b]; });

  std::vector<double> recalls, precisions;
  int64_t tp = 0, seen = 0;
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    for (size_t k = i; k <= j; ++k) {
      tp += labels[order[k]] ? 1 : 0;
      ++seen;
    }
    recalls.push_back(static_cast<double>(tp) / static_cast<double>(total_pos));
    precisions.push_back(static_cast<double>(tp) / static_cast<double>(seen));
    i = j + 1;
  }
  // precision envelope from the right, integrated over recall
  double ap = 0.0, prev_recall = 0.0, env = 0.0;
  std::vector<double> env_at(recalls.size());
  for (size_t k = recalls.size(); k-- > 0;) {
    env = std::max(env, precisions[k]);
    env_at[k] = env;
  }
  for (size_t k = 0; k < recalls.size(); ++k) {
    ap += (recalls[k] - prev_recall) * env_at[k];
    prev_recall = recalls[k];
  }
  return ap;
}

struct MetricReport {
  double avg_dist = 0.0;
  double min_dist = 0.0;
  std::optional<double> auc;  // heatmap variant only
  std::optional<double> ap;   // needs at least one positive label
  int64_t n_instances = 0;
};

std::string format_metric_report(const MetricReport& r);

}  // namespace sharingan

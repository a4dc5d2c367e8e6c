#pragma once

// Pareto front over (saliency, selectivity), knee point and top-k rankings.

#include <algorithm>
#include <numeric>
#include <optional>
#include <span>
#include <string_view>
#include <tuple>
#include <vector>

#include "error.hpp"
#include "significance.hpp"

namespace concepttracer {

enum class Metric { Saliency, Selectivity, Combined };

constexpr std::string_view to_string(Metric metric) {
  switch (metric) {
    case Metric::Saliency: return "saliency";
    case Metric::Selectivity: return "selectivity";
    case Metric::Combined: break;
  }
  return "combined";
}

inline Metric parse_metric(std::string_view text) {
  if (text == "saliency") return Metric::Saliency;
  if (text == "selectivity") return Metric::Selectivity;
  if (text == "combined") return Metric::Combined;
  throw Error(ErrorKind::InvalidInput, "unknown metric", std::string(text));
}

inline auto pair_key(const PairScore& p) { return std::make_tuple(p.layer, p.neuron, p.concept_index); }

/// Shared tie-break: smaller combined p first, then ascending (layer, neuron, concept).
inline bool tiebreak_less(const PairScore& a, const PairScore& b) {
  if (a.p_combined != b.p_combined) return a.p_combined < b.p_combined;
  return pair_key(a) < pair_key(b);
}

inline bool dominates(const PairScore& p, const PairScore& q) noexcept {
  return p.saliency >= q.saliency && p.selectivity >= q.selectivity &&
         (p.saliency > q.saliency || p.selectivity > q.selectivity);
}

/// Indices of non-dominated pairs (both objectives maximized), sorted by
/// descending saliency, then descending selectivity, then ids.
inline std::vector<std::size_t> pareto_front(std::span<const PairScore> pairs) {
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& pa = pairs[a];
    const auto& pb = pairs[b];
    if (pa.saliency != pb.saliency) return pa.saliency > pb.saliency;
    if (pa.selectivity != pb.selectivity) return pa.selectivity > pb.selectivity;
    return pair_key(pa) < pair_key(pb);
  });

  // A point survives iff its selectivity is the maximum of its equal-saliency
  // group and strictly above every selectivity seen at higher saliency.
  std::vector<std::size_t> front;
  double best_above = -1.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    const double group_saliency = pairs[order[i]].saliency;
    const double group_max = pairs[order[i]].selectivity;
    while (j < order.size() && pairs[order[j]].saliency == group_saliency) {
      const double sel = pairs[order[j]].selectivity;
      if (sel == group_max && sel > best_above) front.push_back(order[j]);
      ++j;
    }
    best_above = std::max(best_above, group_max);
    i = j;
  }
  return front;
}

/// (v - min) / (max - min); all zeros for a degenerate range.
inline std::vector<double> min_max_scale(std::span<const double> values) {
  if (values.empty()) return {};
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double min = *lo;
  const double range = *hi - *lo;
  std::vector<double> out(values.size(), 0.0);
  if (range > 0.0)
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - min) / range;
  return out;
}

/// Scaled saliency + scaled selectivity, scaled over all given pairs.
inline std::vector<double> combined_scores(std::span<const PairScore> pairs) {
  std::vector<double> sal(pairs.size()), sel(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    sal[i] = pairs[i].saliency;
    sel[i] = pairs[i].selectivity;
  }
  auto scaled_sal = min_max_scale(sal);
  const auto scaled_sel = min_max_scale(sel);
  for (std::size_t i = 0; i < pairs.size(); ++i) scaled_sal[i] += scaled_sel[i];
  return scaled_sal;
}

/// Front member with the largest combined score (scaled over all pairs).
inline std::optional<std::size_t> knee_point(std::span<const PairScore> pairs, std::span<const std::size_t> front) {
  if (front.empty()) return std::nullopt;
  const auto score = combined_scores(pairs);
  std::size_t best = front.front();
  for (auto idx : front.subspan(1)) {
    if (score[idx] > score[best] || (score[idx] == score[best] && tiebreak_less(pairs[idx], pairs[best])))
      best = idx;
  }
  return best;
}

inline std::vector<double> metric_values(std::span<const PairScore> pairs, Metric metric) {
  if (metric == Metric::Combined) return combined_scores(pairs);
  std::vector<double> out(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i)
    out[i] = metric == Metric::Saliency ? pairs[i].saliency : pairs[i].selectivity;
  return out;
}

/// Indices of the k best pairs by `metric`, best first.
inline std::vector<std::size_t> top_k(std::span<const PairScore> pairs, Metric metric, std::size_t k) {
  if (k < 1) throw Error(ErrorKind::InvalidInput, "top_k requires k >= 1");
  const auto values = metric_values(pairs, metric);
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto better = [&](std::size_t a, std::size_t b) {
    if (values[a] != values[b]) return values[a] > values[b];
    return tiebreak_less(pairs[a], pairs[b]);
  };
  const std::size_t keep = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(), better);
  order.resize(keep);
  return order;
}

}  // namespace concepttracer

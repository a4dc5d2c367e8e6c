#pragma once

// Discretization, plug-in entropies and the saliency / selectivity measures.
//
// Saliency of a neuron for a concept is the normalized mutual information
//   I(a;b) / min(H(a), H(b))
// between the neuron's equal-frequency binned activations and the concept's
// binary labels, all in nats. Selectivity divides a saliency by the neuron's
// saliency summed over every concept in the set.
//
// All entropies are evaluated from integer counts as (M ln M - sum n ln n) / M
// with bins visited in ascending order, so the scalar and the batched paths
// below produce bit-identical values for identical contingency tables.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "types.hpp"

namespace concepttracer {

inline constexpr std::uint32_t kDefaultBinCount = 16;

struct BinnedVector {
  std::vector<std::uint32_t> bin_indices;
  std::uint32_t bin_count = 0;

  std::vector<std::size_t> occupancy() const {
    std::vector<std::size_t> counts(bin_count, 0);
    for (auto b : bin_indices) ++counts[b];
    return counts;
  }

  bool operator==(const BinnedVector&) const = default;
};

/// Bin count actually used for M samples: the request capped so every bin
/// expects at least five samples, never below two.
constexpr std::uint32_t effective_bin_count(std::uint32_t requested, std::size_t sample_count) noexcept {
  const auto cap = std::max<std::size_t>(2, sample_count / 5);
  return static_cast<std::uint32_t>(std::min<std::size_t>(requested, cap));
}

namespace detail {

inline double nlogn(std::size_t n) noexcept {
  return n == 0 ? 0.0 : static_cast<double>(n) * std::log(static_cast<double>(n));
}

inline double entropy_from_sum(double sum_nlogn, std::size_t total) noexcept {
  if (total == 0) return 0.0;
  const double h = (nlogn(total) - sum_nlogn) / static_cast<double>(total);
  return h < 0.0 ? 0.0 : h;
}

template <typename T>
void require_finite(std::span<const T> values) {
  for (std::size_t m = 0; m < values.size(); ++m)
    if (!std::isfinite(values[m]))
      throw Error(ErrorKind::InvalidInput, "activation value is not finite", "sample " + std::to_string(m));
}

}  // namespace detail

/// Plug-in entropy (nats) of a histogram with the given counts.
inline double entropy_from_counts(std::span<const std::size_t> counts) noexcept {
  double sum = 0.0;
  std::size_t total = 0;
  for (auto n : counts) {
    sum += detail::nlogn(n);
    total += n;
  }
  return detail::entropy_from_sum(sum, total);
}

/// Joint entropy of (bin, binary label) from per-bin totals and per-bin
/// counts of label 1.
inline double joint_entropy_binary(std::span<const std::size_t> bin_totals,
                                   std::span<const std::size_t> bin_ones, std::size_t total) noexcept {
  double sum = 0.0;
  for (std::size_t b = 0; b < bin_totals.size(); ++b) {
    sum += detail::nlogn(bin_ones[b]);
    sum += detail::nlogn(bin_totals[b] - bin_ones[b]);
  }
  return detail::entropy_from_sum(sum, total);
}

/// Normalized MI from the three entropies; 0 when either marginal is constant.
inline double normalized_mi_from_entropies(double h_a, double h_b, double h_ab) noexcept {
  const double denom = std::min(h_a, h_b);
  if (!(denom > 0.0)) return 0.0;
  const double ratio = (h_a + h_b - h_ab) / denom;
  return std::clamp(ratio, 0.0, 1.0);
}

/// Equal-frequency binning: stable sort, sorted position k gets floor(k*B/M).
template <typename T>
BinnedVector bin_activations(std::span<const T> values, std::uint32_t bin_count) {
  if (bin_count < 2) throw Error(ErrorKind::InvalidInput, "bin_count must be at least 2");
  if (values.empty()) throw Error(ErrorKind::InvalidInput, "activation vector is empty");
  detail::require_finite(values);

  const std::size_t m = values.size();
  std::vector<std::uint32_t> order(m);
  std::iota(order.begin(), order.end(), std::uint32_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::uint32_t lhs, std::uint32_t rhs) { return values[lhs] < values[rhs]; });

  BinnedVector out{std::vector<std::uint32_t>(m), bin_count};
  for (std::size_t k = 0; k < m; ++k)
    out.bin_indices[order[k]] = static_cast<std::uint32_t>((static_cast<std::uint64_t>(k) * bin_count) / m);
  return out;
}

inline BinnedVector bin_activations(const std::vector<double>& values, std::uint32_t bin_count) {
  return bin_activations(std::span<const double>(values), bin_count);
}

inline double entropy(const BinnedVector& x) {
  if (x.bin_indices.empty()) throw Error(ErrorKind::InvalidInput, "entropy of an empty vector");
  const auto counts = x.occupancy();
  return entropy_from_counts(counts);
}

inline double entropy(std::span<const std::uint8_t> labels) {
  if (labels.empty()) throw Error(ErrorKind::InvalidInput, "entropy of an empty vector");
  std::size_t ones = 0;
  for (auto v : labels) ones += v;
  const std::size_t counts[2] = {labels.size() - ones, ones};
  return entropy_from_counts(counts);
}

inline double entropy(const ConceptVector& b) { return entropy(std::span<const std::uint8_t>(b.values)); }

/// Normalized MI between an already binned vector and binary labels.
inline double normalized_mutual_information(const BinnedVector& binned, std::span<const std::uint8_t> labels) {
  if (binned.bin_indices.size() != labels.size())
    throw Error(ErrorKind::InvalidInput, "activation and concept lengths differ",
                std::to_string(binned.bin_indices.size()) + " vs " + std::to_string(labels.size()));
  std::vector<std::size_t> totals(binned.bin_count, 0), ones(binned.bin_count, 0);
  for (std::size_t m = 0; m < labels.size(); ++m) {
    if (labels[m] > 1)
      throw Error(ErrorKind::InvalidInput, "concept value is not 0/1", "sample " + std::to_string(m));
    ++totals[binned.bin_indices[m]];
    ones[binned.bin_indices[m]] += labels[m];
  }
  const double h_a = entropy_from_counts(totals);
  const double h_b = entropy(labels);
  const double h_ab = joint_entropy_binary(totals, ones, labels.size());
  return normalized_mi_from_entropies(h_a, h_b, h_ab);
}

template <typename T>
double normalized_mutual_information(std::span<const T> activations, std::span<const std::uint8_t> labels,
                                     std::uint32_t bin_count) {
  if (activations.size() != labels.size())
    throw Error(ErrorKind::InvalidInput, "activation and concept lengths differ",
                std::to_string(activations.size()) + " vs " + std::to_string(labels.size()));
  return normalized_mutual_information(bin_activations(activations, bin_count), labels);
}

inline double normalized_mutual_information(const std::vector<double>& activations, const ConceptVector& labels,
                                            std::uint32_t bin_count) {
  return normalized_mutual_information(std::span<const double>(activations),
                                       std::span<const std::uint8_t>(labels.values), bin_count);
}

/// Saliency of a neuron for a concept: their normalized mutual information.
template <typename T>
double saliency(std::span<const T> activations, std::span<const std::uint8_t> labels, std::uint32_t bin_count) {
  return normalized_mutual_information(activations, labels, bin_count);
}

inline double saliency(const std::vector<double>& activations, const ConceptVector& labels,
                       std::uint32_t bin_count) {
  return normalized_mutual_information(activations, labels, bin_count);
}

/// N x C saliencies of one layer.
struct SaliencyMatrix {
  int layer_id = 0;
  Matrix<double> values;

  bool operator==(const SaliencyMatrix&) const = default;
};

// ---------------------------------------------------------------------------
// Batched evaluation. A neuron is binned once; only the concept side changes
// between permutations, so each saliency reduces to one pass over the sample
// indices of the concept's minority label.

struct BinnedNeuron {
  std::vector<std::uint32_t> bins;
  std::vector<std::size_t> bin_totals;
  double entropy = 0.0;
};

inline BinnedNeuron make_binned_neuron(BinnedVector binned) {
  BinnedNeuron n;
  n.bin_totals = binned.occupancy();
  n.entropy = entropy_from_counts(n.bin_totals);
  n.bins = std::move(binned.bin_indices);
  return n;
}

inline std::vector<BinnedNeuron> bin_layer(const Matrix<float>& layer, std::uint32_t bin_count) {
  std::vector<BinnedNeuron> out;
  out.reserve(layer.cols());
  for (std::size_t n = 0; n < layer.cols(); ++n) {
    const auto column = layer.column(n);
    try {
      out.push_back(make_binned_neuron(bin_activations(std::span<const float>(column), bin_count)));
    } catch (const Error& e) {
      throw Error(e.kind(), e.message(), "neuron " + std::to_string(n) + ", " + e.detail());
    }
  }
  return out;
}

/// Sample indices carrying a concept's minority label.
struct ConceptSupport {
  std::vector<std::uint32_t> indices;
  std::uint8_t label = 1;
  std::size_t sample_count = 0;
  double entropy = 0.0;
};

/// Supports of every concept after relabeling sample m with the labels of
/// sample source[m]. An empty `source` means the identity.
inline std::vector<ConceptSupport> concept_supports(const ConceptMatrix& concepts,
                                                    std::span<const std::uint32_t> source = {}) {
  const std::size_t m_count = concepts.sample_count;
  std::vector<ConceptSupport> out(concepts.concept_count());
  for (std::size_t c = 0; c < out.size(); ++c) {
    const auto& col = concepts.concepts[c];
    const std::size_t ones = col.prevalence();
    out[c].label = ones <= m_count - ones ? 1 : 0;
    out[c].sample_count = m_count;
    out[c].entropy = entropy(col);
    out[c].indices.reserve(std::min(ones, m_count - ones));
  }
  for (std::size_t m = 0; m < m_count; ++m) {
    const std::size_t from = source.empty() ? m : source[m];
    for (std::size_t c = 0; c < out.size(); ++c)
      if (concepts.concepts[c].values[from] == out[c].label) out[c].indices.push_back(static_cast<std::uint32_t>(m));
  }
  return out;
}

/// Saliency from a binned neuron and a concept support. `scratch` is resized
/// as needed and may be reused between calls.
inline double saliency(const BinnedNeuron& neuron, const ConceptSupport& support,
                       std::vector<std::size_t>& scratch) {
  const std::size_t bins = neuron.bin_totals.size();
  scratch.assign(2 * bins, 0);
  std::size_t* ones = scratch.data();
  std::size_t* minority = scratch.data() + bins;
  for (auto m : support.indices) ++minority[neuron.bins[m]];
  if (support.label == 1) {
    std::copy(minority, minority + bins, ones);
  } else {
    for (std::size_t b = 0; b < bins; ++b) ones[b] = neuron.bin_totals[b] - minority[b];
  }
  const double h_ab = joint_entropy_binary(neuron.bin_totals, std::span<const std::size_t>(ones, bins),
                                           support.sample_count);
  return normalized_mi_from_entropies(neuron.entropy, support.entropy, h_ab);
}

/// Selectivity of one row: entries over the row sum, all zero if the sum is 0.
inline void selectivity_row(std::span<const double> saliencies, std::span<double> out) noexcept {
  double total = 0.0;
  for (double s : saliencies) total += s;
  for (std::size_t c = 0; c < saliencies.size(); ++c)
    out[c] = total > 0.0 ? std::min(1.0, saliencies[c] / total) : 0.0;
}

inline SaliencyMatrix saliency_matrix(const std::vector<BinnedNeuron>& neurons,
                                      const std::vector<ConceptSupport>& supports, int layer_id = 0) {
  SaliencyMatrix out{layer_id, Matrix<double>(neurons.size(), supports.size())};
  std::vector<std::size_t> scratch;
  for (std::size_t n = 0; n < neurons.size(); ++n)
    for (std::size_t c = 0; c < supports.size(); ++c) out.values(n, c) = saliency(neurons[n], supports[c], scratch);
  return out;
}

/// Saliency of every (neuron, concept) pair of one layer.
inline SaliencyMatrix saliency_matrix(const Matrix<float>& layer, const ConceptMatrix& concepts,
                                      std::uint32_t bin_count, int layer_id = 0) {
  if (layer.rows() != concepts.sample_count)
    throw Error(ErrorKind::InvalidInput, "layer and concept sample counts differ",
                std::to_string(layer.rows()) + " vs " + std::to_string(concepts.sample_count));
  concepts.validate();
  return saliency_matrix(bin_layer(layer, bin_count), concept_supports(concepts), layer_id);
}

inline Matrix<double> selectivity_matrix(const SaliencyMatrix& s) {
  Matrix<double> out(s.values.rows(), s.values.cols());
  for (std::size_t n = 0; n < s.values.rows(); ++n) selectivity_row(s.values.row(n), out.row(n));
  return out;
}

}  // namespace concepttracer

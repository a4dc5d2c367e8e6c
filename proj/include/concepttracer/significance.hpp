#pragma once

// Permutation testing with single-step max-statistic (maxT) family-wise
// error control.
//
// One permutation shuffles the sample indices of the whole concept matrix at
// once, so co-occurrence structure between concepts is kept. For each
// permutation the full saliency and selectivity matrices are recomputed and
// only their maxima over the family are kept. A pair's corrected p-value is
// (1 + #{k : max_k >= observed}) / (1 + P); the saliency and selectivity
// p-values are then Bonferroni-combined.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <numeric>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "error.hpp"
#include "metrics.hpp"
#include "rng.hpp"
#include "types.hpp"

namespace concepttracer {

inline constexpr std::size_t kDefaultPermutationCount = 1000;
inline constexpr double kDefaultAlpha = 0.05;

struct PermutationPlan {
  std::size_t permutation_count = kDefaultPermutationCount;
  std::uint64_t master_seed = 0;
};

/// Draws permutation k by Fisher-Yates from its own sub-seed.
struct FisherYatesPermuter {
  std::vector<std::uint32_t> operator()(const PermutationPlan& plan, std::size_t k, std::size_t sample_count) const {
    rng::Engine engine(rng::sub_seed(plan.master_seed, k));
    return rng::fisher_yates(engine, sample_count);
  }
};

/// Test hook: every "permutation" is the identity.
struct IdentityPermuter {
  std::vector<std::uint32_t> operator()(const PermutationPlan&, std::size_t, std::size_t sample_count) const {
    std::vector<std::uint32_t> perm(sample_count);
    std::iota(perm.begin(), perm.end(), std::uint32_t{0});
    return perm;
  }
};

template <typename Permuter = FisherYatesPermuter>
std::vector<std::uint32_t> permutation(const PermutationPlan& plan, std::size_t k, std::size_t sample_count,
                                       const Permuter& permuter = {}) {
  if (k >= plan.permutation_count)
    throw Error(ErrorKind::InvalidInput, "permutation index out of range",
                std::to_string(k) + " >= " + std::to_string(plan.permutation_count));
  return permuter(plan, k, sample_count);
}

/// Concept matrix whose row m is row perm_k[m] of the input; all columns move together.
template <typename Permuter = FisherYatesPermuter>
ConceptMatrix permute_concepts(const ConceptMatrix& concepts, const PermutationPlan& plan, std::size_t k,
                               const Permuter& permuter = {}) {
  const auto perm = permutation(plan, k, concepts.sample_count, permuter);
  ConceptMatrix out = concepts;
  for (std::size_t c = 0; c < concepts.concept_count(); ++c)
    for (std::size_t m = 0; m < concepts.sample_count; ++m)
      out.concepts[c].values[m] = concepts.concepts[c].values[perm[m]];
  return out;
}

enum class MaxtScope { Global, PerLayer };

constexpr std::string_view to_string(MaxtScope scope) {
  return scope == MaxtScope::Global ? "global" : "per-layer";
}

inline MaxtScope parse_maxt_scope(std::string_view text) {
  if (text == "global") return MaxtScope::Global;
  if (text == "per-layer") return MaxtScope::PerLayer;
  throw Error(ErrorKind::InvalidInput, "unknown maxT scope", std::string(text));
}

/// Per-permutation maxima of both metrics over one family of pairs.
struct NullDistribution {
  std::string scope;
  std::vector<int> layer_ids;
  std::vector<double> max_saliency;
  std::vector<double> max_selectivity;

  bool operator==(const NullDistribution&) const = default;
};

struct PairScore {
  int layer = 0;
  std::uint32_t neuron = 0;
  std::uint32_t concept_index = 0;
  double saliency = 0.0;
  double selectivity = 0.0;
  double p_saliency = 1.0;
  double p_selectivity = 1.0;
  double p_combined = 1.0;
  bool significant = false;

  bool operator==(const PairScore&) const = default;
};

/// Add-one permutation p-value of `observed` against per-permutation maxima.
inline double corrected_pvalue(double observed, std::span<const double> null_max) {
  if (null_max.empty()) throw Error(ErrorKind::InvalidInput, "empty null distribution");
  std::size_t at_least = 0;
  for (double v : null_max) at_least += v >= observed;
  return static_cast<double>(1 + at_least) / static_cast<double>(1 + null_max.size());
}

/// Same as corrected_pvalue for an ascending-sorted null, by binary search.
inline double corrected_pvalue_sorted(double observed, std::span<const double> sorted_null_max) {
  if (sorted_null_max.empty()) throw Error(ErrorKind::InvalidInput, "empty null distribution");
  const auto first_ge = std::lower_bound(sorted_null_max.begin(), sorted_null_max.end(), observed);
  const auto at_least = static_cast<std::size_t>(sorted_null_max.end() - first_ge);
  return static_cast<double>(1 + at_least) / static_cast<double>(1 + sorted_null_max.size());
}

/// Bonferroni combination of the two corrected p-values.
constexpr double combine_pvalues(double p_saliency, double p_selectivity) noexcept {
  return std::min(1.0, 2.0 * std::min(p_saliency, p_selectivity));
}

struct ScoringOptions {
  MaxtScope scope = MaxtScope::Global;
  /// Worker threads; 0 picks the hardware concurrency. Never affects results.
  unsigned threads = 0;
  /// Called with (permutations done, total); serialized, from worker threads.
  std::function<void(std::size_t, std::size_t)> progress;
};

struct ScoreTable {
  std::vector<PairScore> pairs;
  std::vector<NullDistribution> nulls;
};

struct BinnedLayer {
  int id = 0;
  std::vector<BinnedNeuron> neurons;
};

inline std::vector<BinnedLayer> bin_tensor(const ActivationTensor& activations, std::uint32_t bin_count) {
  std::vector<BinnedLayer> out;
  out.reserve(activations.layers.size());
  for (const auto& layer : activations.layers) {
    try {
      out.push_back({layer.id, bin_layer(layer.values, bin_count)});
    } catch (const Error& e) {
      throw Error(e.kind(), e.message(), "layer " + std::to_string(layer.id) + ", " + e.detail());
    }
  }
  return out;
}

namespace detail {

struct LayerMaxima {
  double saliency = 0.0;
  double selectivity = 0.0;
};

/// Per-layer maxima of both metrics for one labeling of the samples.
inline std::vector<LayerMaxima> layer_maxima(const std::vector<BinnedLayer>& layers,
                                             const std::vector<ConceptSupport>& supports) {
  std::vector<LayerMaxima> out(layers.size());
  std::vector<std::size_t> scratch;
  std::vector<double> sal(supports.size()), sel(supports.size());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    for (const auto& neuron : layers[l].neurons) {
      for (std::size_t c = 0; c < supports.size(); ++c) sal[c] = saliency(neuron, supports[c], scratch);
      selectivity_row(sal, sel);
      for (std::size_t c = 0; c < supports.size(); ++c) {
        out[l].saliency = std::max(out[l].saliency, sal[c]);
        out[l].selectivity = std::max(out[l].selectivity, sel[c]);
      }
    }
  }
  return out;
}

inline void check_dimensions(const ActivationTensor& activations, const ConceptMatrix& concepts) {
  if (activations.layers.empty()) throw Error(ErrorKind::InvalidInput, "no activation layers");
  if (concepts.concept_count() == 0) throw Error(ErrorKind::EmptyConceptSet, "no concepts to score");
  for (const auto& layer : activations.layers)
    if (layer.values.rows() != concepts.sample_count)
      throw Error(ErrorKind::InvalidInput, "layer and concept sample counts differ",
                  "layer " + std::to_string(layer.id) + ": " + std::to_string(layer.values.rows()) + " vs " +
                      std::to_string(concepts.sample_count));
  concepts.validate();
}

/// Runs fn(k) for k in [0, count) on up to `threads` workers.
template <typename Fn>
void parallel_for(std::size_t count, unsigned threads, Fn&& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(count, 1)));
  if (threads <= 1) {
    for (std::size_t k = 0; k < count; ++k) fn(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> workers;
  workers.reserve(threads);
  for (unsigned t = 0; t < threads; ++t) {
    workers.emplace_back([&] {
      for (std::size_t k = next++; k < count; k = next++) {
        try {
          fn(k);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next = count;
        }
      }
    });
  }
  for (auto& w : workers) w.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace detail

/// Null distributions of the maxT statistics, one per family in `scope`.
template <typename Permuter = FisherYatesPermuter>
std::vector<NullDistribution> build_null(const std::vector<BinnedLayer>& layers, const ConceptMatrix& concepts,
                                         const PermutationPlan& plan, const ScoringOptions& options = {},
                                         const Permuter& permuter = {}) {
  if (plan.permutation_count < 1) throw Error(ErrorKind::InvalidInput, "permutation count must be positive");
  const std::size_t perms = plan.permutation_count;
  std::vector<std::vector<detail::LayerMaxima>> per_perm(perms);

  std::mutex progress_mutex;
  std::atomic<std::size_t> done{0};
  const std::size_t report_every = std::max<std::size_t>(1, perms / 20);

  detail::parallel_for(perms, options.threads, [&](std::size_t k) {
    const auto perm = permutation(plan, k, concepts.sample_count, permuter);
    per_perm[k] = detail::layer_maxima(layers, concept_supports(concepts, perm));
    const std::size_t finished = ++done;
    if (options.progress && (finished % report_every == 0 || finished == perms)) {
      std::lock_guard lock(progress_mutex);
      options.progress(finished, perms);
    }
  });

  std::vector<NullDistribution> nulls;
  if (options.scope == MaxtScope::Global) {
    NullDistribution null{"global", {}, std::vector<double>(perms, 0.0), std::vector<double>(perms, 0.0)};
    for (const auto& layer : layers) null.layer_ids.push_back(layer.id);
    for (std::size_t k = 0; k < perms; ++k)
      for (const auto& m : per_perm[k]) {
        null.max_saliency[k] = std::max(null.max_saliency[k], m.saliency);
        null.max_selectivity[k] = std::max(null.max_selectivity[k], m.selectivity);
      }
    nulls.push_back(std::move(null));
  } else {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      NullDistribution null{"layer:" + std::to_string(layers[l].id), {layers[l].id}, std::vector<double>(perms),
                            std::vector<double>(perms)};
      for (std::size_t k = 0; k < perms; ++k) {
        null.max_saliency[k] = per_perm[k][l].saliency;
        null.max_selectivity[k] = per_perm[k][l].selectivity;
      }
      nulls.push_back(std::move(null));
    }
  }
  return nulls;
}

template <typename Permuter = FisherYatesPermuter>
std::vector<NullDistribution> build_null(const ActivationTensor& activations, const ConceptMatrix& concepts,
                                         const PermutationPlan& plan, std::uint32_t bin_count,
                                         const ScoringOptions& options = {}, const Permuter& permuter = {}) {
  detail::check_dimensions(activations, concepts);
  return build_null(bin_tensor(activations, bin_count), concepts, plan, options, permuter);
}

/// Index of the null family that covers `layer_id`.
inline std::size_t null_for_layer(const std::vector<NullDistribution>& nulls, int layer_id) {
  for (std::size_t i = 0; i < nulls.size(); ++i)
    if (std::find(nulls[i].layer_ids.begin(), nulls[i].layer_ids.end(), layer_id) != nulls[i].layer_ids.end())
      return i;
  throw Error(ErrorKind::NotFound, "no null distribution covers layer", std::to_string(layer_id));
}

/// Observed saliency and selectivity of every pair, in (layer, neuron, concept) order.
inline std::vector<PairScore> observed_scores(const std::vector<BinnedLayer>& layers, const ConceptMatrix& concepts) {
  const auto supports = concept_supports(concepts);
  std::vector<PairScore> pairs;
  std::vector<double> sel(supports.size());
  for (const auto& layer : layers) {
    const auto sal = saliency_matrix(layer.neurons, supports, layer.id);
    for (std::size_t n = 0; n < layer.neurons.size(); ++n) {
      selectivity_row(sal.values.row(n), sel);
      for (std::size_t c = 0; c < supports.size(); ++c) {
        PairScore p;
        p.layer = layer.id;
        p.neuron = static_cast<std::uint32_t>(n);
        p.concept_index = static_cast<std::uint32_t>(c);
        p.saliency = sal.values(n, c);
        p.selectivity = sel[c];
        pairs.push_back(p);
      }
    }
  }
  return pairs;
}

/// Fills p-values and significance flags of `pairs` against `nulls`.
inline void assign_pvalues(std::vector<PairScore>& pairs, const std::vector<NullDistribution>& nulls, double alpha) {
  std::vector<std::vector<double>> sorted_sal(nulls.size()), sorted_sel(nulls.size());
  for (std::size_t i = 0; i < nulls.size(); ++i) {
    sorted_sal[i] = nulls[i].max_saliency;
    sorted_sel[i] = nulls[i].max_selectivity;
    std::sort(sorted_sal[i].begin(), sorted_sal[i].end());
    std::sort(sorted_sel[i].begin(), sorted_sel[i].end());
  }
  for (auto& p : pairs) {
    const std::size_t family = null_for_layer(nulls, p.layer);
    p.p_saliency = corrected_pvalue_sorted(p.saliency, sorted_sal[family]);
    p.p_selectivity = corrected_pvalue_sorted(p.selectivity, sorted_sel[family]);
    p.p_combined = combine_pvalues(p.p_saliency, p.p_selectivity);
    p.significant = p.p_combined <= alpha;
  }
}

/// Observed metrics, maxT-corrected and combined p-values for every pair.
template <typename Permuter = FisherYatesPermuter>
ScoreTable score_all_pairs(const ActivationTensor& activations, const ConceptMatrix& concepts,
                           const PermutationPlan& plan, std::uint32_t bin_count, double alpha,
                           const ScoringOptions& options = {}, const Permuter& permuter = {}) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorKind::InvalidInput, "alpha must lie in (0, 1)");
  detail::check_dimensions(activations, concepts);
  const auto layers = bin_tensor(activations, bin_count);
  ScoreTable table;
  table.pairs = observed_scores(layers, concepts);
  table.nulls = build_null(layers, concepts, plan, options, permuter);
  assign_pvalues(table.pairs, table.nulls, alpha);
  return table;
}

}  // namespace concepttracer

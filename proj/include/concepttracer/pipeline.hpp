#pragma once

// End-to-end analysis (load -> filter -> bin -> score -> correct) and a
// synthetic generator with planted neuron-concept associations.

#include <algorithm>
#include <chrono>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "data_io.hpp"
#include "metrics.hpp"
#include "result.hpp"
#include "rng.hpp"
#include "significance.hpp"

namespace concepttracer {

struct RunOptions {
  /// Worker threads for the permutation loop; 0 picks the hardware concurrency.
  unsigned threads = 0;
  /// Receives one `event=... key=value` line per progress step.
  std::function<void(const std::string&)> on_event;
};

namespace detail {

inline void emit(const RunOptions& options, const std::string& line) {
  if (options.on_event) options.on_event(line);
}

inline ActivationTensor select_layers(ActivationTensor tensor, const std::optional<std::vector<int>>& selection) {
  if (!selection) return tensor;
  ActivationTensor out;
  out.sample_count = tensor.sample_count;
  const std::set<int> wanted(selection->begin(), selection->end());
  for (int id : wanted)
    if (!tensor.find_layer(id)) throw Error(ErrorKind::NotFound, "selected layer does not exist", std::to_string(id));
  for (auto& layer : tensor.layers)
    if (wanted.count(layer.id)) out.layers.push_back(std::move(layer));
  return out;
}

}  // namespace detail

/// Runs the analysis on in-memory inputs. Input paths in `config` are only
/// recorded; digests are left empty.
inline AnalysisResult run_analysis(const ActivationTensor& all_layers, const ConceptMatrix& all_concepts,
                                   const AnalysisConfig& config, const RunOptions& options = {}) {
  config.validate();
  const auto started = std::chrono::steady_clock::now();

  const ActivationTensor activations = detail::select_layers(all_layers, config.layers);
  if (activations.sample_count != all_concepts.sample_count)
    throw Error(ErrorKind::RowCountMismatch, "activation and concept sample counts differ",
                std::to_string(activations.sample_count) + " vs " + std::to_string(all_concepts.sample_count));
  auto filtered = filter_by_prevalence(all_concepts, config.min_prevalence);
  const ConceptMatrix& concepts = filtered.kept;
  detail::check_dimensions(activations, concepts);

  AnalysisResult result;
  result.config = config;
  result.effective_bin_count = effective_bin_count(config.bin_count, activations.sample_count);
  for (const auto& layer : activations.layers) result.layers.push_back({layer.id, layer.name, layer.neuron_count()});
  for (const auto& col : concepts.concepts) result.concepts.push_back({col.name, col.level, col.prevalence()});
  result.provenance.dropped_concepts = std::move(filtered.dropped);

  detail::emit(options, "event=start samples=" + std::to_string(activations.sample_count) +
                            " layers=" + std::to_string(activations.layers.size()) +
                            " concepts=" + std::to_string(concepts.concept_count()) +
                            " dropped_concepts=" + std::to_string(result.provenance.dropped_concepts.size()) +
                            " bins=" + std::to_string(result.effective_bin_count) +
                            " permutations=" + std::to_string(config.permutation_count));

  std::vector<BinnedLayer> binned;
  for (const auto& layer : activations.layers) {
    try {
      binned.push_back({layer.id, bin_layer(layer.values, result.effective_bin_count)});
    } catch (const Error& e) {
      throw Error(e.kind(), e.message(), "layer " + std::to_string(layer.id) + ", " + e.detail());
    }
    detail::emit(options, "event=layer_binned layer=" + std::to_string(layer.id) +
                              " neurons=" + std::to_string(layer.neuron_count()));
  }

  result.pairs = observed_scores(binned, concepts);
  detail::emit(options, "event=observed pairs=" + std::to_string(result.pairs.size()));

  ScoringOptions scoring;
  scoring.scope = config.maxt_scope;
  scoring.threads = options.threads;
  scoring.progress = [&](std::size_t done, std::size_t total) {
    detail::emit(options, "event=permutations done=" + std::to_string(done) + " total=" + std::to_string(total));
  };
  const PermutationPlan plan{config.permutation_count, *config.master_seed};
  result.nulls = build_null(binned, concepts, plan, scoring);
  for (auto& null : result.nulls) {
    std::sort(null.max_saliency.begin(), null.max_saliency.end());
    std::sort(null.max_selectivity.begin(), null.max_selectivity.end());
  }
  assign_pvalues(result.pairs, result.nulls, config.alpha);

  result.provenance.pair_count = result.pairs.size();
  result.provenance.significant_count = static_cast<std::size_t>(
      std::count_if(result.pairs.begin(), result.pairs.end(), [](const PairScore& p) { return p.significant; }));
  result.provenance.timestamp = utc_timestamp_now();
  result.provenance.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  detail::emit(options, "event=done pairs=" + std::to_string(result.provenance.pair_count) +
                            " significant=" + std::to_string(result.provenance.significant_count));
  return result;
}

struct LoadedInputs {
  ActivationTensor activations;
  ConceptMatrix concepts;
  std::map<std::string, std::string> digests;
};

/// Loads and validates the configured inputs and hashes every input file.
inline LoadedInputs load_inputs(const AnalysisConfig& config) {
  LoadedInputs in;
  in.activations = load_activations(config.activations);
  in.concepts = load_concepts(config.concepts, in.activations.sample_count);
  in.digests[config.activations] = sha256_file_hex(config.activations);
  for (const auto& entry : read_manifest(config.activations).layers) {
    const auto file = (fs::path(config.activations).parent_path() / entry.file).string();
    in.digests[file] = sha256_file_hex(file);
  }
  in.digests[config.concepts] = sha256_file_hex(config.concepts);
  return in;
}

inline AnalysisResult run_analysis(const LoadedInputs& inputs, const AnalysisConfig& config,
                                   const RunOptions& options = {}) {
  auto result = run_analysis(inputs.activations, inputs.concepts, config, options);
  result.provenance.input_digests = inputs.digests;
  return result;
}

/// Loads the configured inputs, runs the analysis and records input digests.
inline AnalysisResult run_analysis(const AnalysisConfig& config, const RunOptions& options = {}) {
  config.validate();
  return run_analysis(load_inputs(config), config, options);
}

// ---------------------------------------------------------------------------
// Synthetic data

struct PlantedPair {
  int layer = 0;
  std::uint32_t neuron = 0;
  std::uint32_t concept_index = 0;
  bool operator==(const PlantedPair&) const = default;
};

struct SyntheticSpec {
  std::size_t sample_count = 2000;
  std::size_t neurons_per_layer = 64;
  std::size_t concept_count = 8;
  std::size_t layer_count = 2;
  std::vector<PlantedPair> planted;
  double noise_sigma = 0.25;
  double prevalence = 0.3;
  std::uint64_t seed = 0;

  void validate() const {
    if (sample_count < 2) throw Error(ErrorKind::InvalidInput, "synthetic sample count must be at least 2");
    if (neurons_per_layer < 1 || concept_count < 1 || layer_count < 1)
      throw Error(ErrorKind::InvalidInput, "synthetic dimensions must be positive");
    if (!(noise_sigma >= 0.0)) throw Error(ErrorKind::InvalidInput, "noise sigma must be non-negative");
    if (!(prevalence > 0.0 && prevalence < 1.0)) throw Error(ErrorKind::InvalidInput, "prevalence must lie in (0, 1)");
    for (const auto& p : planted)
      if (p.layer < 0 || static_cast<std::size_t>(p.layer) >= layer_count || p.neuron >= neurons_per_layer ||
          p.concept_index >= concept_count)
        throw Error(ErrorKind::InvalidInput, "planted pair out of range",
                    std::to_string(p.layer) + "/" + std::to_string(p.neuron) + "/" + std::to_string(p.concept_index));
  }
};

struct SyntheticData {
  ActivationTensor activations;
  ConceptMatrix concepts;
  std::vector<PlantedPair> planted;
};

/// Independent Bernoulli concepts and standard-normal activations; a planted
/// cell becomes concept value + noise_sigma * (that cell's normal draw).
inline SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  rng::Engine engine(spec.seed);
  SyntheticData data;
  data.planted = spec.planted;

  data.concepts.sample_count = spec.sample_count;
  for (std::size_t c = 0; c < spec.concept_count; ++c) {
    ConceptVector col;
    col.name = "concept_" + std::to_string(c);
    col.values.resize(spec.sample_count);
    for (auto& v : col.values) v = rng::uniform01(engine) < spec.prevalence ? 1 : 0;
    data.concepts.concepts.push_back(std::move(col));
  }

  data.activations.sample_count = spec.sample_count;
  for (std::size_t l = 0; l < spec.layer_count; ++l) {
    ActivationLayer layer{static_cast<int>(l), "layer_" + std::to_string(l),
                          Matrix<float>(spec.sample_count, spec.neurons_per_layer)};
    for (auto& v : layer.values.data()) v = static_cast<float>(rng::standard_normal(engine));
    data.activations.layers.push_back(std::move(layer));
  }
  for (const auto& p : spec.planted) {
    auto& values = data.activations.layers[static_cast<std::size_t>(p.layer)].values;
    const auto& labels = data.concepts.concepts[p.concept_index].values;
    for (std::size_t m = 0; m < spec.sample_count; ++m)
      values(m, p.neuron) = static_cast<float>(labels[m] + spec.noise_sigma * values(m, p.neuron));
  }
  return data;
}

}  // namespace concepttracer

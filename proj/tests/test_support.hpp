#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "concepttracer/concepttracer.hpp"

namespace ct_test {

namespace fs = std::filesystem;

inline fs::path temp_dir(const std::string& name) {
  const fs::path dir = fs::path(CT_TEST_TMP_DIR) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

/// Normalized MI straight from the joint probability table of two discrete
/// sequences. Shares no code with the library.
inline double brute_force_nmi(const std::vector<int>& x, const std::vector<int>& y) {
  const double n = static_cast<double>(x.size());
  std::map<int, double> px, py;
  std::map<std::pair<int, int>, double> pxy;
  for (std::size_t i = 0; i < x.size(); ++i) {
    px[x[i]] += 1.0 / n;
    py[y[i]] += 1.0 / n;
    pxy[{x[i], y[i]}] += 1.0 / n;
  }
  double hx = 0, hy = 0, mi = 0;
  for (auto [k, p] : px) hx -= p * std::log(p);
  for (auto [k, p] : py) hy -= p * std::log(p);
  for (auto [k, p] : pxy) mi += p * std::log(p / (px[k.first] * py[k.second]));
  const double denom = std::min(hx, hy);
  if (denom <= 1e-15) return 0.0;
  return std::clamp(mi / denom, 0.0, 1.0);
}

inline concepttracer::ConceptVector concept_vector(std::vector<std::uint8_t> values, std::string name = "c") {
  concepttracer::ConceptVector v;
  v.values = std::move(values);
  v.name = std::move(name);
  return v;
}

inline concepttracer::PairScore pair(double sal, double sel, int layer = 0, std::uint32_t neuron = 0,
                                     std::uint32_t concept_index = 0, double p_combined = 0.01) {
  concepttracer::PairScore p;
  p.layer = layer;
  p.neuron = neuron;
  p.concept_index = concept_index;
  p.saliency = sal;
  p.selectivity = sel;
  p.p_combined = p_combined;
  return p;
}

/// Small synthetic tensor + concepts for significance and pipeline tests.
inline concepttracer::SyntheticData small_synthetic(std::uint64_t seed, std::size_t m = 60, std::size_t n = 3,
                                                    std::size_t c = 2, std::size_t layers = 1,
                                                    std::vector<concepttracer::PlantedPair> planted = {}) {
  concepttracer::SyntheticSpec spec;
  spec.sample_count = m;
  spec.neurons_per_layer = n;
  spec.concept_count = c;
  spec.layer_count = layers;
  spec.planted = std::move(planted);
  spec.noise_sigma = 0.25;
  spec.prevalence = 0.4;
  spec.seed = seed;
  return concepttracer::generate_synthetic(spec);
}

}  // namespace ct_test

namespace ct_test {

/// Two-layer result with ICD-like concept names for view and API tests.
inline concepttracer::AnalysisResult icd_result(std::size_t permutations = 60) {
  namespace ct = concepttracer;
  auto data = small_synthetic(42, 300, 6, 4, 3, {{0, 1, 0}, {2, 4, 2}, {2, 5, 3}});
  const std::pair<const char*, ct::ConceptLevel> names[] = {{"R", ct::ConceptLevel::High},
                                                            {"R57 shock", ct::ConceptLevel::Mid},
                                                            {"R570 cardiogenic shock", ct::ConceptLevel::Low},
                                                            {"I50 heart failure", ct::ConceptLevel::Mid}};
  for (std::size_t c = 0; c < 4; ++c) {
    data.concepts.concepts[c].name = names[c].first;
    data.concepts.concepts[c].level = names[c].second;
  }
  // Layer ids 0, 12, 22 exercise non-contiguous ids.
  data.activations.layers[1].id = 12;
  data.activations.layers[2].id = 22;
  for (auto& p : data.planted)
    if (p.layer == 2) p.layer = 22;
  ct::AnalysisConfig config;
  config.activations = "acts.manifest.json";
  config.concepts = "concepts.csv";
  config.master_seed = 7;
  config.permutation_count = permutations;
  return ct::run_analysis(data.activations, data.concepts, config);
}

}  // namespace ct_test

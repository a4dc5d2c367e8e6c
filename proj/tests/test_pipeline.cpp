#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "concepttracer/concepttracer.hpp"
#include "test_support.hpp"

namespace ct = concepttracer;
namespace fs = std::filesystem;

namespace {

ct::AnalysisConfig write_inputs(const ct::SyntheticData& data, const fs::path& dir) {
  ct::AnalysisConfig config;
  config.activations = ct::save_activations(data.activations, dir).string();
  config.concepts = (dir / "concepts.csv").string();
  ct::save_concepts(data.concepts, config.concepts);
  config.master_seed = 1234;
  config.permutation_count = 50;
  return config;
}

nlohmann::json without_run_info(nlohmann::json j) {
  j["provenance"].erase("run");
  return j;
}

}  // namespace

TEST(RunAnalysis, FromFilesRecordsDigestsAndConfig) {
  const auto dir = ct_test::temp_dir("pipeline_files");
  const auto data = ct_test::small_synthetic(1, 100, 4, 3, 2, {{1, 3, 2}});
  const auto config = write_inputs(data, dir);
  std::vector<std::string> events;
  ct::RunOptions options;
  options.on_event = [&](const std::string& line) { events.push_back(line); };
  const auto result = ct::run_analysis(config, options);

  EXPECT_EQ(result.config, config);
  EXPECT_EQ(result.effective_bin_count, 16u);
  EXPECT_EQ(result.pairs.size(), 2u * 4u * 3u);
  EXPECT_EQ(result.provenance.pair_count, result.pairs.size());
  EXPECT_EQ(result.provenance.input_digests.size(), 4u);  // manifest, 2 layer files, concepts
  EXPECT_EQ(result.provenance.input_digests.at(config.concepts), ct::sha256_file_hex(config.concepts));
  EXPECT_TRUE(ct::verify_digests(result).empty());
  for (const auto& null : result.nulls) {
    EXPECT_TRUE(std::is_sorted(null.max_saliency.begin(), null.max_saliency.end()));
    EXPECT_TRUE(std::is_sorted(null.max_selectivity.begin(), null.max_selectivity.end()));
  }

  ASSERT_FALSE(events.empty());
  EXPECT_TRUE(events.front().starts_with("event=start "));
  EXPECT_TRUE(events.back().starts_with("event=done "));
  EXPECT_EQ(std::count_if(events.begin(), events.end(), [](const auto& e) { return e.starts_with("event=layer_binned"); }), 2);
  EXPECT_TRUE(std::any_of(events.begin(), events.end(), [](const auto& e) { return e == "event=permutations done=50 total=50"; }));
}

TEST(RunAnalysis, EffectiveBinsCappedBySampleCount) {
  const auto data = ct_test::small_synthetic(2, 30, 2, 2);
  ct::AnalysisConfig config;
  config.master_seed = 1;
  config.permutation_count = 5;
  EXPECT_EQ(ct::run_analysis(data.activations, data.concepts, config).effective_bin_count, 6u);
}

TEST(RunAnalysis, ValidationErrors) {
  const auto data = ct_test::small_synthetic(3, 40, 2, 2, 2);
  ct::AnalysisConfig config;
  config.permutation_count = 5;
  try {
    ct::run_analysis(data.activations, data.concepts, config);
    FAIL() << "seed is required";
  } catch (const ct::Error& e) {
    EXPECT_EQ(e.kind(), ct::ErrorKind::InvalidInput);
  }
  config.master_seed = 1;
  config.layers = std::vector<int>{0, 9};
  try {
    ct::run_analysis(data.activations, data.concepts, config);
    FAIL();
  } catch (const ct::Error& e) {
    EXPECT_EQ(e.kind(), ct::ErrorKind::NotFound);
  }
  config.layers.reset();
  config.min_prevalence = 41;
  try {
    ct::run_analysis(data.activations, data.concepts, config);
    FAIL();
  } catch (const ct::Error& e) {
    EXPECT_EQ(e.kind(), ct::ErrorKind::EmptyConceptSet);
    EXPECT_NE(e.detail().find("min-prevalence"), std::string::npos);
  }
}

TEST(RunAnalysis, PrevalenceFilterRecordsDroppedConcepts) {
  auto data = ct_test::small_synthetic(4, 50, 2, 3);
  std::fill(data.concepts.concepts[1].values.begin(), data.concepts.concepts[1].values.end(), 0);
  data.concepts.concepts[1].values[3] = 1;
  ct::AnalysisConfig config;
  config.master_seed = 1;
  config.permutation_count = 5;
  config.min_prevalence = 2;
  const auto result = ct::run_analysis(data.activations, data.concepts, config);
  EXPECT_EQ(result.provenance.dropped_concepts, std::vector<std::string>{"concept_1"});
  EXPECT_EQ(result.concepts.size(), 2u);
}

TEST(RunAnalysis, ByteIdenticalAcrossRunsAndThreadCounts) {
  const auto dir = ct_test::temp_dir("pipeline_determinism");
  const auto data = ct_test::small_synthetic(5, 150, 5, 3, 2, {{0, 4, 1}});
  const auto config = write_inputs(data, dir);
  ct::RunOptions one, many;
  one.threads = 1;
  many.threads = 5;
  ct::save_result(ct::run_analysis(config, one), dir / "a.ct.json");
  ct::save_result(ct::run_analysis(config, many), dir / "b.ct.json");
  const auto a = nlohmann::json::parse(ct::detail::read_file_bytes(dir / "a.ct.json"));
  const auto b = nlohmann::json::parse(ct::detail::read_file_bytes(dir / "b.ct.json"));
  EXPECT_EQ(without_run_info(a).dump(), without_run_info(b).dump());
}

TEST(RunAnalysis, LayerSubsetKeepsMetrics) {
  const auto data = ct_test::small_synthetic(6, 90, 3, 3, 3, {{2, 0, 1}});
  ct::AnalysisConfig config;
  config.master_seed = 8;
  config.permutation_count = 20;
  const auto full = ct::run_analysis(data.activations, data.concepts, config);
  config.layers = std::vector<int>{2, 0};
  const auto subset = ct::run_analysis(data.activations, data.concepts, config);
  ASSERT_EQ(subset.layers.size(), 2u);
  std::vector<ct::PairScore> expected;
  for (const auto& p : full.pairs)
    if (p.layer != 1) expected.push_back(p);
  ASSERT_EQ(subset.pairs.size(), expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) {
    EXPECT_EQ(subset.pairs[i].saliency, expected[i].saliency);
    EXPECT_EQ(subset.pairs[i].selectivity, expected[i].selectivity);
  }
}

TEST(GenerateSynthetic, DeterministicAndValidated) {
  ct::SyntheticSpec spec;
  spec.sample_count = 100;
  spec.neurons_per_layer = 4;
  spec.concept_count = 3;
  spec.planted = {{1, 2, 0}};
  spec.seed = 5;
  const auto a = ct::generate_synthetic(spec);
  const auto b = ct::generate_synthetic(spec);
  EXPECT_EQ(a.activations, b.activations);
  EXPECT_EQ(a.concepts, b.concepts);
  spec.seed = 6;
  EXPECT_NE(ct::generate_synthetic(spec).concepts, a.concepts);

  auto bad = spec;
  bad.planted = {{2, 0, 0}};
  EXPECT_THROW(ct::generate_synthetic(bad), ct::Error);
  bad = spec;
  bad.prevalence = 1.0;
  EXPECT_THROW(ct::generate_synthetic(bad), ct::Error);
  bad = spec;
  bad.noise_sigma = -0.1;
  EXPECT_THROW(ct::generate_synthetic(bad), ct::Error);
}

TEST(GenerateSynthetic, PrevalenceWithinThreeBinomialDeviations) {
  ct::SyntheticSpec spec;
  spec.sample_count = 2000;
  spec.neurons_per_layer = 1;
  spec.concept_count = 20;
  spec.layer_count = 1;
  spec.prevalence = 0.3;
  spec.seed = 77;
  const auto data = ct::generate_synthetic(spec);
  const double mean = 2000 * 0.3;
  const double sd = std::sqrt(2000 * 0.3 * 0.7);
  for (const auto& col : data.concepts.concepts)
    EXPECT_LE(std::abs(static_cast<double>(col.prevalence()) - mean), 3 * sd) << col.name;
}

TEST(GenerateSynthetic, NoiselessPlantedNeuronSeparatesClasses) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ct::SyntheticSpec spec;
    spec.sample_count = 200;
    spec.neurons_per_layer = 2;
    spec.concept_count = 1;
    spec.layer_count = 1;
    spec.noise_sigma = 0.0;
    spec.planted = {{0, 1, 0}};
    spec.seed = seed;
    const auto data = ct::generate_synthetic(spec);
    const auto column = data.activations.layers[0].values.column(1);
    const auto& labels = data.concepts.concepts[0].values;
    for (std::size_t m = 0; m < labels.size(); ++m) EXPECT_EQ(column[m], static_cast<float>(labels[m]));

    // Equal-frequency bins leave at most one bin holding both classes.
    const auto binned = ct::bin_activations(std::span<const float>(column), 8);
    std::vector<int> has0(8, 0), has1(8, 0);
    for (std::size_t m = 0; m < labels.size(); ++m) (labels[m] ? has1 : has0)[binned.bin_indices[m]] = 1;
    int mixed = 0;
    for (int b = 0; b < 8; ++b) mixed += has0[b] && has1[b];
    EXPECT_LE(mixed, 1);

    // When the class boundary falls on a bin boundary the saliency is exactly 1.
    const std::size_t negatives = labels.size() - data.concepts.concepts[0].prevalence();
    const auto bins = static_cast<std::uint32_t>(labels.size() / std::gcd(labels.size(), negatives));
    if (bins >= 2 && bins <= labels.size())
      EXPECT_NEAR(ct::saliency(std::span<const float>(column), std::span<const std::uint8_t>(labels), bins), 1.0, 1e-12);
  }
  // Boundary aligned by construction: 100 of 200 samples positive, two bins.
  ct::Matrix<float> layer(200, 1);
  ct::ConceptVector labels;
  labels.name = "half";
  labels.values.resize(200);
  for (std::size_t m = 0; m < 200; ++m) {
    labels.values[m] = (m * 7) % 200 < 100 ? 1 : 0;
    layer(m, 0) = labels.values[m];
  }
  EXPECT_DOUBLE_EQ(ct::saliency_matrix(layer, {200, {labels}}, 2).values(0, 0), 1.0);
}

TEST(GenerateSynthetic, PlantedSaliencyAboveNonPlanted99thPercentile) {
  ct::SyntheticSpec spec;
  spec.sample_count = 2000;
  spec.neurons_per_layer = 64;
  spec.concept_count = 8;
  spec.layer_count = 1;
  spec.planted = {{0, 3, 0}, {0, 10, 2}, {0, 33, 5}, {0, 60, 7}};
  spec.seed = 2025;
  const auto data = ct::generate_synthetic(spec);
  const auto sal = ct::saliency_matrix(data.activations.layers[0].values, data.concepts, 16);
  std::vector<double> background;
  for (std::size_t n = 0; n < 64; ++n)
    for (std::size_t c = 0; c < 8; ++c) {
      const bool planted = std::any_of(spec.planted.begin(), spec.planted.end(), [&](const ct::PlantedPair& p) {
        return p.neuron == n && p.concept_index == c;
      });
      if (!planted) background.push_back(sal.values(n, c));
    }
  std::sort(background.begin(), background.end());
  const double p99 = background[static_cast<std::size_t>(0.99 * static_cast<double>(background.size() - 1))];
  for (const auto& p : spec.planted) EXPECT_GT(sal.values(p.neuron, p.concept_index), p99);
}

TEST(GenerateSynthetic, NoPlantedPairsIsStatisticallyNull) {
  const auto data = ct_test::small_synthetic(12, 300, 8, 4, 2);
  ct::AnalysisConfig config;
  config.master_seed = 3;
  config.permutation_count = 100;
  const auto result = ct::run_analysis(data.activations, data.concepts, config);
  EXPECT_EQ(result.provenance.significant_count, 0u);
}

#pragma once

// Analysis configuration and the persisted result document
// (`result.ct.json`, schema_version "1").
//
// Pair scores are stored column-wise under "pairs"; null maxima are stored
// sorted ascending so significance can be re-derived for any alpha without
// re-running permutations. Doubles are written in shortest round-trip form,
// so save/load is bit-exact.

#include <chrono>
#include <ctime>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "data_io.hpp"
#include "error.hpp"
#include "significance.hpp"
#include "version.hpp"

namespace concepttracer {

struct AnalysisConfig {
  std::string activations;
  std::string concepts;
  std::uint32_t bin_count = kDefaultBinCount;
  std::size_t permutation_count = kDefaultPermutationCount;
  double alpha = kDefaultAlpha;
  std::optional<std::uint64_t> master_seed;
  std::size_t min_prevalence = 0;
  MaxtScope maxt_scope = MaxtScope::Global;
  /// Empty means every layer in the manifest.
  std::optional<std::vector<int>> layers;

  void validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorKind::InvalidInput, "alpha must lie in (0, 1)");
    if (permutation_count < 1) throw Error(ErrorKind::InvalidInput, "permutation count must be at least 1");
    if (bin_count < 2) throw Error(ErrorKind::InvalidInput, "bin count must be at least 2");
    if (!master_seed) throw Error(ErrorKind::InvalidInput, "a master seed is required");
    if (layers && layers->empty()) throw Error(ErrorKind::InvalidInput, "layer selection is empty");
  }

  bool operator==(const AnalysisConfig&) const = default;
};

struct LayerInfo {
  int id = 0;
  std::string name;
  std::size_t neuron_count = 0;
  bool operator==(const LayerInfo&) const = default;
};

struct ConceptInfo {
  std::string name;
  ConceptLevel level = ConceptLevel::Unspecified;
  std::size_t prevalence = 0;
  bool operator==(const ConceptInfo&) const = default;
};

struct Provenance {
  std::string tool_version = kToolVersion;
  std::map<std::string, std::string> input_digests;
  std::vector<std::string> dropped_concepts;
  std::size_t pair_count = 0;
  std::size_t significant_count = 0;
  std::string timestamp;
  double wall_clock_seconds = 0.0;
  bool operator==(const Provenance&) const = default;
};

struct AnalysisResult {
  std::string schema_version = kSchemaVersion;
  AnalysisConfig config;
  std::uint32_t effective_bin_count = 0;
  std::vector<LayerInfo> layers;
  std::vector<ConceptInfo> concepts;
  std::vector<PairScore> pairs;
  /// Null maxima, each sorted ascending.
  std::vector<NullDistribution> nulls;
  Provenance provenance;

  bool operator==(const AnalysisResult&) const = default;

  const LayerInfo* find_layer(int id) const noexcept {
    for (const auto& l : layers)
      if (l.id == id) return &l;
    return nullptr;
  }
};

inline std::string utc_timestamp_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json config_to_json(const AnalysisConfig& c) {
  nlohmann::json j{{"activations", c.activations},
                   {"concepts", c.concepts},
                   {"bin_count", c.bin_count},
                   {"permutation_count", c.permutation_count},
                   {"alpha", c.alpha},
                   {"min_prevalence", c.min_prevalence},
                   {"maxt_scope", to_string(c.maxt_scope)}};
  j["master_seed"] = c.master_seed ? nlohmann::json(*c.master_seed) : nlohmann::json(nullptr);
  j["layers"] = c.layers ? nlohmann::json(*c.layers) : nlohmann::json("all");
  return j;
}

/// Reads a config object; absent keys keep their defaults.
inline AnalysisConfig config_from_json(const nlohmann::json& j) {
  AnalysisConfig c;
  try {
    if (!j.is_object()) throw Error(ErrorKind::Malformed, "config must be a JSON object");
    c.activations = j.value("activations", c.activations);
    c.concepts = j.value("concepts", c.concepts);
    c.bin_count = j.value("bin_count", c.bin_count);
    c.permutation_count = j.value("permutation_count", c.permutation_count);
    c.alpha = j.value("alpha", c.alpha);
    c.min_prevalence = j.value("min_prevalence", c.min_prevalence);
    if (j.contains("maxt_scope")) c.maxt_scope = parse_maxt_scope(j.at("maxt_scope").get<std::string>());
    if (j.contains("master_seed") && !j.at("master_seed").is_null())
      c.master_seed = j.at("master_seed").get<std::uint64_t>();
    if (j.contains("layers") && !(j.at("layers").is_string() && j.at("layers") == "all"))
      c.layers = j.at("layers").get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Malformed, "invalid config field", e.what());
  }
  return c;
}

inline nlohmann::json result_to_json(const AnalysisResult& r) {
  nlohmann::json j;
  j["schema_version"] = r.schema_version;
  j["config"] = config_to_json(r.config);
  j["config"]["effective_bin_count"] = r.effective_bin_count;

  auto& layers = j["layers"] = nlohmann::json::array();
  for (const auto& l : r.layers) layers.push_back({{"id", l.id}, {"name", l.name}, {"neuron_count", l.neuron_count}});
  auto& concepts = j["concepts"] = nlohmann::json::array();
  for (const auto& c : r.concepts)
    concepts.push_back({{"name", c.name}, {"level", to_string(c.level)}, {"prevalence", c.prevalence}});

  std::vector<int> layer;
  std::vector<std::uint32_t> neuron, concept_index;
  std::vector<double> sal, sel, p_sal, p_sel, p_comb;
  std::vector<bool> significant;
  for (const auto& p : r.pairs) {
    layer.push_back(p.layer);
    neuron.push_back(p.neuron);
    concept_index.push_back(p.concept_index);
    sal.push_back(p.saliency);
    sel.push_back(p.selectivity);
    p_sal.push_back(p.p_saliency);
    p_sel.push_back(p.p_selectivity);
    p_comb.push_back(p.p_combined);
    significant.push_back(p.significant);
  }
  j["pairs"] = {{"layer", layer},          {"neuron", neuron},           {"concept", concept_index},
                {"saliency", sal},         {"selectivity", sel},         {"p_saliency", p_sal},
                {"p_selectivity", p_sel},  {"p_combined", p_comb},       {"significant", significant}};

  auto& nulls = j["null"] = nlohmann::json::array();
  for (const auto& n : r.nulls)
    nulls.push_back({{"scope", n.scope},
                     {"layer_ids", n.layer_ids},
                     {"max_saliency_sorted", n.max_saliency},
                     {"max_selectivity_sorted", n.max_selectivity}});

  const auto& pv = r.provenance;
  j["provenance"] = {{"tool_version", pv.tool_version},
                     {"input_digests", pv.input_digests},
                     {"dropped_concepts", pv.dropped_concepts},
                     {"pair_count", pv.pair_count},
                     {"significant_count", pv.significant_count},
                     {"run", {{"timestamp", pv.timestamp}, {"wall_clock_seconds", pv.wall_clock_seconds}}}};
  return j;
}

inline AnalysisResult result_from_json(const nlohmann::json& j) {
  AnalysisResult r;
  try {
    r.schema_version = j.at("schema_version").get<std::string>();
    if (r.schema_version != kSchemaVersion)
      throw Error(ErrorKind::SchemaMismatch, "unsupported result schema version", r.schema_version);
    r.config = config_from_json(j.at("config"));
    r.effective_bin_count = j.at("config").at("effective_bin_count").get<std::uint32_t>();

    for (const auto& l : j.at("layers"))
      r.layers.push_back({l.at("id").get<int>(), l.at("name").get<std::string>(),
                          l.at("neuron_count").get<std::size_t>()});
    for (const auto& c : j.at("concepts")) {
      const auto level = parse_level(c.at("level").get<std::string>());
      if (!level) throw Error(ErrorKind::Malformed, "unknown concept level", c.at("level").dump());
      r.concepts.push_back({c.at("name").get<std::string>(), *level, c.at("prevalence").get<std::size_t>()});
    }

    const auto& pairs = j.at("pairs");
    const auto layer = pairs.at("layer").get<std::vector<int>>();
    const auto neuron = pairs.at("neuron").get<std::vector<std::uint32_t>>();
    const auto concept_index = pairs.at("concept").get<std::vector<std::uint32_t>>();
    const auto sal = pairs.at("saliency").get<std::vector<double>>();
    const auto sel = pairs.at("selectivity").get<std::vector<double>>();
    const auto p_sal = pairs.at("p_saliency").get<std::vector<double>>();
    const auto p_sel = pairs.at("p_selectivity").get<std::vector<double>>();
    const auto p_comb = pairs.at("p_combined").get<std::vector<double>>();
    const auto significant = pairs.at("significant").get<std::vector<bool>>();
    const std::size_t n = layer.size();
    for (std::size_t len : {neuron.size(), concept_index.size(), sal.size(), sel.size(), p_sal.size(), p_sel.size(),
                            p_comb.size(), significant.size()})
      if (len != n) throw Error(ErrorKind::Malformed, "pair columns have different lengths");
    r.pairs.resize(n);
    for (std::size_t i = 0; i < n; ++i)
      r.pairs[i] = {layer[i], neuron[i], concept_index[i], sal[i], sel[i], p_sal[i], p_sel[i], p_comb[i],
                    static_cast<bool>(significant[i])};

    for (const auto& nj : j.at("null"))
      r.nulls.push_back({nj.at("scope").get<std::string>(), nj.at("layer_ids").get<std::vector<int>>(),
                         nj.at("max_saliency_sorted").get<std::vector<double>>(),
                         nj.at("max_selectivity_sorted").get<std::vector<double>>()});

    const auto& pv = j.at("provenance");
    r.provenance.tool_version = pv.at("tool_version").get<std::string>();
    r.provenance.input_digests = pv.at("input_digests").get<std::map<std::string, std::string>>();
    r.provenance.dropped_concepts = pv.at("dropped_concepts").get<std::vector<std::string>>();
    r.provenance.pair_count = pv.at("pair_count").get<std::size_t>();
    r.provenance.significant_count = pv.at("significant_count").get<std::size_t>();
    r.provenance.timestamp = pv.at("run").at("timestamp").get<std::string>();
    r.provenance.wall_clock_seconds = pv.at("run").at("wall_clock_seconds").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Malformed, "result document is missing or mistypes a field", e.what());
  }
  return r;
}

inline void save_result(const AnalysisResult& result, const fs::path& path) {
  detail::write_file_bytes(path, result_to_json(result).dump() + "\n");
}

inline AnalysisResult load_result(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorKind::MissingFile, "result file not found", path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::read_file_bytes(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::Malformed, "result file is not valid JSON", path.string() + ": " + e.what());
  }
  return result_from_json(j);
}

/// Recomputes input digests; returns one warning per missing or changed input.
inline std::vector<std::string> verify_digests(const AnalysisResult& result) {
  std::vector<std::string> warnings;
  for (const auto& [path, expected] : result.provenance.input_digests) {
    if (!fs::exists(path)) {
      warnings.push_back(std::string(to_string(ErrorKind::DigestMismatch)) + ": input no longer present: " + path);
      continue;
    }
    const auto actual = sha256_file_hex(path);
    if (actual != expected)
      warnings.push_back(std::string(to_string(ErrorKind::DigestMismatch)) + ": " + path + " has digest " + actual +
                         ", result recorded " + expected);
  }
  return warnings;
}

/// Pair table with p-values re-derived from the stored sorted null maxima and
/// significance evaluated at `alpha`.
inline std::vector<PairScore> rethreshold(const AnalysisResult& result, double alpha) {
  std::vector<PairScore> pairs = result.pairs;
  for (auto& p : pairs) {
    const auto& null = result.nulls[null_for_layer(result.nulls, p.layer)];
    p.p_saliency = corrected_pvalue_sorted(p.saliency, null.max_saliency);
    p.p_selectivity = corrected_pvalue_sorted(p.selectivity, null.max_selectivity);
    p.p_combined = combine_pvalues(p.p_saliency, p.p_selectivity);
    p.significant = p.p_combined <= alpha;
  }
  return pairs;
}

}  // namespace concepttracer

#pragma once

// Scoped queries over an AnalysisResult: the network, layer-set, neuron and
// concept views, each with Pareto front, knee point, top-k lists and a fixed
// 32-bin histogram of the selected metric.

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "pareto.hpp"
#include "result.hpp"

namespace concepttracer {

inline constexpr std::size_t kHistogramBins = 32;
inline constexpr std::size_t kDefaultTopK = 20;

enum class ViewScope { Network, Layers, Neuron, Concept };

constexpr std::string_view to_string(ViewScope scope) {
  switch (scope) {
    case ViewScope::Network: return "network";
    case ViewScope::Layers: return "layers";
    case ViewScope::Neuron: return "neuron";
    case ViewScope::Concept: break;
  }
  return "concept";
}

inline ViewScope parse_view_scope(std::string_view text) {
  if (text == "network") return ViewScope::Network;
  if (text == "layers" || text == "layer") return ViewScope::Layers;
  if (text == "neuron") return ViewScope::Neuron;
  if (text == "concept") return ViewScope::Concept;
  throw Error(ErrorKind::InvalidInput, "unknown scope", std::string(text));
}

struct ViewQuery {
  ViewScope scope = ViewScope::Network;
  std::optional<std::vector<int>> layers;
  std::optional<std::uint32_t> neuron;
  std::optional<std::string> concept_query;
  std::optional<ConceptLevel> level;
  Metric metric = Metric::Saliency;
  bool significant_only = true;
  std::optional<double> alpha_override;
  std::size_t top_k = kDefaultTopK;

  void validate() const {
    if (scope == ViewScope::Layers && (!layers || layers->empty()))
      throw Error(ErrorKind::InvalidInput, "layers scope needs a layer list", "layers");
    if (scope == ViewScope::Neuron) {
      if (!layers || layers->size() != 1)
        throw Error(ErrorKind::InvalidInput, "neuron scope needs exactly one layer", "layer");
      if (!neuron) throw Error(ErrorKind::InvalidInput, "neuron scope needs a neuron id", "neuron");
    }
    if (scope == ViewScope::Concept && (!concept_query || concept_query->empty()))
      throw Error(ErrorKind::InvalidInput, "concept scope needs a concept query", "q");
    if (alpha_override && !(*alpha_override > 0.0 && *alpha_override <= 1.0))
      throw Error(ErrorKind::InvalidInput, "alpha must lie in (0, 1]", "alpha");
    if (top_k < 1) throw Error(ErrorKind::InvalidInput, "top_k must be at least 1", "top_k");
  }
};

namespace detail {

inline std::string lowercase(std::string_view text) {
  std::string out(text);
  for (auto& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return out;
}

template <typename T>
T parse_number(const std::string& text, const char* name) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty())
    throw Error(ErrorKind::InvalidInput, "parameter is not a valid number", std::string(name) + "=" + text);
  return value;
}

inline double parse_double(const std::string& text, const char* name) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::InvalidInput, "parameter is not a valid number", std::string(name) + "=" + text);
  }
}

inline bool parse_bool(const std::string& text, const char* name) {
  const auto t = lowercase(text);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw Error(ErrorKind::InvalidInput, "parameter is not a boolean", std::string(name) + "=" + text);
}

inline std::vector<int> parse_int_list(const std::string& text, const char* name) {
  std::vector<int> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = std::min(text.find(',', start), text.size());
    out.push_back(parse_number<int>(text.substr(start, comma - start), name));
    start = comma + 1;
  }
  return out;
}

inline bool contains_case_insensitive(std::string_view haystack, std::string_view needle) {
  return lowercase(haystack).find(lowercase(needle)) != std::string::npos;
}

}  // namespace detail

/// Builds a query from URL-style parameters (scope, layers, layer, neuron, q,
/// level, metric, significant_only, alpha, top_k).
inline ViewQuery parse_view_query(const std::map<std::string, std::string>& params) {
  ViewQuery q;
  const auto get = [&](const char* key) -> std::optional<std::string> {
    const auto it = params.find(key);
    if (it == params.end()) return std::nullopt;
    return it->second;
  };
  if (auto v = get("scope")) q.scope = parse_view_scope(*v);
  if (auto v = get("layers"); v && !v->empty()) q.layers = detail::parse_int_list(*v, "layers");
  if (auto v = get("layer"); v && !v->empty()) q.layers = std::vector<int>{detail::parse_number<int>(*v, "layer")};
  if (auto v = get("neuron")) q.neuron = detail::parse_number<std::uint32_t>(*v, "neuron");
  if (auto v = get("q")) q.concept_query = *v;
  if (auto v = get("concept")) q.concept_query = *v;
  if (auto v = get("level"); v && !v->empty()) {
    const auto level = parse_level(*v);
    if (!level) throw Error(ErrorKind::InvalidInput, "unknown concept level", "level=" + *v);
    q.level = level;
  }
  if (auto v = get("metric")) q.metric = parse_metric(*v);
  if (auto v = get("significant_only")) q.significant_only = detail::parse_bool(*v, "significant_only");
  if (auto v = get("alpha")) q.alpha_override = detail::parse_double(*v, "alpha");
  if (auto v = get("top_k")) q.top_k = detail::parse_number<std::size_t>(*v, "top_k");
  q.validate();
  return q;
}

struct ParetoView {
  ViewQuery query;
  double alpha = kDefaultAlpha;
  std::vector<PairScore> pairs;
  std::vector<std::size_t> front;
  std::optional<std::size_t> knee;
  std::map<Metric, std::vector<std::size_t>> top_k;
  std::array<std::size_t, kHistogramBins> histogram{};
};

/// Histogram bin of a value in [0, 1]; 1.0 falls in the last bin.
constexpr std::size_t histogram_bin(double value) noexcept {
  const auto bin = static_cast<std::size_t>(std::clamp(value, 0.0, 1.0) * kHistogramBins);
  return std::min(bin, kHistogramBins - 1);
}

/// Indices of concepts whose name contains `text` (case-insensitive),
/// optionally restricted to one level.
inline std::vector<std::size_t> search_concepts(const AnalysisResult& result, std::string_view text,
                                                std::optional<ConceptLevel> level = std::nullopt) {
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < result.concepts.size(); ++c) {
    if (level && result.concepts[c].level != *level) continue;
    if (detail::contains_case_insensitive(result.concepts[c].name, text)) out.push_back(c);
  }
  return out;
}

/// Pairs belonging to the query's scope, before significance filtering.
inline std::vector<PairScore> scope_pairs(const AnalysisResult& result, const ViewQuery& q) {
  std::set<int> layers;
  if (q.layers) {
    for (int id : *q.layers) {
      if (!result.find_layer(id)) throw Error(ErrorKind::NotFound, "unknown layer", std::to_string(id));
      layers.insert(id);
    }
  }
  if (q.scope == ViewScope::Neuron && *q.neuron >= result.find_layer(q.layers->front())->neuron_count)
    throw Error(ErrorKind::NotFound, "unknown neuron",
                "layer " + std::to_string(q.layers->front()) + ", neuron " + std::to_string(*q.neuron));

  std::vector<bool> concept_selected(result.concepts.size(), true);
  if (q.scope == ViewScope::Concept) {
    const auto matches = search_concepts(result, *q.concept_query, q.level);
    if (matches.empty()) throw Error(ErrorKind::NotFound, "no concept matches the query", *q.concept_query);
    std::fill(concept_selected.begin(), concept_selected.end(), false);
    for (auto c : matches) concept_selected[c] = true;
  }

  std::vector<PairScore> out;
  for (const auto& p : result.pairs) {
    if (!layers.empty() && !layers.count(p.layer)) continue;
    if (q.scope == ViewScope::Neuron && p.neuron != *q.neuron) continue;
    if (!concept_selected[p.concept_index]) continue;
    out.push_back(p);
  }
  return out;
}

inline ParetoView query_view(const AnalysisResult& result, const ViewQuery& q) {
  q.validate();
  ParetoView view;
  view.query = q;
  view.alpha = q.alpha_override.value_or(result.config.alpha);
  for (auto p : scope_pairs(result, q)) {
    p.significant = p.p_combined <= view.alpha;
    if (q.significant_only && !p.significant) continue;
    view.pairs.push_back(p);
  }
  view.front = pareto_front(view.pairs);
  view.knee = knee_point(view.pairs, view.front);
  for (auto metric : {Metric::Saliency, Metric::Selectivity, Metric::Combined})
    view.top_k[metric] = top_k(view.pairs, metric, q.top_k);

  auto values = metric_values(view.pairs, q.metric);
  if (q.metric == Metric::Combined)
    for (auto& v : values) v /= 2.0;
  for (double v : values) ++view.histogram[histogram_bin(v)];
  return view;
}

// ---------------------------------------------------------------------------
// JSON payloads

inline nlohmann::json query_to_json(const ViewQuery& q) {
  nlohmann::json j{{"scope", to_string(q.scope)},
                   {"metric", to_string(q.metric)},
                   {"significant_only", q.significant_only},
                   {"top_k", q.top_k}};
  j["layers"] = q.layers ? nlohmann::json(*q.layers) : nlohmann::json(nullptr);
  j["neuron"] = q.neuron ? nlohmann::json(*q.neuron) : nlohmann::json(nullptr);
  j["q"] = q.concept_query ? nlohmann::json(*q.concept_query) : nlohmann::json(nullptr);
  j["level"] = q.level ? nlohmann::json(to_string(*q.level)) : nlohmann::json(nullptr);
  return j;
}

inline nlohmann::json pairs_to_json(const AnalysisResult& result, const std::vector<PairScore>& pairs) {
  const auto combined = combined_scores(pairs);
  auto out = nlohmann::json::array();
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    const auto& info = result.concepts.at(p.concept_index);
    out.push_back({{"layer", p.layer},
                   {"neuron", p.neuron},
                   {"concept", p.concept_index},
                   {"concept_name", info.name},
                   {"level", to_string(info.level)},
                   {"saliency", p.saliency},
                   {"selectivity", p.selectivity},
                   {"p_saliency", p.p_saliency},
                   {"p_selectivity", p.p_selectivity},
                   {"p_combined", p.p_combined},
                   {"significant", p.significant},
                   {"combined_score", combined[i]}});
  }
  return out;
}

inline nlohmann::json histogram_to_json(const ParetoView& view) {
  return {{"metric", to_string(view.query.metric)},
          {"bins", kHistogramBins},
          {"range", {0.0, 1.0}},
          {"counts", view.histogram},
          {"total", view.pairs.size()}};
}

/// Full view payload, as served by /api/pareto.
inline nlohmann::json view_to_json(const AnalysisResult& result, const ParetoView& view) {
  nlohmann::json j;
  j["query"] = query_to_json(view.query);
  j["alpha"] = view.alpha;
  j["pairs"] = pairs_to_json(result, view.pairs);
  j["front"] = view.front;
  j["knee"] = view.knee ? nlohmann::json(*view.knee) : nlohmann::json(nullptr);
  auto& tops = j["top_k"] = nlohmann::json::object();
  for (const auto& [metric, indices] : view.top_k) tops[std::string(to_string(metric))] = indices;
  j["histogram"] = histogram_to_json(view);
  return j;
}

inline nlohmann::json concept_info_json(const AnalysisResult& result, std::size_t c) {
  const auto& info = result.concepts[c];
  return {{"index", c}, {"name", info.name}, {"level", to_string(info.level)}, {"prevalence", info.prevalence}};
}

inline nlohmann::json meta_to_json(const AnalysisResult& result) {
  nlohmann::json j;
  j["schema_version"] = result.schema_version;
  j["tool_version"] = result.provenance.tool_version;
  j["config"] = config_to_json(result.config);
  j["config"]["effective_bin_count"] = result.effective_bin_count;
  auto& layers = j["layers"] = nlohmann::json::array();
  std::size_t neurons = 0;
  for (const auto& l : result.layers) {
    layers.push_back({{"id", l.id}, {"name", l.name}, {"neuron_count", l.neuron_count}});
    neurons += l.neuron_count;
  }
  auto& concepts = j["concepts"] = nlohmann::json::array();
  for (std::size_t c = 0; c < result.concepts.size(); ++c) concepts.push_back(concept_info_json(result, c));
  const auto significant = std::count_if(result.pairs.begin(), result.pairs.end(),
                                         [&](const PairScore& p) { return p.p_combined <= result.config.alpha; });
  j["counts"] = {{"layers", result.layers.size()},
                 {"neurons", neurons},
                 {"concepts", result.concepts.size()},
                 {"pairs", result.pairs.size()},
                 {"significant", significant}};
  j["dropped_concepts"] = result.provenance.dropped_concepts;
  j["null_scopes"] = nlohmann::json::array();
  for (const auto& n : result.nulls) j["null_scopes"].push_back({{"scope", n.scope}, {"layer_ids", n.layer_ids}});
  return j;
}

}  // namespace concepttracer

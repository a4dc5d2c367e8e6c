#pragma once

// Static rendition of a view: ranked table for the terminal and CSV export.

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "view.hpp"

namespace concepttracer {

struct ReportRow {
  std::size_t rank = 0;
  PairScore pair;
  std::string concept_name;
  bool on_front = false;
  bool is_knee = false;
};

/// Top rows of `view` ranked by its query metric.
inline std::vector<ReportRow> report_rows(const AnalysisResult& result, const ParetoView& view) {
  std::vector<ReportRow> rows;
  const auto& ranked = view.top_k.at(view.query.metric);
  for (std::size_t r = 0; r < ranked.size(); ++r) {
    const std::size_t idx = ranked[r];
    ReportRow row;
    row.rank = r + 1;
    row.pair = view.pairs[idx];
    row.concept_name = result.concepts.at(row.pair.concept_index).name;
    row.on_front = std::find(view.front.begin(), view.front.end(), idx) != view.front.end();
    row.is_knee = view.knee && *view.knee == idx;
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::string render_report_table(const std::vector<ReportRow>& rows) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%4s %6s %7s  %-24s %9s %11s %10s %5s %4s\n", "rank", "layer", "neuron", "concept",
                "saliency", "selectivity", "p_combined", "front", "knee");
  out << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%4zu %6d %7u  %-24.24s %9.4f %11.4f %10.4g %5s %4s\n", r.rank, r.pair.layer,
                  r.pair.neuron, r.concept_name.c_str(), r.pair.saliency, r.pair.selectivity, r.pair.p_combined,
                  r.on_front ? "*" : "", r.is_knee ? "K" : "");
    out << line;
  }
  if (rows.empty()) out << "(no pairs in this view)\n";
  return out.str();
}

/// CSV with full-precision numbers; front/knee as 0/1 columns.
inline std::string render_report_csv(const std::vector<ReportRow>& rows) {
  std::ostringstream out;
  out << "rank,layer,neuron,concept,concept_name,saliency,selectivity,p_saliency,p_selectivity,p_combined,"
         "significant,front,knee\n";
  char num[32];
  const auto fmt = [&](double v) {
    std::snprintf(num, sizeof num, "%.17g", v);
    return std::string(num);
  };
  for (const auto& r : rows) {
    out << r.rank << ',' << r.pair.layer << ',' << r.pair.neuron << ',' << r.pair.concept_index << ','
        << detail::csv_escape(r.concept_name) << ',' << fmt(r.pair.saliency) << ',' << fmt(r.pair.selectivity) << ','
        << fmt(r.pair.p_saliency) << ',' << fmt(r.pair.p_selectivity) << ',' << fmt(r.pair.p_combined) << ','
        << (r.pair.significant ? 1 : 0) << ',' << (r.on_front ? 1 : 0) << ',' << (r.is_knee ? 1 : 0) << '\n';
  }
  return out.str();
}

}  // namespace concepttracer

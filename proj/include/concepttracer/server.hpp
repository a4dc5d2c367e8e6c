#pragma once

// Read-only HTTP JSON API over one AnalysisResult.
//
//   GET /api/meta          config, layers, concepts, counts
//   GET /api/pairs         pairs in a ViewQuery scope
//   GET /api/pareto        pairs + front + knee + top-k + histogram
//   GET /api/distribution  32-bin histogram of the selected metric
//   GET /api/concepts?q=   case-insensitive concept name search
//
// Errors are {"error_kind", "message", "detail"} with 400 for invalid
// queries and 404 for unknown layers, neurons or concepts.

#include <map>
#include <memory>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "view.hpp"

namespace concepttracer {

inline int http_status(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NotFound: return 404;
    case ErrorKind::InvalidInput: return 400;
    default: return 500;
  }
}

inline nlohmann::json error_to_json(const Error& e) {
  return {{"error_kind", to_string(e.kind())}, {"message", e.message()}, {"detail", e.detail()}};
}

namespace detail {

inline std::map<std::string, std::string> request_params(const httplib::Request& req) {
  std::map<std::string, std::string> out;
  for (const auto& [key, value] : req.params) out[key] = value;
  return out;
}

template <typename Handler>
httplib::Server::Handler json_route(Handler handler) {
  return [handler](const httplib::Request& req, httplib::Response& res) {
    try {
      res.set_content(handler(req).dump(), "application/json");
    } catch (const Error& e) {
      res.status = http_status(e.kind());
      res.set_content(error_to_json(e).dump(), "application/json");
    } catch (const std::exception& e) {
      res.status = 500;
      res.set_content(nlohmann::json{{"error_kind", "Internal"}, {"message", e.what()}, {"detail", ""}}.dump(),
                      "application/json");
    }
  };
}

}  // namespace detail

/// Registers the API routes; `result` must outlive the server.
inline void install_routes(httplib::Server& server, std::shared_ptr<const AnalysisResult> result) {
  server.Get("/api/meta", detail::json_route([result](const httplib::Request&) { return meta_to_json(*result); }));

  server.Get("/api/pairs", detail::json_route([result](const httplib::Request& req) {
    const auto view = query_view(*result, parse_view_query(detail::request_params(req)));
    return nlohmann::json{{"query", query_to_json(view.query)},
                          {"alpha", view.alpha},
                          {"pairs", pairs_to_json(*result, view.pairs)}};
  }));

  server.Get("/api/pareto", detail::json_route([result](const httplib::Request& req) {
    return view_to_json(*result, query_view(*result, parse_view_query(detail::request_params(req))));
  }));

  server.Get("/api/distribution", detail::json_route([result](const httplib::Request& req) {
    const auto view = query_view(*result, parse_view_query(detail::request_params(req)));
    auto j = histogram_to_json(view);
    j["query"] = query_to_json(view.query);
    j["alpha"] = view.alpha;
    return j;
  }));

  server.Get("/api/concepts", detail::json_route([result](const httplib::Request& req) {
    const std::string text = req.has_param("q") ? req.get_param_value("q") : "";
    std::optional<ConceptLevel> level;
    if (req.has_param("level") && !req.get_param_value("level").empty()) {
      level = parse_level(req.get_param_value("level"));
      if (!level) throw Error(ErrorKind::InvalidInput, "unknown concept level", req.get_param_value("level"));
    }
    auto matches = nlohmann::json::array();
    for (auto c : search_concepts(*result, text, level)) matches.push_back(concept_info_json(*result, c));
    return nlohmann::json{{"q", text}, {"matches", matches}};
  }));
}

}  // namespace concepttracer

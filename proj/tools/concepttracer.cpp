// concepttracer: compute, report, serve and generate subcommands.
//
// Exit codes: 0 ok, 2 invalid flags, 3 input validation, 4 computation
// failure, 5 port unavailable.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "concepttracer/concepttracer.hpp"
#include "concepttracer/server.hpp"

namespace ct = concepttracer;

namespace {

constexpr int kExitFlags = 2;
constexpr int kExitInput = 3;
constexpr int kExitCompute = 4;
constexpr int kExitPort = 5;

int fail(int code, const std::string& message) {
  std::cerr << "error: " << message << "\n";
  return code;
}

std::optional<std::vector<int>> parse_layers_flag(const std::string& text) {
  if (text.empty() || text == "all") return std::nullopt;
  return ct::detail::parse_int_list(text, "--layers");
}

struct ComputeFlags {
  std::string config_file;
  std::string activations;
  std::string concepts;
  std::string out;
  std::size_t permutations = ct::kDefaultPermutationCount;
  double alpha = ct::kDefaultAlpha;
  std::uint32_t bins = ct::kDefaultBinCount;
  std::optional<std::uint64_t> seed;
  std::size_t min_prevalence = 0;
  std::string layers = "all";
  std::string maxt_scope = "global";
  unsigned threads = 0;
  bool quiet = false;
};

int run_compute(const ComputeFlags& flags, const CLI::App& cmd) {
  ct::AnalysisConfig config;
  try {
    if (!flags.config_file.empty()) {
      std::ifstream in(flags.config_file);
      if (!in) return fail(kExitFlags, "cannot read config file " + flags.config_file);
      config = ct::config_from_json(nlohmann::json::parse(in));
    }
    const auto given = [&](const char* name) { return cmd.count(name) > 0; };
    if (given("--activations")) config.activations = flags.activations;
    if (given("--concepts")) config.concepts = flags.concepts;
    if (given("--permutations") || flags.config_file.empty()) config.permutation_count = flags.permutations;
    if (given("--alpha") || flags.config_file.empty()) config.alpha = flags.alpha;
    if (given("--bins") || flags.config_file.empty()) config.bin_count = flags.bins;
    if (given("--min-prevalence") || flags.config_file.empty()) config.min_prevalence = flags.min_prevalence;
    if (given("--layers") || flags.config_file.empty()) config.layers = parse_layers_flag(flags.layers);
    if (given("--maxt-scope") || flags.config_file.empty()) config.maxt_scope = ct::parse_maxt_scope(flags.maxt_scope);
    if (flags.seed) config.master_seed = flags.seed;
    if (config.activations.empty() || config.concepts.empty())
      return fail(kExitFlags, "--activations and --concepts are required\n" + cmd.help());
    if (!config.master_seed) return fail(kExitFlags, "--seed is required\n" + cmd.help());
    config.validate();
  } catch (const ct::Error& e) {
    return fail(kExitFlags, e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(kExitFlags, std::string("config file: ") + e.what());
  }

  ct::LoadedInputs inputs;
  try {
    inputs = ct::load_inputs(config);
  } catch (const ct::Error& e) {
    return fail(kExitInput, e.what());
  }

  ct::RunOptions options;
  options.threads = flags.threads;
  if (!flags.quiet) options.on_event = [](const std::string& line) { std::cerr << line << "\n"; };
  ct::AnalysisResult result;
  try {
    result = ct::run_analysis(inputs, config, options);
  } catch (const ct::Error& e) {
    return fail(e.kind() == ct::ErrorKind::InvalidInput ? kExitCompute : kExitInput, e.what());
  } catch (const std::exception& e) {
    return fail(kExitCompute, e.what());
  }
  try {
    ct::save_result(result, flags.out);
  } catch (const ct::Error& e) {
    return fail(kExitCompute, e.what());
  }
  if (!flags.quiet) std::cerr << "event=written path=" << flags.out << "\n";
  return 0;
}

struct ReportFlags {
  std::string results;
  std::size_t top_k = ct::kDefaultTopK;
  std::string scope = "network";
  std::string layers;
  std::optional<std::uint32_t> neuron;
  std::string concept_query;
  std::string level;
  std::string metric = "saliency";
  std::optional<double> alpha;
  bool all = false;
  std::string csv;
};

std::map<std::string, std::string> query_params(const ReportFlags& f) {
  std::map<std::string, std::string> params{{"scope", f.scope},
                                            {"metric", f.metric},
                                            {"top_k", std::to_string(f.top_k)},
                                            {"significant_only", f.all ? "false" : "true"}};
  if (!f.layers.empty()) params["layers"] = f.layers;
  if (f.neuron) params["neuron"] = std::to_string(*f.neuron);
  if (!f.concept_query.empty()) params["q"] = f.concept_query;
  if (!f.level.empty()) params["level"] = f.level;
  if (f.alpha) {
    std::ostringstream a;
    a.precision(17);
    a << *f.alpha;
    params["alpha"] = a.str();
  }
  return params;
}

int run_report(const ReportFlags& flags) {
  ct::ViewQuery query;
  try {
    query = ct::parse_view_query(query_params(flags));
  } catch (const ct::Error& e) {
    return fail(kExitFlags, e.what());
  }
  ct::AnalysisResult result;
  try {
    result = ct::load_result(flags.results);
  } catch (const ct::Error& e) {
    return fail(kExitInput, e.what());
  }
  for (const auto& warning : ct::verify_digests(result)) std::cerr << "warning: " << warning << "\n";

  ct::ParetoView view;
  try {
    view = ct::query_view(result, query);
  } catch (const ct::Error& e) {
    return fail(e.kind() == ct::ErrorKind::NotFound ? kExitInput : kExitFlags, e.what());
  }
  const auto rows = ct::report_rows(result, view);
  std::cout << "scope=" << ct::to_string(query.scope) << " metric=" << ct::to_string(query.metric)
            << " alpha=" << view.alpha << " pairs=" << view.pairs.size() << " front=" << view.front.size() << "\n";
  std::cout << ct::render_report_table(rows);
  if (!flags.csv.empty()) {
    std::ofstream out(flags.csv, std::ios::trunc);
    if (!out) return fail(kExitInput, "cannot write " + flags.csv);
    out << ct::render_report_csv(rows);
  }
  return 0;
}

struct ServeFlags {
  std::string results;
  std::optional<int> port;
  std::string host = "127.0.0.1";
  std::string static_dir;
};

int run_serve(const ServeFlags& flags) {
  int port = 8080;
  if (flags.port) {
    port = *flags.port;
  } else if (const char* env = std::getenv("CONCEPTTRACER_PORT")) {
    try {
      port = std::stoi(env);
    } catch (const std::exception&) {
      return fail(kExitFlags, std::string("CONCEPTTRACER_PORT is not a port number: ") + env);
    }
  }
  std::shared_ptr<const ct::AnalysisResult> result;
  try {
    result = std::make_shared<const ct::AnalysisResult>(ct::load_result(flags.results));
  } catch (const ct::Error& e) {
    return fail(kExitInput, e.what());
  }
  for (const auto& warning : ct::verify_digests(*result)) std::cerr << "warning: " << warning << "\n";

  httplib::Server server;
  // httplib's default sets SO_REUSEPORT, which would let a second server
  // share a port that is already taken. Keep only SO_REUSEADDR.
  server.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
  });
  ct::install_routes(server, result);
  if (!flags.static_dir.empty() && !server.set_mount_point("/", flags.static_dir))
    return fail(kExitInput, "static directory not found: " + flags.static_dir);
  if (!server.bind_to_port(flags.host, port)) return fail(kExitPort, "cannot bind " + flags.host + ":" + std::to_string(port));
  std::cerr << "event=listening host=" << flags.host << " port=" << port << "\n";
  server.listen_after_bind();
  return 0;
}

struct GenerateFlags {
  std::string out_dir;
  std::size_t samples = 2000;
  std::size_t neurons = 64;
  std::size_t concepts = 8;
  std::size_t layers = 2;
  std::vector<std::string> planted;
  double sigma = 0.25;
  double prevalence = 0.3;
  std::uint64_t seed = 0;
};

int run_generate(const GenerateFlags& flags) {
  ct::SyntheticSpec spec;
  spec.sample_count = flags.samples;
  spec.neurons_per_layer = flags.neurons;
  spec.concept_count = flags.concepts;
  spec.layer_count = flags.layers;
  spec.noise_sigma = flags.sigma;
  spec.prevalence = flags.prevalence;
  spec.seed = flags.seed;
  ct::SyntheticData data;
  try {
    for (const auto& text : flags.planted) {
      unsigned layer = 0, neuron = 0, concept_index = 0;
      char tail = 0;
      if (std::sscanf(text.c_str(), "%u:%u:%u%c", &layer, &neuron, &concept_index, &tail) != 3)
        return fail(kExitFlags, "--plant expects LAYER:NEURON:CONCEPT, got " + text);
      spec.planted.push_back({static_cast<int>(layer), neuron, concept_index});
    }
    data = ct::generate_synthetic(spec);
  } catch (const ct::Error& e) {
    return fail(kExitFlags, e.what());
  }
  try {
    const auto manifest = ct::save_activations(data.activations, flags.out_dir);
    ct::save_concepts(data.concepts, ct::fs::path(flags.out_dir) / "concepts.csv");
    nlohmann::json planted = nlohmann::json::array();
    for (const auto& p : data.planted)
      planted.push_back({{"layer", p.layer}, {"neuron", p.neuron}, {"concept", p.concept_index}});
    std::ofstream(ct::fs::path(flags.out_dir) / "planted.json") << planted.dump(2) << "\n";
    std::cerr << "event=generated manifest=" << manifest.string() << "\n";
  } catch (const ct::Error& e) {
    return fail(kExitInput, e.what());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Concept saliency and selectivity analysis of neural activations"};
  app.require_subcommand(1);
  app.set_version_flag("--version", ct::kToolVersion);

  ComputeFlags compute;
  auto* compute_cmd = app.add_subcommand("compute", "Score every neuron-concept pair and write a result file");
  compute_cmd->add_option("--config", compute.config_file, "JSON config (flags override its fields)");
  compute_cmd->add_option("--activations", compute.activations, "Activation manifest (.manifest.json)");
  compute_cmd->add_option("--concepts", compute.concepts, "Concept label CSV");
  compute_cmd->add_option("--out", compute.out, "Result file to write")->required();
  compute_cmd->add_option("--permutations", compute.permutations, "Permutation count")->capture_default_str();
  compute_cmd->add_option("--alpha", compute.alpha, "Significance level in (0,1)")->capture_default_str();
  compute_cmd->add_option("--bins", compute.bins, "Requested bin count (capped at max(2, M/5))")->capture_default_str();
  compute_cmd->add_option("--seed", compute.seed, "Master seed (required)");
  compute_cmd->add_option("--min-prevalence", compute.min_prevalence, "Drop concepts with fewer positives")
      ->capture_default_str();
  compute_cmd->add_option("--layers", compute.layers, "Comma-separated layer ids or 'all'")->capture_default_str();
  compute_cmd->add_option("--maxt-scope", compute.maxt_scope, "global | per-layer")->capture_default_str();
  compute_cmd->add_option("--threads", compute.threads, "Worker threads (0 = hardware)");
  compute_cmd->add_flag("--quiet", compute.quiet, "Suppress progress events");

  ReportFlags report;
  auto* report_cmd = app.add_subcommand("report", "Print a ranked table of pairs from a result file");
  report_cmd->add_option("--results", report.results, "Result file")->required();
  report_cmd->add_option("--top-k", report.top_k, "Rows to print")->capture_default_str();
  report_cmd->add_option("--scope", report.scope, "network | layers | neuron | concept")->capture_default_str();
  report_cmd->add_option("--layers", report.layers, "Comma-separated layer ids");
  report_cmd->add_option("--neuron", report.neuron, "Neuron id (neuron scope)");
  report_cmd->add_option("--concept", report.concept_query, "Concept name substring (concept scope)");
  report_cmd->add_option("--level", report.level, "Concept level filter");
  report_cmd->add_option("--metric", report.metric, "saliency | selectivity | combined")->capture_default_str();
  report_cmd->add_option("--alpha", report.alpha, "Override the result's significance level");
  report_cmd->add_flag("--all", report.all, "Include non-significant pairs");
  report_cmd->add_option("--csv", report.csv, "Also write the rows as CSV");

  ServeFlags serve;
  auto* serve_cmd = app.add_subcommand("serve", "Serve the JSON API (and dashboard assets) for a result file");
  serve_cmd->add_option("--results", serve.results, "Result file")->required();
  serve_cmd->add_option("--port", serve.port, "Port (falls back to CONCEPTTRACER_PORT, then 8080)");
  serve_cmd->add_option("--host", serve.host, "Bind address")->capture_default_str();
  serve_cmd->add_option("--static-dir", serve.static_dir, "Dashboard assets served at /");

  GenerateFlags generate;
  auto* generate_cmd = app.add_subcommand("generate", "Write a synthetic dataset with planted pairs");
  generate_cmd->add_option("--out-dir", generate.out_dir, "Output directory")->required();
  generate_cmd->add_option("--samples", generate.samples)->capture_default_str();
  generate_cmd->add_option("--neurons", generate.neurons, "Neurons per layer")->capture_default_str();
  generate_cmd->add_option("--concepts", generate.concepts)->capture_default_str();
  generate_cmd->add_option("--layers", generate.layers, "Layer count")->capture_default_str();
  generate_cmd->add_option("--plant", generate.planted, "LAYER:NEURON:CONCEPT (repeatable)");
  generate_cmd->add_option("--sigma", generate.sigma, "Noise on planted neurons")->capture_default_str();
  generate_cmd->add_option("--prevalence", generate.prevalence, "Concept prevalence fraction")->capture_default_str();
  generate_cmd->add_option("--seed", generate.seed)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitFlags;
  }

  if (*compute_cmd) return run_compute(compute, *compute_cmd);
  if (*report_cmd) return run_report(report);
  if (*serve_cmd) return run_serve(serve);
  if (*generate_cmd) return run_generate(generate);
  return kExitFlags;
}

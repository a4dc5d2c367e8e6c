#pragma once

// Input formats.
//
// Activations: `<name>.manifest.json` describing one raw file per layer,
//   {"schema_version": "1", "sample_count": M,
//    "layers": [{"id": 0, "name": "...", "neuron_count": N,
//                "file": "layer0.f32", "byte_length": M*N*4}, ...]}
// Each layer file holds M*N little-endian IEEE-754 float32 values, row-major
// (sample-major). `file` is resolved relative to the manifest's directory.
//
// Concepts: UTF-8 CSV, header row of concept names, one row per sample, cells
// exactly "0" or "1". A header `high:R` names concept "R" at level "high";
// recognised level prefixes are high, mid, low.

#include <openssl/evp.h>

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "types.hpp"
#include "version.hpp"

namespace concepttracer {

namespace fs = std::filesystem;

namespace detail {

inline std::string read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::MissingFile, "cannot open file", path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return std::move(buffer).str();
}

inline void write_file_bytes(const fs::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::MissingFile, "cannot create file", path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::MissingFile, "write failed", path.string());
}

inline std::uint32_t byteswap32(std::uint32_t v) noexcept {
  return (v >> 24) | ((v >> 8) & 0x0000FF00u) | ((v << 8) & 0x00FF0000u) | (v << 24);
}

inline std::vector<float> floats_from_le_bytes(std::string_view bytes) {
  std::vector<float> out(bytes.size() / 4);
  std::memcpy(out.data(), bytes.data(), out.size() * 4);
  if constexpr (std::endian::native == std::endian::big) {
    for (auto& f : out) f = std::bit_cast<float>(byteswap32(std::bit_cast<std::uint32_t>(f)));
  }
  return out;
}

inline std::string le_bytes_from_floats(std::span<const float> values) {
  std::string out(values.size() * 4, '\0');
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto bits = std::bit_cast<std::uint32_t>(values[i]);
    if constexpr (std::endian::native == std::endian::big) bits = byteswap32(bits);
    std::memcpy(out.data() + 4 * i, &bits, 4);
  }
  return out;
}

template <typename T>
T json_field(const nlohmann::json& j, const char* key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Malformed, std::string("missing or invalid field '") + key + "'", where);
  }
}

/// Splits one CSV record; double quotes delimit fields that may hold commas.
inline std::vector<std::string> split_csv_line(std::string_view line, std::size_t line_number) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        field += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else {
      field += ch;
    }
  }
  if (quoted) throw Error(ErrorKind::Malformed, "unterminated quoted field", "line " + std::to_string(line_number));
  fields.push_back(std::move(field));
  return fields;
}

inline std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char ch : field) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

}  // namespace detail

/// SHA-256 of a file's contents as 64 lowercase hex digits.
inline std::string sha256_file_hex(const fs::path& path) {
  const std::string bytes = detail::read_file_bytes(path);
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &length, EVP_sha256(), nullptr) != 1)
    throw Error(ErrorKind::InvalidInput, "digest computation failed", path.string());
  std::ostringstream hex;
  for (unsigned int i = 0; i < length; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return hex.str();
}

struct LayerEntry {
  int id = 0;
  std::string name;
  std::size_t neuron_count = 0;
  std::string file;
  std::size_t byte_length = 0;
};

struct ActivationManifest {
  std::string schema_version = kSchemaVersion;
  std::size_t sample_count = 0;
  std::vector<LayerEntry> layers;
};

inline ActivationManifest read_manifest(const fs::path& manifest_path) {
  if (!fs::exists(manifest_path)) throw Error(ErrorKind::MissingFile, "manifest not found", manifest_path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::read_file_bytes(manifest_path));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::Malformed, "manifest is not valid JSON", manifest_path.string() + ": " + e.what());
  }
  const std::string where = manifest_path.string();
  ActivationManifest manifest;
  manifest.schema_version = detail::json_field<std::string>(j, "schema_version", where);
  if (manifest.schema_version != kSchemaVersion)
    throw Error(ErrorKind::SchemaMismatch, "unsupported manifest schema version", manifest.schema_version);
  manifest.sample_count = detail::json_field<std::size_t>(j, "sample_count", where);
  const auto layers = detail::json_field<nlohmann::json>(j, "layers", where);
  if (!layers.is_array()) throw Error(ErrorKind::Malformed, "'layers' must be an array", where);
  std::set<int> ids;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string entry_where = where + ": layers[" + std::to_string(i) + "]";
    LayerEntry e;
    e.id = detail::json_field<int>(layers[i], "id", entry_where);
    e.name = layers[i].value("name", "layer " + std::to_string(e.id));
    e.neuron_count = detail::json_field<std::size_t>(layers[i], "neuron_count", entry_where);
    e.file = detail::json_field<std::string>(layers[i], "file", entry_where);
    e.byte_length = detail::json_field<std::size_t>(layers[i], "byte_length", entry_where);
    if (!ids.insert(e.id).second) throw Error(ErrorKind::DuplicateName, "duplicate layer id", std::to_string(e.id));
    manifest.layers.push_back(std::move(e));
  }
  return manifest;
}

/// Loads every layer a manifest describes and checks shapes and finiteness.
inline ActivationTensor load_activations(const fs::path& manifest_path) {
  const auto manifest = read_manifest(manifest_path);
  const fs::path base = manifest_path.parent_path();
  ActivationTensor tensor;
  tensor.sample_count = manifest.sample_count;
  for (const auto& entry : manifest.layers) {
    const std::string where = "layer " + std::to_string(entry.id);
    const std::size_t expected = manifest.sample_count * entry.neuron_count * 4;
    if (entry.byte_length != expected)
      throw Error(ErrorKind::ShapeMismatch, "byte_length disagrees with sample_count x neuron_count x 4",
                  where + ": " + std::to_string(entry.byte_length) + " vs " + std::to_string(expected));
    const fs::path file = base / entry.file;
    if (!fs::exists(file)) throw Error(ErrorKind::MissingFile, "layer file not found", file.string());
    const std::string bytes = detail::read_file_bytes(file);
    if (bytes.size() != entry.byte_length)
      throw Error(ErrorKind::ShapeMismatch, "layer file size disagrees with manifest",
                  where + ": file holds " + std::to_string(bytes.size()) + " bytes, manifest says " +
                      std::to_string(entry.byte_length));
    auto values = detail::floats_from_le_bytes(bytes);
    for (std::size_t i = 0; i < values.size(); ++i)
      if (!std::isfinite(values[i]))
        throw Error(ErrorKind::NonFinite, "non-finite activation",
                    where + ", row " + std::to_string(i / entry.neuron_count) + ", col " +
                        std::to_string(i % entry.neuron_count));
    tensor.layers.push_back(
        {entry.id, entry.name, Matrix<float>(manifest.sample_count, entry.neuron_count, std::move(values))});
  }
  return tensor;
}

/// Writes `<dir>/<stem>.manifest.json` plus `<stem>.layer<id>.f32` per layer;
/// returns the manifest path.
inline fs::path save_activations(const ActivationTensor& tensor, const fs::path& dir,
                                 const std::string& stem = "activations") {
  fs::create_directories(dir);
  nlohmann::json j;
  j["schema_version"] = kSchemaVersion;
  j["sample_count"] = tensor.sample_count;
  j["layers"] = nlohmann::json::array();
  for (const auto& layer : tensor.layers) {
    const std::string file = stem + ".layer" + std::to_string(layer.id) + ".f32";
    const std::string bytes = detail::le_bytes_from_floats(layer.values.data());
    detail::write_file_bytes(dir / file, bytes);
    j["layers"].push_back({{"id", layer.id},
                           {"name", layer.name},
                           {"neuron_count", layer.neuron_count()},
                           {"file", file},
                           {"byte_length", bytes.size()}});
  }
  const fs::path manifest = dir / (stem + ".manifest.json");
  detail::write_file_bytes(manifest, j.dump(2) + "\n");
  return manifest;
}

inline ConceptMatrix parse_concepts_csv(std::string_view text, std::size_t expected_samples,
                                        const std::string& source = "concepts.csv") {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) throw Error(ErrorKind::Malformed, "missing header row", source);

  ConceptMatrix matrix;
  auto header = detail::split_csv_line(lines[0], 1);
  if (!header.empty() && header[0].starts_with("\xEF\xBB\xBF")) header[0].erase(0, 3);
  for (std::size_t c = 0; c < header.size(); ++c) {
    ConceptVector column;
    column.name = header[c];
    if (const auto colon = column.name.find(':'); colon != std::string::npos) {
      if (const auto level = parse_level(column.name.substr(0, colon)); level && *level != ConceptLevel::Unspecified) {
        column.level = *level;
        column.name = column.name.substr(colon + 1);
      }
    }
    if (column.name.empty())
      throw Error(ErrorKind::Malformed, "empty concept name", source + ": header column " + std::to_string(c + 1));
    matrix.concepts.push_back(std::move(column));
  }

  const std::size_t rows = lines.size() - 1;
  if (rows != expected_samples)
    throw Error(ErrorKind::RowCountMismatch, "concept rows differ from the activation sample count",
                source + ": " + std::to_string(rows) + " rows, expected " + std::to_string(expected_samples));
  matrix.sample_count = rows;
  for (auto& column : matrix.concepts) column.values.resize(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto cells = detail::split_csv_line(lines[r + 1], r + 2);
    if (cells.size() != header.size())
      throw Error(ErrorKind::Malformed, "row has the wrong number of cells",
                  source + ": line " + std::to_string(r + 2) + " has " + std::to_string(cells.size()) +
                      ", header has " + std::to_string(header.size()));
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (cells[c] != "0" && cells[c] != "1")
        throw Error(ErrorKind::NonBinaryValue, "cell is not 0 or 1",
                    source + ": line " + std::to_string(r + 2) + ", column '" + matrix.concepts[c].name +
                        "', value '" + cells[c] + "'");
      matrix.concepts[c].values[r] = cells[c] == "1" ? 1 : 0;
    }
  }
  matrix.validate();
  return matrix;
}

inline ConceptMatrix load_concepts(const fs::path& csv_path, std::size_t expected_samples) {
  if (!fs::exists(csv_path)) throw Error(ErrorKind::MissingFile, "concept file not found", csv_path.string());
  return parse_concepts_csv(detail::read_file_bytes(csv_path), expected_samples, csv_path.string());
}

inline std::string concepts_to_csv(const ConceptMatrix& matrix) {
  std::string out;
  for (std::size_t c = 0; c < matrix.concept_count(); ++c) {
    const auto& col = matrix.concepts[c];
    std::string header = col.level == ConceptLevel::Unspecified ? col.name
                                                                 : std::string(to_string(col.level)) + ":" + col.name;
    out += (c ? "," : "") + detail::csv_escape(header);
  }
  out += '\n';
  for (std::size_t m = 0; m < matrix.sample_count; ++m) {
    for (std::size_t c = 0; c < matrix.concept_count(); ++c) {
      if (c) out += ',';
      out += matrix.concepts[c].values[m] ? '1' : '0';
    }
    out += '\n';
  }
  return out;
}

inline void save_concepts(const ConceptMatrix& matrix, const fs::path& csv_path) {
  detail::write_file_bytes(csv_path, concepts_to_csv(matrix));
}

struct PrevalenceFilter {
  ConceptMatrix kept;
  std::vector<std::string> dropped;
};

/// Keeps concepts whose count of positive samples is at least `min_prevalence`.
inline PrevalenceFilter filter_by_prevalence(const ConceptMatrix& matrix, std::size_t min_prevalence) {
  PrevalenceFilter out;
  out.kept.sample_count = matrix.sample_count;
  for (const auto& col : matrix.concepts) {
    if (col.prevalence() >= min_prevalence)
      out.kept.concepts.push_back(col);
    else
      out.dropped.push_back(col.name);
  }
  if (out.kept.concepts.empty())
    throw Error(ErrorKind::EmptyConceptSet, "every concept falls below the prevalence threshold",
                "min_prevalence " + std::to_string(min_prevalence) + " drops all " +
                    std::to_string(matrix.concept_count()) + " concepts; lower --min-prevalence");
  return out;
}

}  // namespace concepttracer

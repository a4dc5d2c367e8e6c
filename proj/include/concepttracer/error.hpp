#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace concepttracer {

enum class ErrorKind {
  InvalidInput,
  MissingFile,
  ShapeMismatch,
  NonFinite,
  NonBinaryValue,
  RowCountMismatch,
  DuplicateName,
  EmptyConceptSet,
  SchemaMismatch,
  DigestMismatch,
  Malformed,
  NotFound,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput: return "InvalidInput";
    case ErrorKind::MissingFile: return "MissingFile";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::NonBinaryValue: return "NonBinaryValue";
    case ErrorKind::RowCountMismatch: return "RowCountMismatch";
    case ErrorKind::DuplicateName: return "DuplicateName";
    case ErrorKind::EmptyConceptSet: return "EmptyConceptSet";
    case ErrorKind::SchemaMismatch: return "SchemaMismatch";
    case ErrorKind::DigestMismatch: return "DigestMismatch";
    case ErrorKind::Malformed: return "Malformed";
    case ErrorKind::NotFound: return "NotFound";
  }
  return "Unknown";
}

// Every failure surfaced by the library carries a kind plus a free-form
// location detail (file, layer/row/col, query parameter, ...).
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string message, std::string detail = {})
      : std::runtime_error(std::string(to_string(kind)) + ": " + message +
                           (detail.empty() ? "" : " (" + detail + ")")),
        kind_(kind),
        message_(std::move(message)),
        detail_(std::move(detail)) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& message() const noexcept { return message_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::string message_;
  std::string detail_;
};

}  // namespace concepttracer

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"

namespace concepttracer {

/// Dense row-major matrix.
template <typename T>
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_)
      throw Error(ErrorKind::ShapeMismatch, "matrix storage does not match its shape");
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

  std::vector<T> column(std::size_t c) const {
    std::vector<T> out(rows_);
    for (std::size_t r = 0; r < rows_; ++r) out[r] = data_[r * cols_ + c];
    return out;
  }

  std::span<const T> data() const noexcept { return data_; }
  std::span<T> data() noexcept { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

enum class ConceptLevel { Unspecified, High, Mid, Low };

constexpr std::string_view to_string(ConceptLevel level) {
  switch (level) {
    case ConceptLevel::High: return "high";
    case ConceptLevel::Mid: return "mid";
    case ConceptLevel::Low: return "low";
    case ConceptLevel::Unspecified: break;
  }
  return "unspecified";
}

inline std::optional<ConceptLevel> parse_level(std::string_view text) {
  if (text == "high") return ConceptLevel::High;
  if (text == "mid") return ConceptLevel::Mid;
  if (text == "low") return ConceptLevel::Low;
  if (text == "unspecified") return ConceptLevel::Unspecified;
  return std::nullopt;
}

/// Binary labels of one concept over the M samples.
struct ConceptVector {
  std::vector<std::uint8_t> values;
  std::string name;
  ConceptLevel level = ConceptLevel::Unspecified;

  std::size_t prevalence() const noexcept {
    std::size_t n = 0;
    for (auto v : values) n += v;
    return n;
  }

  bool operator==(const ConceptVector&) const = default;
};

/// M x C binary concept labels, stored column-wise.
struct ConceptMatrix {
  std::size_t sample_count = 0;
  std::vector<ConceptVector> concepts;

  std::size_t concept_count() const noexcept { return concepts.size(); }

  /// Checks binarity, column lengths and name uniqueness.
  void validate() const {
    for (std::size_t c = 0; c < concepts.size(); ++c) {
      const auto& col = concepts[c];
      if (col.values.size() != sample_count)
        throw Error(ErrorKind::RowCountMismatch, "concept column length differs from sample count",
                    "concept '" + col.name + "'");
      for (std::size_t m = 0; m < col.values.size(); ++m)
        if (col.values[m] > 1)
          throw Error(ErrorKind::NonBinaryValue, "concept value is not 0/1",
                      "concept '" + col.name + "', row " + std::to_string(m));
      for (std::size_t other = 0; other < c; ++other)
        if (concepts[other].name == col.name)
          throw Error(ErrorKind::DuplicateName, "duplicate concept name", col.name);
    }
  }

  bool operator==(const ConceptMatrix&) const = default;
};

/// One layer of activations: M samples x N neurons.
struct ActivationLayer {
  int id = 0;
  std::string name;
  Matrix<float> values;

  std::size_t neuron_count() const noexcept { return values.cols(); }

  bool operator==(const ActivationLayer&) const = default;
};

/// Per-layer activations sharing one sample axis.
struct ActivationTensor {
  std::size_t sample_count = 0;
  std::vector<ActivationLayer> layers;

  std::size_t total_neurons() const noexcept {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.neuron_count();
    return n;
  }

  const ActivationLayer* find_layer(int id) const noexcept {
    for (const auto& l : layers)
      if (l.id == id) return &l;
    return nullptr;
  }

  bool operator==(const ActivationTensor&) const = default;
};

}  // namespace concepttracer

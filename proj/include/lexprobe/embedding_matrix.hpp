#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lexprobe/numerics.hpp"
#include "lexprobe/vocabulary.hpp"

namespace lexprobe {

inline constexpr std::string_view kMatrixMagic = "LXTM";
inline constexpr std::uint32_t kMatrixFormatVersion = 1;

struct MatrixProvenance {
  std::string config_id;
  std::string model_id;
  // Cache key and anything else worth carrying along.
  nlohmann::json extra = nlohmann::json::object();

  bool operator==(const MatrixProvenance&) const = default;
};

// Static V x d word-vector matrix; row i belongs to vocabulary()[i].
class TypeEmbeddingMatrix {
 public:
  TypeEmbeddingMatrix() = default;
  TypeEmbeddingMatrix(Vocabulary vocabulary, std::size_t dim, std::vector<float> data,
                      MatrixProvenance provenance = {},
                      std::vector<std::uint8_t> backed_off = {});

  const Vocabulary& vocabulary() const noexcept { return vocabulary_; }
  std::size_t rows() const noexcept { return vocabulary_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  const std::vector<float>& data() const noexcept { return data_; }
  const MatrixProvenance& provenance() const noexcept { return provenance_; }
  MatrixProvenance& provenance() noexcept { return provenance_; }

  // One flag per row: 1 when the row came from the isolated-word back-off.
  const std::vector<std::uint8_t>& backed_off() const noexcept { return backed_off_; }
  std::size_t backed_off_count() const;

  std::span<const float> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }
  std::span<float> row(std::size_t i) { return {data_.data() + i * dim_, dim_}; }

  // Row for a word, or an empty span when out of vocabulary.
  std::span<const float> find(std::string_view word) const;

  // Copy into a double-precision Eigen matrix.
  Matrix to_eigen() const;

  // Bitwise equality of vocabulary, shape and data.
  bool same_values(const TypeEmbeddingMatrix& other) const;

 private:
  Vocabulary vocabulary_;
  std::size_t dim_ = 0;
  std::vector<float> data_;
  MatrixProvenance provenance_;
  std::vector<std::uint8_t> backed_off_;
};

// "V d" header line, then "word v1 ... vd" per row. Values use the shortest
// representation that round-trips to the same float.
void save_text(const TypeEmbeddingMatrix& m, const std::filesystem::path& path);
TypeEmbeddingMatrix load_text(const std::filesystem::path& path);

// "LXTM", u32 version, u64 JSON length, JSON (provenance, vocabulary,
// backed_off), then rows x dim f32 little-endian, row-major.
void save_binary(const TypeEmbeddingMatrix& m, const std::filesystem::path& path);
TypeEmbeddingMatrix load_binary(const std::filesystem::path& path);

// Picks the binary reader for LXTM files and the text reader otherwise.
TypeEmbeddingMatrix load_matrix(const std::filesystem::path& path);

}  // namespace lexprobe

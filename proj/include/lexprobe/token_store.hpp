#pragma once

// Binary store of layer-wise contextual token embeddings.
//
// Layout (all integers little-endian):
//   bytes 0-3    magic "LXTS"
//   bytes 4-7    format_version (u32)
//   bytes 8-15   header_json_length (u64)
//   UTF-8 JSON header: model_id, source_kind, num_layers, dim, export_seed,
//                      index = [{word, offset, count}, ...]
//   payload: records grouped by word. Each record is
//     u32 token_count, token_count flag bytes (0=CONTENT, 1=CLS, 2=SEP),
//     num_layers * token_count * dim f32 values, layer-major.
//
// Index offsets are relative to the first payload byte, i.e. to
// 16 + header_json_length.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

namespace lexprobe {

inline constexpr std::string_view kStoreMagic = "LXTS";
inline constexpr std::uint32_t kStoreFormatVersion = 1;

enum class SourceKind { kMono, kMulti };

const char* to_string(SourceKind kind);
SourceKind parse_source_kind(std::string_view s);

enum class TokenFlag : std::uint8_t { kContent = 0, kCls = 1, kSep = 2 };

struct IndexEntry {
  std::string word;
  std::uint64_t offset = 0;
  std::uint64_t count = 0;

  bool operator==(const IndexEntry&) const = default;
};

struct StoreHeader {
  std::uint32_t format_version = kStoreFormatVersion;
  std::string model_id;
  SourceKind source_kind = SourceKind::kMono;
  std::size_t num_layers = 0;  // includes the embedding layer L0
  std::size_t dim = 0;
  std::optional<std::uint64_t> export_seed;
  // Free-form extractor notes (input formatting, sampling scheme, ...).
  nlohmann::json extractor = nlohmann::json::object();
  // Filled in by the writer; ignored when passed to it.
  std::vector<IndexEntry> index;

  bool operator==(const StoreHeader&) const = default;
};

struct OccurrenceRecord {
  std::string word;
  std::vector<TokenFlag> flags;
  std::size_t num_layers = 0;
  std::size_t dim = 0;
  // [num_layers][token_count][dim], layer-major.
  std::vector<float> vectors;

  std::size_t token_count() const noexcept { return flags.size(); }
  std::size_t subword_count() const noexcept;

  std::span<const float> token_vector(std::size_t layer, std::size_t token) const {
    return {vectors.data() + (layer * token_count() + token) * dim, dim};
  }
  std::span<float> token_vector(std::size_t layer, std::size_t token) {
    return {vectors.data() + (layer * token_count() + token) * dim, dim};
  }

  bool operator==(const OccurrenceRecord&) const = default;
};

// Checks flag counts (>= 1 CONTENT, <= 1 CLS, <= 1 SEP), the vector size and
// finiteness. Throws with the word named in the message.
void validate_record(const OccurrenceRecord& record);

// Bytes a record occupies in the payload.
std::uint64_t record_byte_size(std::size_t token_count, std::size_t num_layers,
                               std::size_t dim);

// Streams records into a store file. Records of one word must arrive
// contiguously. The payload is spooled to "<path>.payload.tmp" until
// finish() writes the final file; the spool is removed on destruction.
class StoreWriter {
 public:
  StoreWriter(std::filesystem::path path, StoreHeader header);
  ~StoreWriter();

  StoreWriter(const StoreWriter&) = delete;
  StoreWriter& operator=(const StoreWriter&) = delete;

  void add(const OccurrenceRecord& record);

  // Writes the store and returns the header as written (index included).
  StoreHeader finish();

 private:
  std::filesystem::path path_;
  std::filesystem::path spool_path_;
  StoreHeader header_;
  std::ofstream spool_;
  std::uint64_t payload_bytes_ = 0;
  std::unordered_set<std::string> closed_words_;
  bool finished_ = false;
};

StoreHeader write_store(const StoreHeader& header,
                        std::span<const OccurrenceRecord> records,
                        const std::filesystem::path& path);

class MappedFile;

// Read-only handle over a memory-mapped store. Immutable after open, so
// concurrent reads are safe.
class TokenStore {
 public:
  static std::shared_ptr<const TokenStore> open(const std::filesystem::path& path);

  ~TokenStore();
  TokenStore(const TokenStore&) = delete;
  TokenStore& operator=(const TokenStore&) = delete;

  const StoreHeader& header() const noexcept { return header_; }
  const std::filesystem::path& path() const noexcept { return path_; }
  std::size_t num_layers() const noexcept { return header_.num_layers; }
  std::size_t dim() const noexcept { return header_.dim; }
  std::size_t word_count() const noexcept { return header_.index.size(); }

  bool contains(std::string_view word) const;
  // Zero when the word is not indexed.
  std::uint64_t occurrence_count(std::string_view word) const;

  // First min(limit, available) records in stored order; no limit = ALL.
  // Throws kNotFound for unknown words.
  std::vector<OccurrenceRecord> read_occurrences(
      std::string_view word, std::optional<std::size_t> limit = std::nullopt) const;

  // Raw file bytes, used for content hashing.
  std::span<const unsigned char> bytes() const noexcept;

 private:
  TokenStore() = default;
  const IndexEntry* lookup(std::string_view word) const;
  std::uint64_t span_end(std::size_t entry_position) const;

  std::filesystem::path path_;
  std::unique_ptr<MappedFile> file_;
  StoreHeader header_;
  std::uint64_t payload_offset_ = 0;
  std::unordered_map<std::string, std::size_t> lookup_;
};

using StoreHandle = std::shared_ptr<const TokenStore>;

inline StoreHandle open_store(const std::filesystem::path& path) {
  return TokenStore::open(path);
}

}  // namespace lexprobe

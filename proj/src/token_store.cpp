#include "lexprobe/token_store.hpp"

#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <fstream>

#include "lexprobe/binary_io.hpp"
#include "lexprobe/error.hpp"
#include "lexprobe/text.hpp"

namespace lexprobe {

using nlohmann::json;

const char* to_string(SourceKind kind) {
  return kind == SourceKind::kMono ? "MONO" : "MULTI";
}

SourceKind parse_source_kind(std::string_view s) {
  const std::string lowered = text::lowercase(s);
  if (lowered == "mono") return SourceKind::kMono;
  if (lowered == "multi") return SourceKind::kMulti;
  fail(ErrorKind::kParse, "unknown source kind: " + std::string(s));
}

std::size_t OccurrenceRecord::subword_count() const noexcept {
  return static_cast<std::size_t>(
      std::count(flags.begin(), flags.end(), TokenFlag::kContent));
}

void validate_record(const OccurrenceRecord& record) {
  const std::string who = "record for word '" + record.word + "'";
  if (record.word.empty()) fail(ErrorKind::kInvalidArgument, "record with empty word");
  std::size_t cls = 0;
  std::size_t sep = 0;
  std::size_t content = 0;
  for (TokenFlag f : record.flags) {
    switch (f) {
      case TokenFlag::kContent: ++content; break;
      case TokenFlag::kCls: ++cls; break;
      case TokenFlag::kSep: ++sep; break;
      default: fail(ErrorKind::kInvalidArgument, who + ": unknown token flag");
    }
  }
  if (content == 0) fail(ErrorKind::kInvalidArgument, who + ": no CONTENT tokens");
  if (cls > 1 || sep > 1) {
    fail(ErrorKind::kInvalidArgument, who + ": more than one CLS or SEP token");
  }
  if (record.vectors.size() != record.num_layers * record.token_count() * record.dim) {
    fail(ErrorKind::kDimensionMismatch,
         who + ": vector payload does not match num_layers x tokens x dim");
  }
  for (float v : record.vectors) {
    if (!std::isfinite(v)) fail(ErrorKind::kNumeric, who + ": non-finite value");
  }
}

std::uint64_t record_byte_size(std::size_t token_count, std::size_t num_layers,
                               std::size_t dim) {
  return 4 + token_count +
         std::uint64_t{num_layers} * token_count * dim * sizeof(float);
}

namespace {

json header_to_json(const StoreHeader& h) {
  json j;
  j["model_id"] = h.model_id;
  j["source_kind"] = to_string(h.source_kind);
  j["num_layers"] = h.num_layers;
  j["dim"] = h.dim;
  j["export_seed"] = h.export_seed ? json(*h.export_seed) : json(nullptr);
  j["extractor"] = h.extractor;
  json index = json::array();
  for (const auto& e : h.index) {
    index.push_back({{"word", e.word}, {"offset", e.offset}, {"count", e.count}});
  }
  j["index"] = std::move(index);
  return j;
}

StoreHeader header_from_json(const json& j, std::uint32_t version) {
  StoreHeader h;
  h.format_version = version;
  try {
    h.model_id = j.at("model_id").get<std::string>();
    h.source_kind = parse_source_kind(j.at("source_kind").get<std::string>());
    h.num_layers = j.at("num_layers").get<std::size_t>();
    h.dim = j.at("dim").get<std::size_t>();
    if (j.contains("export_seed") && !j["export_seed"].is_null()) {
      h.export_seed = j["export_seed"].get<std::uint64_t>();
    }
    if (j.contains("extractor")) h.extractor = j["extractor"];
    for (const auto& e : j.at("index")) {
      h.index.push_back({e.at("word").get<std::string>(),
                         e.at("offset").get<std::uint64_t>(),
                         e.at("count").get<std::uint64_t>()});
    }
  } catch (const json::exception& ex) {
    fail(ErrorKind::kFormat, std::string("malformed store header: ") + ex.what());
  }
  return h;
}

}  // namespace

// --- writer -----------------------------------------------------------------

StoreWriter::StoreWriter(std::filesystem::path path, StoreHeader header)
    : path_(std::move(path)), header_(std::move(header)) {
  if (header_.num_layers < 1 || header_.dim < 1) {
    fail(ErrorKind::kInvalidArgument, "store header needs num_layers >= 1 and dim >= 1");
  }
  header_.format_version = kStoreFormatVersion;
  header_.index.clear();
  spool_path_ = path_;
  spool_path_ += ".payload.tmp";
  spool_.open(spool_path_, std::ios::binary | std::ios::trunc);
  if (!spool_) fail(ErrorKind::kIo, "cannot write store spool: " + spool_path_.string());
}

StoreWriter::~StoreWriter() {
  if (spool_.is_open()) spool_.close();
  std::error_code ec;
  std::filesystem::remove(spool_path_, ec);
}

void StoreWriter::add(const OccurrenceRecord& record) {
  if (finished_) fail(ErrorKind::kInvalidArgument, "store writer already finished");
  if (record.dim != header_.dim || record.num_layers != header_.num_layers) {
    fail(ErrorKind::kDimensionMismatch,
         "record for word '" + record.word + "' has " +
             std::to_string(record.num_layers) + " layers x dim " +
             std::to_string(record.dim) + ", store expects " +
             std::to_string(header_.num_layers) + " x " + std::to_string(header_.dim));
  }
  validate_record(record);
  const std::string word = text::lowercase(record.word);
  if (header_.index.empty() || header_.index.back().word != word) {
    if (!header_.index.empty()) closed_words_.insert(header_.index.back().word);
    if (closed_words_.contains(word)) {
      fail(ErrorKind::kDuplicate,
           "records for word '" + word + "' are not contiguous (duplicate group)");
    }
    header_.index.push_back({word, payload_bytes_, 0});
  }
  io::write_le<std::uint32_t>(spool_, static_cast<std::uint32_t>(record.token_count()));
  spool_.write(reinterpret_cast<const char*>(record.flags.data()),
               static_cast<std::streamsize>(record.flags.size()));
  io::write_f32_le(spool_, record.vectors);
  if (!spool_) fail(ErrorKind::kIo, "write failed: " + spool_path_.string());
  payload_bytes_ += record_byte_size(record.token_count(), record.num_layers, record.dim);
  ++header_.index.back().count;
}

StoreHeader StoreWriter::finish() {
  if (finished_) fail(ErrorKind::kInvalidArgument, "store writer already finished");
  finished_ = true;
  spool_.close();
  if (!spool_) fail(ErrorKind::kIo, "write failed: " + spool_path_.string());

  std::ofstream out(path_, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot write store: " + path_.string());
  io::write_preamble(out, kStoreMagic, kStoreFormatVersion, header_to_json(header_).dump());
  std::ifstream payload(spool_path_, std::ios::binary);
  if (payload_bytes_ > 0) out << payload.rdbuf();
  if (!out) fail(ErrorKind::kIo, "write failed: " + path_.string());
  return header_;
}

StoreHeader write_store(const StoreHeader& header,
                        std::span<const OccurrenceRecord> records,
                        const std::filesystem::path& path) {
  StoreWriter writer(path, header);
  for (const auto& r : records) writer.add(r);
  return writer.finish();
}

// --- reader -----------------------------------------------------------------

class MappedFile {
 public:
  explicit MappedFile(const std::filesystem::path& path) {
    const int fd = ::open(path.c_str(), O_RDONLY | O_CLOEXEC);
    if (fd < 0) {
      fail(ErrorKind::kIo, "cannot open store " + path.string() + ": " + std::strerror(errno));
    }
    struct stat st {};
    if (::fstat(fd, &st) != 0) {
      ::close(fd);
      fail(ErrorKind::kIo, "cannot stat store " + path.string());
    }
    size_ = static_cast<std::size_t>(st.st_size);
    if (size_ > 0) {
      void* p = ::mmap(nullptr, size_, PROT_READ, MAP_PRIVATE, fd, 0);
      if (p == MAP_FAILED) {
        ::close(fd);
        fail(ErrorKind::kIo, "cannot map store " + path.string());
      }
      data_ = static_cast<const unsigned char*>(p);
    }
    ::close(fd);
  }

  ~MappedFile() {
    if (data_ != nullptr) ::munmap(const_cast<unsigned char*>(data_), size_);
  }

  MappedFile(const MappedFile&) = delete;
  MappedFile& operator=(const MappedFile&) = delete;

  std::span<const unsigned char> bytes() const noexcept { return {data_, size_}; }

 private:
  const unsigned char* data_ = nullptr;
  std::size_t size_ = 0;
};

TokenStore::~TokenStore() = default;

std::span<const unsigned char> TokenStore::bytes() const noexcept {
  return file_->bytes();
}

std::shared_ptr<const TokenStore> TokenStore::open(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    fail(ErrorKind::kIo, "store does not exist: " + path.string());
  }
  std::shared_ptr<TokenStore> store(new TokenStore());
  store->path_ = path;
  store->file_ = std::make_unique<MappedFile>(path);
  const auto bytes = store->file_->bytes();
  const std::string what = "store " + path.string();

  if (bytes.size() < 16 ||
      std::string_view(reinterpret_cast<const char*>(bytes.data()), 4) != kStoreMagic) {
    fail(ErrorKind::kFormat, what + ": bad magic");
  }
  const auto version = io::load_le<std::uint32_t>(bytes.data() + 4);
  if (version == 0 || version > kStoreFormatVersion) {
    fail(ErrorKind::kFormat, what + ": unsupported format version " + std::to_string(version));
  }
  const auto json_length = io::load_le<std::uint64_t>(bytes.data() + 8);
  if (json_length > bytes.size() - 16) fail(ErrorKind::kCorruption, what + ": truncated header");
  json j;
  try {
    j = json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(json_length));
  } catch (const json::exception& ex) {
    fail(ErrorKind::kFormat, what + ": header is not valid JSON: " + ex.what());
  }
  store->header_ = header_from_json(j, version);
  store->payload_offset_ = 16 + json_length;

  const auto& h = store->header_;
  if (h.num_layers < 1 || h.dim < 1) fail(ErrorKind::kFormat, what + ": num_layers and dim must be >= 1");
  const std::uint64_t payload_size = bytes.size() - store->payload_offset_;
  store->lookup_.reserve(h.index.size());
  for (std::size_t i = 0; i < h.index.size(); ++i) {
    const auto& e = h.index[i];
    if (e.count < 1) fail(ErrorKind::kFormat, what + ": word '" + e.word + "' has no occurrences");
    if (i > 0 && e.offset <= h.index[i - 1].offset) {
      fail(ErrorKind::kCorruption, what + ": index offsets not strictly increasing");
    }
    if (e.offset >= payload_size) {
      fail(ErrorKind::kCorruption, what + ": index offset of '" + e.word + "' beyond end of file");
    }
    if (!store->lookup_.emplace(e.word, i).second) {
      fail(ErrorKind::kFormat, what + ": duplicate index entry '" + e.word + "'");
    }
  }
  if (!h.index.empty() && h.index.front().offset != 0) {
    fail(ErrorKind::kCorruption, what + ": payload does not start at the first index entry");
  }
  // Walking the last word's records pins the exact payload length; each
  // word's span is checked against its successor when it is read.
  const std::uint64_t expected_end = h.index.empty() ? 0 : store->span_end(h.index.size() - 1);
  if (expected_end != payload_size) {
    fail(ErrorKind::kCorruption, what + ": payload length " + std::to_string(payload_size) +
                                     " does not match index (" + std::to_string(expected_end) + ")");
  }
  return store;
}

std::uint64_t TokenStore::span_end(std::size_t entry_position) const {
  const auto& e = header_.index[entry_position];
  const auto bytes = file_->bytes();
  const std::uint64_t payload_size = bytes.size() - payload_offset_;
  std::uint64_t pos = e.offset;
  for (std::uint64_t r = 0; r < e.count; ++r) {
    if (pos + 4 > payload_size) {
      fail(ErrorKind::kCorruption, "store " + path_.string() + ": truncated record for '" + e.word + "'");
    }
    const auto tokens = io::load_le<std::uint32_t>(bytes.data() + payload_offset_ + pos);
    pos += record_byte_size(tokens, header_.num_layers, header_.dim);
  }
  return pos;
}

const IndexEntry* TokenStore::lookup(std::string_view word) const {
  auto it = lookup_.find(text::lowercase(word));
  if (it == lookup_.end()) return nullptr;
  return &header_.index[it->second];
}

bool TokenStore::contains(std::string_view word) const { return lookup(word) != nullptr; }

std::uint64_t TokenStore::occurrence_count(std::string_view word) const {
  const IndexEntry* e = lookup(word);
  return e == nullptr ? 0 : e->count;
}

std::vector<OccurrenceRecord> TokenStore::read_occurrences(
    std::string_view word, std::optional<std::size_t> limit) const {
  const IndexEntry* e = lookup(word);
  if (e == nullptr) {
    fail(ErrorKind::kNotFound, "word '" + std::string(word) + "' not in store " + path_.string());
  }
  const std::size_t position = static_cast<std::size_t>(e - header_.index.data());
  const auto bytes = file_->bytes();
  const std::uint64_t span_limit = position + 1 < header_.index.size()
                                       ? header_.index[position + 1].offset
                                       : bytes.size() - payload_offset_;
  const std::uint64_t n = limit ? std::min<std::uint64_t>(*limit, e->count) : e->count;
  const auto corrupt = [&](const std::string& msg) {
    fail(ErrorKind::kCorruption, "store " + path_.string() + ", word '" + e->word + "': " + msg);
  };

  std::vector<OccurrenceRecord> out;
  out.reserve(n);
  std::uint64_t pos = e->offset;
  for (std::uint64_t r = 0; r < n; ++r) {
    if (pos + 4 > span_limit) corrupt("record header overruns its span");
    const auto tokens = io::load_le<std::uint32_t>(bytes.data() + payload_offset_ + pos);
    const std::uint64_t size = record_byte_size(tokens, header_.num_layers, header_.dim);
    if (pos + size > span_limit) corrupt("record payload overruns its span");
    OccurrenceRecord rec;
    rec.word = e->word;
    rec.num_layers = header_.num_layers;
    rec.dim = header_.dim;
    rec.flags.resize(tokens);
    const unsigned char* p = bytes.data() + payload_offset_ + pos + 4;
    for (std::uint32_t t = 0; t < tokens; ++t) {
      if (p[t] > 2) corrupt("unknown token flag");
      rec.flags[t] = static_cast<TokenFlag>(p[t]);
    }
    p += tokens;
    rec.vectors.resize(std::size_t{header_.num_layers} * tokens * header_.dim);
    std::memcpy(rec.vectors.data(), p, rec.vectors.size() * sizeof(float));
    if constexpr (std::endian::native != std::endian::little) {
      for (float& v : rec.vectors) v = io::byteswap(v);
    }
    out.push_back(std::move(rec));
    pos += size;
  }
  return out;
}

}  // namespace lexprobe

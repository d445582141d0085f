#include "lexprobe/binary_io.hpp"

#include <array>

namespace lexprobe {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kIo: return "io";
    case ErrorKind::kFormat: return "format";
    case ErrorKind::kCorruption: return "corruption";
    case ErrorKind::kNotFound: return "not_found";
    case ErrorKind::kDimensionMismatch: return "dimension_mismatch";
    case ErrorKind::kDuplicate: return "duplicate";
    case ErrorKind::kOutOfRange: return "out_of_range";
    case ErrorKind::kInvalidArgument: return "invalid_argument";
    case ErrorKind::kEmptySelection: return "empty_selection";
    case ErrorKind::kInsufficientData: return "insufficient_data";
    case ErrorKind::kNumeric: return "numeric";
    case ErrorKind::kParse: return "parse";
  }
  return "unknown";
}

namespace io {

void write_preamble(std::ostream& out, std::string_view magic,
                    std::uint32_t version, const std::string& json_header) {
  out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
  write_le<std::uint32_t>(out, version);
  write_le<std::uint64_t>(out, json_header.size());
  out.write(json_header.data(), static_cast<std::streamsize>(json_header.size()));
}

Preamble read_preamble(std::istream& in, std::string_view magic,
                       const std::string& what) {
  std::array<char, 4> got{};
  in.read(got.data(), got.size());
  if (!in || std::string_view(got.data(), got.size()) != magic) {
    fail(ErrorKind::kFormat, what + ": bad magic, expected \"" +
                                 std::string(magic) + "\"");
  }
  Preamble p;
  p.version = read_le<std::uint32_t>(in);
  const auto json_length = read_le<std::uint64_t>(in);
  if (json_length > (std::uint64_t{1} << 34)) {
    fail(ErrorKind::kCorruption, what + ": implausible header length");
  }
  p.json_header.resize(json_length);
  in.read(p.json_header.data(), static_cast<std::streamsize>(json_length));
  if (!in) fail(ErrorKind::kCorruption, what + ": truncated header");
  p.payload_offset = 16 + json_length;
  return p;
}

}  // namespace io
}  // namespace lexprobe

#include "lexprobe/embedding_matrix.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>

#include "lexprobe/binary_io.hpp"
#include "lexprobe/error.hpp"
#include "lexprobe/text.hpp"

namespace lexprobe {

using nlohmann::json;

TypeEmbeddingMatrix::TypeEmbeddingMatrix(Vocabulary vocabulary, std::size_t dim,
                                         std::vector<float> data, MatrixProvenance provenance,
                                         std::vector<std::uint8_t> backed_off)
    : vocabulary_(std::move(vocabulary)),
      dim_(dim),
      data_(std::move(data)),
      provenance_(std::move(provenance)),
      backed_off_(std::move(backed_off)) {
  if (data_.size() != vocabulary_.size() * dim_) {
    fail(ErrorKind::kDimensionMismatch, "matrix data does not match |V| x d");
  }
  if (backed_off_.empty()) backed_off_.assign(vocabulary_.size(), 0);
  if (backed_off_.size() != vocabulary_.size()) {
    fail(ErrorKind::kDimensionMismatch, "back-off flags do not match |V|");
  }
  for (float v : data_) {
    if (!std::isfinite(v)) fail(ErrorKind::kNumeric, "matrix contains a non-finite entry");
  }
}

std::size_t TypeEmbeddingMatrix::backed_off_count() const {
  std::size_t n = 0;
  for (auto f : backed_off_) n += f != 0;
  return n;
}

std::span<const float> TypeEmbeddingMatrix::find(std::string_view word) const {
  const auto i = vocabulary_.find(word);
  if (!i) return {};
  return row(*i);
}

Matrix TypeEmbeddingMatrix::to_eigen() const {
  Matrix m(static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(dim_));
  for (std::size_t i = 0; i < data_.size(); ++i) m.data()[i] = data_[i];
  return m;
}

bool TypeEmbeddingMatrix::same_values(const TypeEmbeddingMatrix& other) const {
  return vocabulary_ == other.vocabulary_ && dim_ == other.dim_ &&
         data_.size() == other.data_.size() &&
         std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(float)) == 0;
}

void save_text(const TypeEmbeddingMatrix& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot write matrix: " + path.string());
  out << m.rows() << ' ' << m.dim() << '\n';
  std::array<char, 64> buf{};
  for (std::size_t i = 0; i < m.rows(); ++i) {
    out << m.vocabulary()[i];
    for (float v : m.row(i)) {
      auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
      out << ' ';
      out.write(buf.data(), end - buf.data());
    }
    out << '\n';
  }
  if (!out) fail(ErrorKind::kIo, "write failed: " + path.string());
}

TypeEmbeddingMatrix load_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open matrix: " + path.string());
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::kFormat, path.string() + ": empty file");
  const auto head = text::split_whitespace(line);
  std::size_t rows = 0;
  std::size_t dim = 0;
  if (head.size() != 2 ||
      std::from_chars(head[0].data(), head[0].data() + head[0].size(), rows).ec != std::errc{} ||
      std::from_chars(head[1].data(), head[1].data() + head[1].size(), dim).ec != std::errc{}) {
    fail(ErrorKind::kFormat, path.string() + ": first line must be \"V d\"");
  }
  std::vector<std::string> words;
  std::vector<float> data;
  words.reserve(rows);
  data.reserve(rows * dim);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto fields = text::split_whitespace(line);
    if (fields.empty()) continue;
    if (fields.size() != dim + 1) {
      fail(ErrorKind::kFormat, path.string() + ":" + std::to_string(line_no) + ": expected " +
                                   std::to_string(dim) + " values");
    }
    words.emplace_back(fields[0]);
    for (std::size_t k = 1; k <= dim; ++k) {
      float v = 0.0f;
      const auto f = fields[k];
      if (std::from_chars(f.data(), f.data() + f.size(), v).ec != std::errc{}) {
        fail(ErrorKind::kFormat, path.string() + ":" + std::to_string(line_no) + ": bad number");
      }
      data.push_back(v);
    }
  }
  if (words.size() != rows) {
    fail(ErrorKind::kFormat, path.string() + ": header announces " + std::to_string(rows) +
                                 " rows, found " + std::to_string(words.size()));
  }
  return TypeEmbeddingMatrix(Vocabulary(std::move(words)), dim, std::move(data));
}

void save_binary(const TypeEmbeddingMatrix& m, const std::filesystem::path& path) {
  json header;
  header["provenance"] = {{"config_id", m.provenance().config_id},
                          {"model_id", m.provenance().model_id},
                          {"extra", m.provenance().extra}};
  header["rows"] = m.rows();
  header["dim"] = m.dim();
  header["vocabulary"] = m.vocabulary().words();
  header["backed_off"] = m.backed_off();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot write matrix: " + path.string());
  io::write_preamble(out, kMatrixMagic, kMatrixFormatVersion, header.dump());
  io::write_f32_le(out, m.data());
  if (!out) fail(ErrorKind::kIo, "write failed: " + path.string());
}

TypeEmbeddingMatrix load_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open matrix: " + path.string());
  const auto pre = io::read_preamble(in, kMatrixMagic, "matrix " + path.string());
  if (pre.version == 0 || pre.version > kMatrixFormatVersion) {
    fail(ErrorKind::kFormat, path.string() + ": unsupported matrix version");
  }
  try {
    const json header = json::parse(pre.json_header);
    MatrixProvenance prov;
    prov.config_id = header.at("provenance").at("config_id").get<std::string>();
    prov.model_id = header.at("provenance").at("model_id").get<std::string>();
    prov.extra = header.at("provenance").value("extra", json::object());
    const auto rows = header.at("rows").get<std::size_t>();
    const auto dim = header.at("dim").get<std::size_t>();
    auto words = header.at("vocabulary").get<std::vector<std::string>>();
    auto backed_off = header.value("backed_off", std::vector<std::uint8_t>{});
    if (words.size() != rows) fail(ErrorKind::kCorruption, path.string() + ": vocabulary size mismatch");
    std::vector<float> data(rows * dim);
    io::read_f32_le(in, data);
    return TypeEmbeddingMatrix(Vocabulary(std::move(words)), dim, std::move(data),
                               std::move(prov), std::move(backed_off));
  } catch (const json::exception& ex) {
    fail(ErrorKind::kFormat, path.string() + ": malformed matrix header: " + ex.what());
  }
}

TypeEmbeddingMatrix load_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open matrix: " + path.string());
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (in && std::string_view(magic.data(), magic.size()) == kMatrixMagic) return load_binary(path);
  return load_text(path);
}

}  // namespace lexprobe

#include "lexprobe/cka_analysis.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "lexprobe/config_id.hpp"
#include "lexprobe/error.hpp"
#include "lexprobe/parallel.hpp"
#include "lexprobe/random.hpp"
#include "lexprobe/text.hpp"

namespace lexprobe {

using nlohmann::json;

const char* to_string(Pairing pairing) {
  switch (pairing) {
    case Pairing::kSelf: return "self";
    case Pairing::kTranslation: return "translation";
    case Pairing::kRandom: return "random";
  }
  return "?";
}

Pairing parse_pairing(std::string_view s) {
  if (s == "self") return Pairing::kSelf;
  if (s == "translation") return Pairing::kTranslation;
  if (s == "random") return Pairing::kRandom;
  fail(ErrorKind::kParse, "unknown pairing \"" + std::string(s) + "\"");
}

json CkaResult::to_json() const {
  json j;
  j["pairing"] = to_string(pairing);
  j["axis_a"] = axis_a;
  j["axis_b"] = axis_b;
  json rows = json::array();
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    std::vector<double> row(scores.row(r).begin(), scores.row(r).end());
    rows.push_back(row);
  }
  j["scores"] = rows;
  j["word_count"] = word_count;
  j["dropped"] = dropped;
  j["preprocessing"] = preprocessing;
  j["config"] = config;
  j["seed"] = seed ? json(*seed) : json(nullptr);
  if (!pairs.empty()) j["pairs"] = pairs;
  return j;
}

CkaResult CkaResult::from_json(const json& j) {
  try {
    CkaResult r;
    r.pairing = parse_pairing(j.at("pairing").get<std::string>());
    r.axis_a = j.at("axis_a").get<std::vector<std::string>>();
    r.axis_b = j.at("axis_b").get<std::vector<std::string>>();
    const auto& rows = j.at("scores");
    r.scores = Matrix::Zero(static_cast<Eigen::Index>(r.axis_a.size()), static_cast<Eigen::Index>(r.axis_b.size()));
    if (rows.size() != r.axis_a.size()) fail(ErrorKind::kFormat, "CKA result: score rows do not match axis_a");
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto row = rows[i].get<std::vector<double>>();
      if (row.size() != r.axis_b.size()) fail(ErrorKind::kFormat, "CKA result: score columns do not match axis_b");
      for (std::size_t k = 0; k < row.size(); ++k) r.scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = row[k];
    }
    r.word_count = j.at("word_count").get<std::size_t>();
    r.dropped = j.value("dropped", std::size_t{0});
    r.preprocessing = j.at("preprocessing").get<std::string>();
    r.config = j.value("config", std::string{});
    if (j.contains("seed") && !j["seed"].is_null()) r.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("pairs")) r.pairs = j["pairs"].get<std::vector<std::pair<std::string, std::string>>>();
    return r;
  } catch (const json::exception& ex) {
    fail(ErrorKind::kFormat, std::string("malformed CKA result: ") + ex.what());
  }
}

std::string CkaResult::to_csv() const {
  std::ostringstream out;
  out << "layer";
  for (const auto& b : axis_b) out << ',' << b;
  out << '\n';
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    out << axis_a[static_cast<std::size_t>(r)];
    for (Eigen::Index c = 0; c < scores.cols(); ++c) out << ',' << text::format_double(scores(r, c));
    out << '\n';
  }
  return out.str();
}

void save_cka_result(const CkaResult& result, const std::filesystem::path& json_path,
                     const std::filesystem::path& csv_path) {
  std::ofstream js(json_path);
  if (!js) fail(ErrorKind::kIo, "cannot write " + json_path.string());
  js << result.to_json().dump(2) << '\n';
  std::ofstream csv(csv_path);
  if (!csv) fail(ErrorKind::kIo, "cannot write " + csv_path.string());
  csv << result.to_csv();
}

std::vector<std::string> layer_labels(std::size_t n) {
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < n; ++i) labels.push_back("L" + std::to_string(i));
  return labels;
}

namespace {

// A preprocessed matrix with its ||X^T X||_F cached.
struct Prepared {
  Matrix x;
  double self_norm = 0.0;
};

std::vector<Prepared> prepare(std::span<const Matrix> layers, const CkaRunOptions& options) {
  std::vector<Prepared> out(layers.size());
  parallel_for(layers.size(), options.workers, [&](std::size_t i) {
    out[i].x = numerics::cka_preprocess_checked(layers[i], options.cka);
    out[i].self_norm = (out[i].x.transpose() * out[i].x).norm();
  });
  return out;
}

double cka(const Prepared& a, const Prepared& b) {
  const double cross = (b.x.transpose() * a.x).squaredNorm();
  return std::clamp(cross / (a.self_norm * b.self_norm), 0.0, 1.0);
}

void check_layers(std::span<const Matrix> layers, const char* what) {
  if (layers.empty()) fail(ErrorKind::kInvalidArgument, std::string(what) + ": no layers");
  for (const auto& l : layers) {
    if (l.rows() != layers[0].rows()) fail(ErrorKind::kDimensionMismatch, std::string(what) + ": row counts differ");
  }
  if (layers[0].rows() < 2) fail(ErrorKind::kInsufficientData, std::string(what) + ": needs at least 2 words");
}

// Resolved rows of a layer stack as double matrices.
std::vector<Matrix> to_layers(const LayerStack& stack, const std::vector<std::size_t>& keep) {
  std::vector<Matrix> out;
  out.reserve(stack.layers.size());
  for (const auto& layer : stack.layers) {
    Matrix m(static_cast<Eigen::Index>(keep.size()), layer.cols());
    for (std::size_t i = 0; i < keep.size(); ++i) {
      m.row(static_cast<Eigen::Index>(i)) = layer.row(static_cast<Eigen::Index>(keep[i])).cast<double>();
    }
    out.push_back(std::move(m));
  }
  return out;
}

std::string describe(const ContextMode& mode, SpecialPolicy policy) {
  const std::string context = mode.is_aoc() ? "aoc-" + std::to_string(mode.max_contexts) : "iso";
  return context + "." + to_string(policy);
}

}  // namespace

CkaResult self_similarity(std::span<const Matrix> layers, const CkaRunOptions& options) {
  check_layers(layers, "self-similarity");
  const auto prepared = prepare(layers, options);
  const std::size_t n = layers.size();
  std::vector<std::pair<std::size_t, std::size_t>> cells;
  for (std::size_t m = 0; m < n; ++m) {
    for (std::size_t k = m; k < n; ++k) cells.emplace_back(m, k);
  }
  std::vector<double> values(cells.size());
  parallel_for(cells.size(), options.workers,
               [&](std::size_t c) { values[c] = cka(prepared[cells[c].first], prepared[cells[c].second]); });

  CkaResult r;
  r.pairing = Pairing::kSelf;
  r.axis_a = layer_labels(n);
  r.axis_b = r.axis_a;
  r.scores = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const auto [m, k] = cells[c];
    r.scores(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k)) = values[c];
    r.scores(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(m)) = values[c];
  }
  r.word_count = static_cast<std::size_t>(layers[0].rows());
  r.preprocessing = options.cka.describe();
  return r;
}

CkaResult self_similarity(std::span<const std::string> words, const StoreSet& stores, const ContextMode& mode,
                          SpecialPolicy policy, const CkaRunOptions& options) {
  const auto stack = build_layer_stack(words, stores, mode, policy, BuildOptions{options.workers});
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (stack.resolved[i]) keep.push_back(i);
  }
  if (keep.size() < 2) {
    fail(ErrorKind::kInsufficientData, "self-similarity needs at least 2 resolvable words, got " +
                                           std::to_string(keep.size()));
  }
  const auto layers = to_layers(stack, keep);
  CkaResult r = self_similarity(layers, options);
  r.dropped = words.size() - keep.size();
  r.config = describe(mode, policy);
  return r;
}

CkaResult bilingual_correspondence(std::span<const Matrix> src_layers, std::span<const Matrix> tgt_layers,
                                   CorrespondenceShape shape, const CkaRunOptions& options) {
  check_layers(src_layers, "bilingual correspondence");
  check_layers(tgt_layers, "bilingual correspondence");
  if (src_layers[0].rows() != tgt_layers[0].rows()) {
    fail(ErrorKind::kDimensionMismatch, "bilingual correspondence: source and target pair counts differ");
  }
  if (shape == CorrespondenceShape::kSameLayer && src_layers.size() != tgt_layers.size()) {
    fail(ErrorKind::kDimensionMismatch, "bilingual correspondence: layer counts differ");
  }
  const auto ps = prepare(src_layers, options);
  const auto pt = prepare(tgt_layers, options);

  CkaResult r;
  r.pairing = Pairing::kTranslation;
  r.axis_a = layer_labels(src_layers.size());
  if (shape == CorrespondenceShape::kSameLayer) {
    r.axis_b = {"same_layer"};
    r.scores = Matrix::Zero(static_cast<Eigen::Index>(ps.size()), 1);
    std::vector<double> values(ps.size());
    parallel_for(ps.size(), options.workers, [&](std::size_t n) { values[n] = cka(ps[n], pt[n]); });
    for (std::size_t n = 0; n < ps.size(); ++n) r.scores(static_cast<Eigen::Index>(n), 0) = values[n];
  } else {
    r.axis_b = layer_labels(tgt_layers.size());
    const std::size_t cols = pt.size();
    std::vector<double> values(ps.size() * cols);
    parallel_for(values.size(), options.workers, [&](std::size_t c) { values[c] = cka(ps[c / cols], pt[c % cols]); });
    r.scores = Eigen::Map<const Matrix>(values.data(), static_cast<Eigen::Index>(ps.size()),
                                        static_cast<Eigen::Index>(cols));
  }
  r.word_count = static_cast<std::size_t>(src_layers[0].rows());
  r.preprocessing = options.cka.describe();
  return r;
}

CkaResult bilingual_correspondence(const StoreSet& src, const StoreSet& tgt,
                                   std::span<const std::pair<std::string, std::string>> pairs,
                                   const ContextMode& mode, SpecialPolicy policy, CorrespondenceShape shape,
                                   const CkaRunOptions& options) {
  std::vector<std::string> src_words, tgt_words;
  for (const auto& [s, t] : pairs) {
    src_words.push_back(s);
    tgt_words.push_back(t);
  }
  const BuildOptions build{options.workers};
  const auto src_stack = build_layer_stack(src_words, src, mode, policy, build);
  const auto tgt_stack = build_layer_stack(tgt_words, tgt, mode, policy, build);
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (src_stack.resolved[i] && tgt_stack.resolved[i]) keep.push_back(i);
  }
  if (keep.size() < 2) {
    fail(ErrorKind::kInsufficientData, "bilingual correspondence needs at least 2 resolvable pairs, got " +
                                           std::to_string(keep.size()));
  }
  CkaResult r = bilingual_correspondence(to_layers(src_stack, keep), to_layers(tgt_stack, keep), shape, options);
  r.dropped = pairs.size() - keep.size();
  r.config = describe(mode, policy);
  return r;
}

std::vector<std::pair<std::string, std::string>> sample_random_pairs(std::span<const std::string> source_words,
                                                                     std::span<const std::string> target_vocabulary,
                                                                     std::size_t n_pairs, std::uint64_t seed) {
  if (n_pairs == 0) fail(ErrorKind::kInvalidArgument, "random pairing: n_pairs must be positive");
  if (source_words.size() < n_pairs || target_vocabulary.size() < n_pairs) {
    fail(ErrorKind::kInsufficientData, "random pairing: " + std::to_string(n_pairs) +
                                           " pairs requested but the vocabularies hold " +
                                           std::to_string(source_words.size()) + " and " +
                                           std::to_string(target_vocabulary.size()) + " words");
  }
  std::mt19937_64 rng(seed);
  std::vector<std::pair<std::string, std::string>> pairs;
  pairs.reserve(n_pairs);
  for (std::size_t i = 0; i < n_pairs; ++i) {
    pairs.emplace_back(source_words[i], target_vocabulary[uniform_index(rng, target_vocabulary.size())]);
  }
  return pairs;
}

CkaResult random_pair_baseline(const StoreSet& src, const StoreSet& tgt, std::span<const std::string> source_words,
                               std::span<const std::string> target_vocabulary, std::size_t n_pairs,
                               std::uint64_t seed, const ContextMode& mode, SpecialPolicy policy,
                               CorrespondenceShape shape, const CkaRunOptions& options) {
  auto pairs = sample_random_pairs(source_words, target_vocabulary, n_pairs, seed);
  CkaResult r = bilingual_correspondence(src, tgt, pairs, mode, policy, shape, options);
  r.pairing = Pairing::kRandom;
  r.seed = seed;
  r.pairs = std::move(pairs);
  return r;
}

MatrixCorrespondence matrix_correspondence(const TypeEmbeddingMatrix& src, const TypeEmbeddingMatrix& tgt,
                                           std::span<const std::pair<std::string, std::string>> pairs,
                                           const numerics::CkaOptions& options) {
  std::vector<std::pair<std::size_t, std::size_t>> rows;
  for (const auto& [s, t] : pairs) {
    const auto si = src.vocabulary().find(s);
    const auto ti = tgt.vocabulary().find(t);
    if (si && ti) rows.emplace_back(*si, *ti);
  }
  if (rows.size() < 2) fail(ErrorKind::kInsufficientData, "matrix correspondence needs at least 2 resolvable pairs");
  Matrix x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(src.dim()));
  Matrix y(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(tgt.dim()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto a = src.row(rows[i].first);
    const auto b = tgt.row(rows[i].second);
    for (std::size_t k = 0; k < a.size(); ++k) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = a[k];
    for (std::size_t k = 0; k < b.size(); ++k) y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = b[k];
  }
  return {numerics::linear_cka(x, y, options), rows.size()};
}

double correlate_cka_with_bli(std::span<const double> cka_per_n, std::span<const double> bli_per_n) {
  if (cka_per_n.size() != bli_per_n.size()) {
    fail(ErrorKind::kDimensionMismatch, "CKA and BLI series have different lengths");
  }
  return numerics::spearman(cka_per_n, bli_per_n);
}

}  // namespace lexprobe

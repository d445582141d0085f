#include "lexprobe/eval_mono.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "lexprobe/binary_io.hpp"
#include "lexprobe/error.hpp"
#include "lexprobe/numerics.hpp"
#include "lexprobe/parallel.hpp"
#include "lexprobe/random.hpp"
#include "lexprobe/text.hpp"

namespace lexprobe {

using nlohmann::json;

namespace {

std::optional<double> parse_double(std::string_view s) {
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return value;
}

std::ifstream open_text(const std::filesystem::path& path, const char* what) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, std::string("cannot open ") + what + ": " + path.string());
  return in;
}

double norm_of(std::span<const float> v) {
  double s = 0.0;
  for (float x : v) s += double(x) * double(x);
  return std::sqrt(s);
}

}  // namespace

// --- similarity --------------------------------------------------------------

std::vector<SimilarityPair> load_similarity_pairs(const std::filesystem::path& path) {
  auto in = open_text(path, "similarity dataset");
  std::vector<SimilarityPair> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto fields = text::split_whitespace(line);
    if (fields.empty()) continue;
    if (fields.size() < 3) {
      fail(ErrorKind::kFormat, path.string() + ":" + std::to_string(line_no) + ": expected word1 word2 score");
    }
    const auto score = parse_double(fields[2]);
    if (!score) {
      if (pairs.empty() && line_no == 1) continue;  // header row
      fail(ErrorKind::kFormat, path.string() + ":" + std::to_string(line_no) + ": bad score");
    }
    if (!std::isfinite(*score)) fail(ErrorKind::kFormat, path.string() + ": non-finite score");
    pairs.push_back({text::lowercase(fields[0]), text::lowercase(fields[1]), *score});
  }
  return pairs;
}

LsimResult eval_lsim(const TypeEmbeddingMatrix& matrix, std::span<const SimilarityPair> pairs) {
  LsimResult result;
  result.total = pairs.size();
  std::vector<double> gold;
  std::vector<double> predicted;
  for (const auto& p : pairs) {
    const auto u = matrix.find(p.word1);
    const auto v = matrix.find(p.word2);
    if (u.empty() || v.empty() || norm_of(u) == 0.0 || norm_of(v) == 0.0) continue;
    gold.push_back(p.gold_score);
    predicted.push_back(numerics::cosine(u, v));
  }
  result.covered = gold.size();
  if (result.covered < 2) {
    fail(ErrorKind::kInsufficientData, "word similarity needs at least 2 covered pairs, got " +
                                           std::to_string(result.covered));
  }
  result.rho = numerics::spearman(gold, predicted);
  return result;
}

// --- analogy -----------------------------------------------------------------

namespace {

struct PairLine {
  std::string source;
  std::vector<std::string> targets;
};

std::vector<std::string> split_answers(std::string_view field) {
  std::vector<std::string> out;
  for (auto part : text::split(field, '/')) {
    part = text::trim(part);
    if (!part.empty()) out.push_back(text::lowercase(part));
  }
  return out;
}

void flush_pairs(std::vector<PairLine>& pairs, const std::string& category,
                 std::vector<AnalogyQuestion>& out) {
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    for (std::size_t j = 0; j < pairs.size(); ++j) {
      if (i == j) continue;
      out.push_back({pairs[i].source, pairs[i].targets.front(), pairs[j].source, pairs[j].targets, category});
    }
  }
  pairs.clear();
}

void load_analogy_file(const std::filesystem::path& path, const std::string& base_category,
                       std::vector<AnalogyQuestion>& out) {
  auto in = open_text(path, "analogy file");
  std::string category = base_category;
  std::vector<PairLine> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto trimmed = text::trim(line);
    if (trimmed.empty()) continue;
    if (trimmed.front() == ':') {
      flush_pairs(pairs, category, out);
      category = base_category + "/" + std::string(text::trim(trimmed.substr(1)));
      continue;
    }
    std::vector<std::string_view> fields;
    for (auto f : text::split_whitespace(trimmed)) {
      if (f != "/") fields.push_back(f);
    }
    if (fields.size() == 2) {
      auto targets = split_answers(fields[1]);
      if (targets.empty()) continue;
      pairs.push_back({text::lowercase(fields[0]), std::move(targets)});
    } else if (fields.size() == 4) {
      auto gold = split_answers(fields[3]);
      if (gold.empty()) continue;
      out.push_back({text::lowercase(fields[0]), text::lowercase(fields[1]), text::lowercase(fields[2]),
                     std::move(gold), category});
    } else {
      fail(ErrorKind::kFormat, path.string() + ":" + std::to_string(line_no) +
                                   ": expected \"a b c d\" or \"a<TAB>b\"");
    }
  }
  flush_pairs(pairs, category, out);
}

}  // namespace

std::vector<AnalogyQuestion> load_analogy_questions(const std::filesystem::path& path) {
  std::vector<AnalogyQuestion> questions;
  if (std::filesystem::is_directory(path)) {
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(path)) {
      if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      auto rel = std::filesystem::relative(f, path);
      rel.replace_extension();
      load_analogy_file(f, rel.generic_string(), questions);
    }
  } else {
    load_analogy_file(path, path.stem().string(), questions);
  }
  std::erase_if(questions, [](const AnalogyQuestion& q) { return q.a == q.b || q.a == q.c || q.b == q.c; });
  return questions;
}

AnalogyResult eval_analogy(const TypeEmbeddingMatrix& matrix, std::span<const AnalogyQuestion> questions,
                           std::size_t workers) {
  const std::size_t rows = matrix.rows();
  const std::size_t dim = matrix.dim();
  const auto& vocab = matrix.vocabulary();

  // Unit rows, computed once.
  Matrix unit = matrix.to_eigen();
  for (Eigen::Index r = 0; r < unit.rows(); ++r) {
    const double n = unit.row(r).norm();
    if (n > 0.0) unit.row(r) /= n;
  }

  struct Resolved {
    std::size_t a, b, c;
    bool ok = false;
  };
  std::vector<Resolved> resolved(questions.size());
  for (std::size_t q = 0; q < questions.size(); ++q) {
    const auto a = vocab.find(questions[q].a);
    const auto b = vocab.find(questions[q].b);
    const auto c = vocab.find(questions[q].c);
    if (a && b && c) resolved[q] = {*a, *b, *c, true};
  }

  AnalogyResult result;
  result.predictions.assign(questions.size(), -1);
  constexpr std::size_t kBlock = 128;
  const std::size_t blocks = (questions.size() + kBlock - 1) / kBlock;
  parallel_for(blocks, workers, [&](std::size_t block) {
    const std::size_t begin = block * kBlock;
    const std::size_t end = std::min(questions.size(), begin + kBlock);
    Eigen::MatrixXd targets = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim),
                                                    static_cast<Eigen::Index>(end - begin));
    for (std::size_t q = begin; q < end; ++q) {
      if (!resolved[q].ok) continue;
      const auto a = matrix.row(resolved[q].a);
      const auto b = matrix.row(resolved[q].b);
      const auto c = matrix.row(resolved[q].c);
      for (std::size_t k = 0; k < dim; ++k) {
        targets(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(q - begin)) =
            double(c[k]) - double(a[k]) + double(b[k]);
      }
    }
    // cos(row, t) = unit_row . t / |t|; |t| is constant per question.
    const Eigen::MatrixXd scores = unit * targets;
    for (std::size_t q = begin; q < end; ++q) {
      const auto col = static_cast<Eigen::Index>(q - begin);
      if (!resolved[q].ok || targets.col(col).norm() == 0.0) continue;
      std::int64_t best = -1;
      double best_score = -std::numeric_limits<double>::infinity();
      for (std::size_t r = 0; r < rows; ++r) {
        if (r == resolved[q].a || r == resolved[q].b || r == resolved[q].c) continue;
        const double s = scores(static_cast<Eigen::Index>(r), col);
        if (s > best_score) {
          best_score = s;
          best = static_cast<std::int64_t>(r);
        }
      }
      result.predictions[q] = best;
    }
  });

  for (std::size_t q = 0; q < questions.size(); ++q) {
    auto& cat = result.per_category[questions[q].category];
    ++cat.total;
    ++result.counts.total;
    if (!resolved[q].ok) continue;
    ++cat.evaluable;
    ++result.counts.evaluable;
    const auto pred = result.predictions[q];
    if (pred < 0) continue;
    const std::string& word = vocab[static_cast<std::size_t>(pred)];
    if (std::find(questions[q].gold.begin(), questions[q].gold.end(), word) != questions[q].gold.end()) {
      ++cat.correct;
      ++result.counts.correct;
    }
  }
  if (result.counts.evaluable == 0) {
    fail(ErrorKind::kInsufficientData, "no evaluable analogy questions");
  }
  result.p_at_1 = result.counts.p_at_1();
  double macro = 0.0;
  std::size_t categories = 0;
  for (const auto& [name, counts] : result.per_category) {
    if (counts.evaluable == 0) continue;
    macro += counts.p_at_1();
    ++categories;
  }
  result.category_macro_p_at_1 = macro / double(categories);
  return result;
}

// --- relation prediction -------------------------------------------------------

const char* to_string(RelationLabel label) {
  switch (label) {
    case RelationLabel::kSynonymy: return "synonymy";
    case RelationLabel::kAntonymy: return "antonymy";
    case RelationLabel::kHypernymy: return "hypernymy";
    case RelationLabel::kMeronymy: return "meronymy";
    case RelationLabel::kNoRelation: return "no_relation";
  }
  return "?";
}

RelationLabel parse_relation_label(std::string_view s) {
  const std::string l = text::lowercase(text::trim(s));
  if (l == "syn" || l == "synonym" || l == "synonymy") return RelationLabel::kSynonymy;
  if (l == "ant" || l == "antonym" || l == "antonymy") return RelationLabel::kAntonymy;
  if (l == "hyp" || l == "hyper" || l == "hypernym" || l == "hypernymy") return RelationLabel::kHypernymy;
  if (l == "mero" || l == "meronym" || l == "meronymy" || l == "part_of") return RelationLabel::kMeronymy;
  if (l == "random" || l == "none" || l == "no_relation" || l == "norel" || l == "no-relation") {
    return RelationLabel::kNoRelation;
  }
  fail(ErrorKind::kParse, "unknown relation label: " + std::string(s));
}

std::vector<RelationPair> load_relation_pairs(const std::filesystem::path& path) {
  auto in = open_text(path, "relation dataset");
  std::vector<RelationPair> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto fields = text::split_whitespace(line);
    if (fields.empty()) continue;
    if (fields.size() != 3) {
      fail(ErrorKind::kFormat, path.string() + ":" + std::to_string(line_no) + ": expected word1 word2 label");
    }
    pairs.push_back({text::lowercase(fields[0]), text::lowercase(fields[1]), parse_relation_label(fields[2])});
  }
  return pairs;
}

ExportSummary export_relp_features(const TypeEmbeddingMatrix& matrix, std::span<const RelationPair> pairs,
                                   const std::filesystem::path& path) {
  ExportSummary summary;
  summary.total = pairs.size();
  std::vector<std::size_t> covered;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (matrix.vocabulary().contains(pairs[i].word1) && matrix.vocabulary().contains(pairs[i].word2)) {
      covered.push_back(i);
    }
  }
  summary.written = covered.size();
  summary.skipped = summary.total - summary.written;

  json header;
  header["dim"] = matrix.dim();
  header["records"] = summary.written;
  header["skipped"] = summary.skipped;
  json names = json::array();
  for (std::size_t k = 0; k < kRelationClassCount; ++k) names.push_back(to_string(RelationLabel(k)));
  header["labels"] = names;
  header["config_id"] = matrix.provenance().config_id;
  header["model_id"] = matrix.provenance().model_id;

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot write features: " + path.string());
  io::write_preamble(out, kFeatureMagic, kFeatureFormatVersion, header.dump());
  for (std::size_t i : covered) {
    io::write_le<std::uint8_t>(out, static_cast<std::uint8_t>(pairs[i].label));
    io::write_f32_le(out, matrix.find(pairs[i].word1));
    io::write_f32_le(out, matrix.find(pairs[i].word2));
  }
  if (!out) fail(ErrorKind::kIo, "write failed: " + path.string());
  return summary;
}

RelationFeatures load_relp_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open features: " + path.string());
  const auto pre = io::read_preamble(in, kFeatureMagic, "features " + path.string());
  if (pre.version == 0 || pre.version > kFeatureFormatVersion) {
    fail(ErrorKind::kFormat, path.string() + ": unsupported feature file version");
  }
  RelationFeatures f;
  std::size_t records = 0;
  try {
    const json header = json::parse(pre.json_header);
    f.dim = header.at("dim").get<std::size_t>();
    records = header.at("records").get<std::size_t>();
  } catch (const json::exception& ex) {
    fail(ErrorKind::kFormat, path.string() + ": malformed feature header: " + ex.what());
  }
  f.labels.resize(records);
  f.pairs.resize(static_cast<Eigen::Index>(records), static_cast<Eigen::Index>(2 * f.dim));
  for (std::size_t r = 0; r < records; ++r) {
    f.labels[r] = io::read_le<std::uint8_t>(in);
    if (f.labels[r] >= kRelationClassCount) fail(ErrorKind::kCorruption, path.string() + ": bad label");
    io::read_f32_le(in, {f.pairs.data() + r * 2 * f.dim, 2 * f.dim});
  }
  return f;
}

namespace {

using RowMatrix = Matrix;

// [v1 | v2 | v1 * v2]
RowMatrix expand_features(const RelationFeatures& f) {
  const auto n = static_cast<Eigen::Index>(f.size());
  const auto d = static_cast<Eigen::Index>(f.dim);
  RowMatrix x(n, 3 * d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < d; ++k) {
      const double v1 = f.pairs(i, k);
      const double v2 = f.pairs(i, d + k);
      x(i, k) = v1;
      x(i, d + k) = v2;
      x(i, 2 * d + k) = v1 * v2;
    }
  }
  return x;
}

struct Softmax {
  RowMatrix weights;  // features x classes
  Eigen::RowVectorXd bias;
};

Softmax fit_softmax(const RowMatrix& x, const std::vector<std::uint8_t>& y, const BaselineOptions& opt,
                    std::mt19937_64& rng) {
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  const auto k = static_cast<Eigen::Index>(kRelationClassCount);
  Softmax model{RowMatrix::Zero(p, k), Eigen::RowVectorXd::Zero(k)};
  std::vector<std::size_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  const std::size_t batch = std::max<std::size_t>(1, opt.batch_size);
  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    const double lr = opt.learning_rate / (1.0 + opt.lr_decay * double(epoch));
    shuffle(std::span<std::size_t>(order), rng);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      const auto m = static_cast<Eigen::Index>(end - start);
      RowMatrix xb(m, p);
      for (Eigen::Index i = 0; i < m; ++i) xb.row(i) = x.row(static_cast<Eigen::Index>(order[start + i]));
      RowMatrix logits = xb * model.weights;
      logits.rowwise() += model.bias;
      for (Eigen::Index i = 0; i < m; ++i) {
        const double mx = logits.row(i).maxCoeff();
        logits.row(i) = (logits.row(i).array() - mx).exp();
        logits.row(i) /= logits.row(i).sum();
        logits(i, y[order[start + i]]) -= 1.0;  // d loss / d logits
      }
      // Penalty l2/2 |W|^2 on the summed loss, spread evenly over batches.
      const double reg = opt.l2 / double(n);
      const RowMatrix grad_w = (xb.transpose() * logits) / double(m) + reg * model.weights;
      const Eigen::RowVectorXd grad_b = logits.colwise().sum() / double(m);
      model.weights -= lr * grad_w;
      model.bias -= lr * grad_b;
    }
  }
  return model;
}

}  // namespace

BaselineResult train_relation_baseline(const RelationFeatures& features, const BaselineOptions& options) {
  const std::size_t n = features.size();
  std::vector<std::size_t> class_counts(kRelationClassCount, 0);
  for (auto l : features.labels) ++class_counts[l];
  const auto present = std::count_if(class_counts.begin(), class_counts.end(), [](std::size_t c) { return c > 0; });
  if (present < 2) fail(ErrorKind::kInsufficientData, "relation baseline needs at least two classes");
  if (options.runs == 0 || options.folds < 2) {
    fail(ErrorKind::kInvalidArgument, "relation baseline needs runs >= 1 and folds >= 2");
  }
  const std::size_t folds = std::min(options.folds, n);
  const RowMatrix x = expand_features(features);

  BaselineResult result;
  result.run_micro_f1.assign(options.runs, 0.0);
  parallel_for(options.runs, options.workers, [&](std::size_t run) {
    std::mt19937_64 rng(options.seed + 1000003ULL * run);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    shuffle(std::span<std::size_t>(order), rng);

    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t fold = 0; fold < folds; ++fold) {
      std::vector<std::size_t> train, test;
      for (std::size_t i = 0; i < n; ++i) (i % folds == fold ? test : train).push_back(order[i]);
      if (train.empty() || test.empty()) continue;

      RowMatrix xtr(static_cast<Eigen::Index>(train.size()), x.cols());
      std::vector<std::uint8_t> ytr(train.size());
      for (std::size_t i = 0; i < train.size(); ++i) {
        xtr.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(train[i]));
        ytr[i] = features.labels[train[i]];
      }
      const Eigen::RowVectorXd mean = xtr.colwise().mean();
      Eigen::RowVectorXd sd = ((xtr.rowwise() - mean).array().square().colwise().sum() / double(train.size())).sqrt();
      for (Eigen::Index j = 0; j < sd.size(); ++j) {
        if (sd(j) < 1e-12) sd(j) = 1.0;
      }
      xtr = (xtr.rowwise() - mean).array().rowwise() / sd.array();
      const Softmax model = fit_softmax(xtr, ytr, options, rng);

      for (std::size_t i : test) {
        const Eigen::RowVectorXd z = (x.row(static_cast<Eigen::Index>(i)) - mean).array() / sd.array();
        const Eigen::RowVectorXd logits = z * model.weights + model.bias;
        Eigen::Index predicted = 0;
        logits.maxCoeff(&predicted);
        if (static_cast<std::uint8_t>(predicted) == features.labels[i]) {
          ++tp;
        } else {
          ++fp;  // counted for the predicted class
          ++fn;  // and missed for the true class
        }
      }
    }
    const double denom = double(2 * tp + fp + fn);
    result.run_micro_f1[run] = denom == 0.0 ? 0.0 : double(2 * tp) / denom;
  });

  const double runs = double(options.runs);
  result.mean_micro_f1 = std::accumulate(result.run_micro_f1.begin(), result.run_micro_f1.end(), 0.0) / runs;
  if (options.runs > 1) {
    double ss = 0.0;
    for (double v : result.run_micro_f1) ss += (v - result.mean_micro_f1) * (v - result.mean_micro_f1);
    result.stdev_micro_f1 = std::sqrt(ss / (runs - 1.0));
  }
  return result;
}

}  // namespace lexprobe

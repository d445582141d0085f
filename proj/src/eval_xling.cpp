#include "lexprobe/eval_xling.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "lexprobe/error.hpp"
#include "lexprobe/parallel.hpp"
#include "lexprobe/text.hpp"

namespace lexprobe {

// --- lexicons ----------------------------------------------------------------

std::size_t BilingualLexicon::pair_count() const {
  std::size_t n = 0;
  for (const auto& e : entries) n += e.targets.size();
  return n;
}

BilingualLexicon make_lexicon(std::span<const std::pair<std::string, std::string>> pairs, LexiconSplit split) {
  BilingualLexicon lex;
  lex.split = split;
  std::unordered_map<std::string, std::size_t> slot;
  for (const auto& [s, t] : pairs) {
    std::string source = text::lowercase(s);
    std::string target = text::lowercase(t);
    if (source.empty() || target.empty()) fail(ErrorKind::kFormat, "lexicon: empty word");
    auto [it, inserted] = slot.try_emplace(source, lex.entries.size());
    if (inserted) lex.entries.push_back({std::move(source), {}});
    auto& targets = lex.entries[it->second].targets;
    if (std::find(targets.begin(), targets.end(), target) == targets.end()) targets.push_back(std::move(target));
  }
  return lex;
}

BilingualLexicon load_lexicon(const std::filesystem::path& path, LexiconSplit split) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open lexicon: " + path.string());
  std::vector<std::pair<std::string, std::string>> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto fields = text::split_whitespace(line);
    if (fields.empty()) continue;
    if (fields.size() != 2) {
      fail(ErrorKind::kFormat, path.string() + ":" + std::to_string(line_no) + ": expected source<TAB>target");
    }
    pairs.emplace_back(fields[0], fields[1]);
  }
  return make_lexicon(pairs, split);
}

void check_disjoint(const BilingualLexicon& train, const BilingualLexicon& test) {
  std::set<std::string> sources;
  for (const auto& e : train.entries) sources.insert(e.source);
  for (const auto& e : test.entries) {
    if (sources.contains(e.source)) {
      fail(ErrorKind::kInvalidArgument, "train and test lexicons share the source word \"" + e.source + "\"");
    }
  }
}

// --- mapping -------------------------------------------------------------------

namespace {

void unit_rows(Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double n = m.row(r).norm();
    if (n > 0.0) m.row(r) /= n;
  }
}

}  // namespace

Matrix normalize_for_mapping(const Matrix& m) {
  Matrix out = m;
  std::vector<bool> zero(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) zero[static_cast<std::size_t>(r)] = m.row(r).squaredNorm() == 0.0;
  unit_rows(out);
  const Eigen::RowVectorXd mean = out.colwise().mean();
  out.rowwise() -= mean;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    if (zero[static_cast<std::size_t>(r)]) out.row(r).setZero();
  }
  unit_rows(out);
  return out;
}

NormalizedSpace NormalizedSpace::from(const TypeEmbeddingMatrix& matrix) {
  return {matrix.vocabulary(), normalize_for_mapping(matrix.to_eigen())};
}

Alignment align_spaces(const NormalizedSpace& src, const NormalizedSpace& tgt, const BilingualLexicon& train) {
  if (src.dim() != tgt.dim()) {
    fail(ErrorKind::kDimensionMismatch, "align: source and target dimensions differ (" + std::to_string(src.dim()) +
                                            " vs " + std::to_string(tgt.dim()) + ")");
  }
  std::vector<std::pair<std::size_t, std::size_t>> rows;
  Alignment result;
  for (const auto& e : train.entries) {
    const auto s = src.vocabulary.find(e.source);
    for (const auto& t : e.targets) {
      const auto ti = tgt.vocabulary.find(t);
      if (s && ti) {
        rows.emplace_back(*s, *ti);
      } else {
        ++result.pairs_dropped;
      }
    }
  }
  if (rows.empty()) fail(ErrorKind::kInsufficientData, "align: no training pair is in both vocabularies");
  const auto n = static_cast<Eigen::Index>(rows.size());
  Matrix x(n, src.rows.cols()), y(n, tgt.rows.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    x.row(i) = src.rows.row(static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)].first));
    y.row(i) = tgt.rows.row(static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)].second));
  }
  result.map = numerics::procrustes(x, y);
  result.pairs_used = rows.size();
  return result;
}

Alignment align_spaces(const TypeEmbeddingMatrix& src, const TypeEmbeddingMatrix& tgt,
                       const BilingualLexicon& train) {
  return align_spaces(NormalizedSpace::from(src), NormalizedSpace::from(tgt), train);
}

// --- lexicon induction ---------------------------------------------------------

BliResult rank_translations(const Matrix& mapped_source, const Matrix& target, std::span<const BliQuery> queries,
                            std::size_t workers) {
  if (mapped_source.cols() != target.cols()) fail(ErrorKind::kDimensionMismatch, "BLI: dimensions differ");
  if (queries.empty()) fail(ErrorKind::kInsufficientData, "BLI: no test pair is in both vocabularies");
  const Eigen::Index v = target.rows();
  Eigen::VectorXd target_norm(v);
  for (Eigen::Index r = 0; r < v; ++r) target_norm(r) = target.row(r).norm();

  BliResult result;
  result.ranks.assign(queries.size(), 0);
  constexpr std::size_t kBlock = 64;
  const std::size_t blocks = (queries.size() + kBlock - 1) / kBlock;
  parallel_for(blocks, workers, [&](std::size_t block) {
    const std::size_t begin = block * kBlock;
    const std::size_t end = std::min(queries.size(), begin + kBlock);
    Matrix q(static_cast<Eigen::Index>(end - begin), mapped_source.cols());
    for (std::size_t i = begin; i < end; ++i) {
      q.row(static_cast<Eigen::Index>(i - begin)) = mapped_source.row(static_cast<Eigen::Index>(queries[i].source_row));
    }
    const Eigen::MatrixXd dots = target * q.transpose();  // v x block
    std::vector<double> scores(static_cast<std::size_t>(v));
    for (std::size_t i = begin; i < end; ++i) {
      const auto col = static_cast<Eigen::Index>(i - begin);
      const double qn = q.row(col).norm();
      for (Eigen::Index r = 0; r < v; ++r) {
        const double denom = target_norm(r) * qn;
        scores[static_cast<std::size_t>(r)] =
            denom > 0.0 ? dots(r, col) / denom : -std::numeric_limits<double>::infinity();
      }
      std::size_t best = std::numeric_limits<std::size_t>::max();
      for (std::size_t g : queries[i].gold_rows) {
        const double sg = scores[g];
        std::size_t rank = 1;
        for (std::size_t r = 0; r < scores.size(); ++r) {
          if (scores[r] > sg || (scores[r] == sg && r < g)) ++rank;
        }
        best = std::min(best, rank);
      }
      result.ranks[i] = best;
    }
  });
  double sum = 0.0;
  for (std::size_t r : result.ranks) sum += 1.0 / double(r);
  result.mrr = sum / double(queries.size());
  result.covered = queries.size();
  result.total = queries.size();
  return result;
}

BliResult eval_bli(const NormalizedSpace& src, const NormalizedSpace& tgt, const numerics::OrthogonalMap& map,
                   const BilingualLexicon& test, std::size_t workers) {
  if (map.dim() != src.dim() || src.dim() != tgt.dim()) {
    fail(ErrorKind::kDimensionMismatch, "BLI: map and space dimensions differ");
  }
  std::vector<BliQuery> queries;
  for (const auto& e : test.entries) {
    const auto s = src.vocabulary.find(e.source);
    if (!s) continue;
    BliQuery q{*s, {}};
    for (const auto& t : e.targets) {
      if (const auto ti = tgt.vocabulary.find(t)) q.gold_rows.push_back(*ti);
    }
    if (!q.gold_rows.empty()) queries.push_back(std::move(q));
  }
  BliResult result = rank_translations(src.rows * map.w, tgt.rows, queries, workers);
  result.total = test.size();
  return result;
}

BliResult eval_bli(const TypeEmbeddingMatrix& src, const TypeEmbeddingMatrix& tgt,
                   const numerics::OrthogonalMap& map, const BilingualLexicon& test, std::size_t workers) {
  return eval_bli(NormalizedSpace::from(src), NormalizedSpace::from(tgt), map, test, workers);
}

// --- retrieval -------------------------------------------------------------------

namespace {

std::map<std::string, std::vector<std::string>> load_texts(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path.string());
  std::map<std::string, std::vector<std::string>> texts;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      fail(ErrorKind::kFormat, path.string() + ":" + std::to_string(line_no) + ": expected id<TAB>text");
    }
    std::string id(text::trim(std::string_view(line).substr(0, tab)));
    if (!texts.emplace(id, text::tokenize(std::string_view(line).substr(tab + 1))).second) {
      fail(ErrorKind::kDuplicate, path.string() + ": duplicate id \"" + id + "\"");
    }
  }
  return texts;
}

}  // namespace

RetrievalCollection load_collection(const std::filesystem::path& dir) {
  RetrievalCollection c;
  c.documents = load_texts(dir / "documents.tsv");
  c.queries = load_texts(dir / "queries.tsv");
  const auto qrels = dir / "qrels.tsv";
  std::ifstream in(qrels);
  if (!in) fail(ErrorKind::kIo, "cannot open " + qrels.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto f = text::split_whitespace(line);
    if (f.empty()) continue;
    const std::string where = qrels.string() + ":" + std::to_string(line_no);
    std::string query, doc;
    if (f.size() == 2) {
      query = f[0];
      doc = f[1];
    } else if (f.size() == 4) {
      int rel = 0;
      const auto [p, ec] = std::from_chars(f[3].data(), f[3].data() + f[3].size(), rel);
      if (ec != std::errc{} || p != f[3].data() + f[3].size()) fail(ErrorKind::kFormat, where + ": bad relevance");
      if (rel <= 0) continue;
      query = f[0];
      doc = f[2];
    } else {
      fail(ErrorKind::kFormat, where + ": expected query<TAB>doc");
    }
    if (!c.documents.contains(doc)) {
      fail(ErrorKind::kNotFound, where + ": relevant document \"" + doc + "\" is not in the collection");
    }
    c.relevance[query].insert(doc);
  }
  return c;
}

std::optional<double> IdfTable::find(const std::string& token) const {
  const auto it = weights.find(token);
  if (it == weights.end()) return std::nullopt;
  return it->second;
}

IdfTable build_idf(std::span<const std::vector<std::string>> documents, IdfFormula formula) {
  if (documents.empty()) fail(ErrorKind::kInsufficientData, "IDF needs at least one document");
  std::unordered_map<std::string, std::size_t> df;
  for (const auto& doc : documents) {
    std::set<std::string_view> seen(doc.begin(), doc.end());
    for (auto t : seen) ++df[std::string(t)];
  }
  IdfTable table;
  table.documents = documents.size();
  const double n = double(documents.size());
  for (const auto& [token, count] : df) {
    table.weights[token] = formula == IdfFormula::kSmooth ? std::log((n + 1.0) / (double(count) + 1.0)) + 1.0
                                                          : std::log(n / double(count));
  }
  return table;
}

IdfTable build_idf(const std::map<std::string, std::vector<std::string>>& texts, IdfFormula formula) {
  std::vector<std::vector<std::string>> docs;
  docs.reserve(texts.size());
  for (const auto& [id, tokens] : texts) docs.push_back(tokens);
  return build_idf(docs, formula);
}

namespace {

template <typename RowFn>
EmbeddedText embed_impl(std::span<const std::string> tokens, const Vocabulary& vocab, std::size_t dim, RowFn row,
                        const IdfTable& idf, const numerics::OrthogonalMap* map) {
  EmbeddedText out;
  out.vector = Vector::Zero(static_cast<Eigen::Index>(dim));
  for (const auto& t : tokens) {
    const auto weight = idf.find(t);
    if (!weight) continue;
    const auto r = vocab.find(t);
    if (!r) continue;
    out.vector += *weight * row(*r);
    ++out.tokens_used;
  }
  out.zero = out.tokens_used == 0;
  if (map != nullptr) {
    if (map->dim() != dim) fail(ErrorKind::kDimensionMismatch, "embed: map dimension differs from the matrix");
    out.vector = map->w.transpose() * out.vector;
  }
  return out;
}

}  // namespace

EmbeddedText embed_text(std::span<const std::string> tokens, const TypeEmbeddingMatrix& matrix, const IdfTable& idf,
                        const numerics::OrthogonalMap* map) {
  return embed_impl(
      tokens, matrix.vocabulary(), matrix.dim(),
      [&](std::size_t r) {
        const auto span = matrix.row(r);
        return Eigen::Map<const Eigen::VectorXf>(span.data(), static_cast<Eigen::Index>(span.size())).cast<double>();
      },
      idf, map);
}

EmbeddedText embed_text(std::span<const std::string> tokens, const NormalizedSpace& space, const IdfTable& idf,
                        const numerics::OrthogonalMap* map) {
  return embed_impl(
      tokens, space.vocabulary, space.dim(),
      [&](std::size_t r) { return space.rows.row(static_cast<Eigen::Index>(r)).transpose(); }, idf, map);
}

double average_precision(std::span<const std::string> ranking, const std::set<std::string>& relevant) {
  if (relevant.empty()) fail(ErrorKind::kInvalidArgument, "average precision needs a relevant document");
  std::size_t hits = 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    if (relevant.contains(ranking[i])) {
      ++hits;
      sum += double(hits) / double(i + 1);
    }
  }
  return sum / double(relevant.size());
}

ClirResult eval_clir(const RetrievalCollection& collection, const NormalizedSpace& src, const NormalizedSpace& tgt,
                     const numerics::OrthogonalMap& map, const ClirOptions& options) {
  std::vector<std::string> query_ids;
  for (const auto& [id, tokens] : collection.queries) {
    const auto it = collection.relevance.find(id);
    if (it != collection.relevance.end() && !it->second.empty()) query_ids.push_back(id);
  }
  if (query_ids.empty()) fail(ErrorKind::kInsufficientData, "CLIR: no query has a relevant document");
  if (collection.documents.empty()) fail(ErrorKind::kInsufficientData, "CLIR: empty document collection");

  const IdfTable doc_idf = build_idf(collection.documents, options.formula);
  const IdfTable query_idf = options.query_idf ? *options.query_idf : build_idf(collection.queries, options.formula);

  std::vector<std::string> doc_ids;
  std::vector<const std::vector<std::string>*> doc_tokens;
  for (const auto& [id, tokens] : collection.documents) {
    doc_ids.push_back(id);
    doc_tokens.push_back(&tokens);
  }
  const std::size_t n_docs = doc_ids.size();
  // Unit document vectors as rows; zero documents keep a zero row.
  Matrix docs(static_cast<Eigen::Index>(n_docs), static_cast<Eigen::Index>(tgt.dim()));
  std::vector<std::uint8_t> doc_zero(n_docs, 0);
  parallel_for(n_docs, options.workers, [&](std::size_t i) {
    auto e = embed_text(*doc_tokens[i], tgt, doc_idf);
    const double norm = e.vector.norm();
    doc_zero[i] = e.zero || norm == 0.0;
    docs.row(static_cast<Eigen::Index>(i)) = doc_zero[i] ? Vector::Zero(e.vector.size()) : Vector(e.vector / norm);
  });

  std::vector<double> ap(query_ids.size(), 0.0);
  std::vector<std::uint8_t> query_zero(query_ids.size(), 0);
  parallel_for(query_ids.size(), options.workers, [&](std::size_t qi) {
    const auto& id = query_ids[qi];
    const auto e = embed_text(collection.queries.at(id), src, query_idf, &map);
    const double norm = e.vector.norm();
    if (e.zero || norm == 0.0) {
      query_zero[qi] = 1;
      return;
    }
    const Vector scores = docs * (e.vector / norm);
    std::vector<std::size_t> order(n_docs);
    std::iota(order.begin(), order.end(), 0);
    // Doc ids are already sorted, so index order breaks ties by id.
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (doc_zero[a] != doc_zero[b]) return doc_zero[a] < doc_zero[b];
      return scores(static_cast<Eigen::Index>(a)) > scores(static_cast<Eigen::Index>(b));
    });
    std::vector<std::string> ranking;
    ranking.reserve(n_docs);
    for (std::size_t i : order) ranking.push_back(doc_ids[i]);
    ap[qi] = average_precision(ranking, collection.relevance.at(id));
  });

  ClirResult result;
  for (std::size_t qi = 0; qi < query_ids.size(); ++qi) {
    result.average_precision[query_ids[qi]] = ap[qi];
    if (query_zero[qi]) {
      ++result.zero_queries;
      result.warnings.push_back("query \"" + query_ids[qi] + "\" has no embeddable token; scored AP 0");
    }
  }
  result.map_score = std::accumulate(ap.begin(), ap.end(), 0.0) / double(ap.size());
  return result;
}

ClirResult eval_clir(const RetrievalCollection& collection, const TypeEmbeddingMatrix& src,
                     const TypeEmbeddingMatrix& tgt, const numerics::OrthogonalMap& map,
                     const ClirOptions& options) {
  return eval_clir(collection, NormalizedSpace::from(src), NormalizedSpace::from(tgt), map, options);
}

}  // namespace lexprobe

#pragma once

// Cross-lingual evaluators: bilingual lexicon induction through an orthogonal
// map learned on a seed lexicon, and document retrieval across languages with
// IDF-weighted bag-of-vectors embeddings.

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "lexprobe/embedding_matrix.hpp"
#include "lexprobe/numerics.hpp"

namespace lexprobe {

// --- lexicons ----------------------------------------------------------------

enum class LexiconSplit { kTrain, kTest };

struct LexiconEntry {
  std::string source;
  std::vector<std::string> targets;  // non-empty, no duplicates
};

struct BilingualLexicon {
  LexiconSplit split = LexiconSplit::kTrain;
  std::vector<LexiconEntry> entries;  // in order of first appearance

  std::size_t size() const { return entries.size(); }
  std::size_t pair_count() const;
};

// Groups (source, target) pairs by source; words are lowercased.
BilingualLexicon make_lexicon(std::span<const std::pair<std::string, std::string>> pairs, LexiconSplit split);

// "source<TAB>target" per line (any whitespace accepted); repeated sources
// accumulate into one gold set.
BilingualLexicon load_lexicon(const std::filesystem::path& path, LexiconSplit split);

// Throws kInvalidArgument if a source word occurs in both lexicons.
void check_disjoint(const BilingualLexicon& train, const BilingualLexicon& test);

// --- mapping -------------------------------------------------------------------

// Recorded in result metadata: unit-normalize rows, mean-center columns,
// unit-normalize rows again. All-zero rows stay zero at both unit steps.
inline constexpr std::string_view kMappingPipeline = "unit,center,unit";

// A matrix after the mapping normalization, in double precision.
struct NormalizedSpace {
  Vocabulary vocabulary;
  Matrix rows;

  static NormalizedSpace from(const TypeEmbeddingMatrix& matrix);
  std::size_t dim() const { return static_cast<std::size_t>(rows.cols()); }
};

Matrix normalize_for_mapping(const Matrix& m);

struct Alignment {
  numerics::OrthogonalMap map;
  std::size_t pairs_used = 0;
  std::size_t pairs_dropped = 0;  // OOV on either side
};

// W = procrustes(normalized source rows, normalized target rows) over every
// (source, target) pair of the lexicon resolvable in both vocabularies.
Alignment align_spaces(const NormalizedSpace& src, const NormalizedSpace& tgt, const BilingualLexicon& train);
Alignment align_spaces(const TypeEmbeddingMatrix& src, const TypeEmbeddingMatrix& tgt,
                       const BilingualLexicon& train);

// --- lexicon induction ---------------------------------------------------------

struct BliQuery {
  std::size_t source_row = 0;
  std::vector<std::size_t> gold_rows;  // non-empty
};

struct BliResult {
  double mrr = 0.0;
  std::size_t covered = 0;  // entries with the source and >= 1 gold target in vocabulary
  std::size_t total = 0;
  std::vector<std::size_t> ranks;  // best gold rank (1-based) per covered entry

  double coverage() const { return total == 0 ? 0.0 : double(covered) / double(total); }
};

// Ranks every target row by cosine to mapped_source.row(q.source_row). The
// rank of a row counts rows with a strictly higher score plus tied rows at a
// lower index; all-zero target rows rank last. Fills mrr and ranks.
BliResult rank_translations(const Matrix& mapped_source, const Matrix& target, std::span<const BliQuery> queries,
                            std::size_t workers = 1);

BliResult eval_bli(const NormalizedSpace& src, const NormalizedSpace& tgt, const numerics::OrthogonalMap& map,
                   const BilingualLexicon& test, std::size_t workers = 1);
BliResult eval_bli(const TypeEmbeddingMatrix& src, const TypeEmbeddingMatrix& tgt,
                   const numerics::OrthogonalMap& map, const BilingualLexicon& test, std::size_t workers = 1);

// --- retrieval -------------------------------------------------------------------

struct RetrievalCollection {
  std::map<std::string, std::vector<std::string>> documents;  // sorted by id
  std::map<std::string, std::vector<std::string>> queries;
  std::map<std::string, std::set<std::string>> relevance;
};

// Directory with documents.tsv and queries.tsv ("id<TAB>text", tokenized by
// text::tokenize) and qrels.tsv ("query<TAB>doc", or TREC "query 0 doc rel"
// where rel > 0 marks relevance). Relevant ids must name existing documents.
RetrievalCollection load_collection(const std::filesystem::path& dir);

enum class IdfFormula {
  kSmooth,  // ln((N + 1) / (df + 1)) + 1
  kPlain,   // ln(N / df)
};

struct IdfTable {
  std::unordered_map<std::string, double> weights;
  std::size_t documents = 0;

  std::optional<double> find(const std::string& token) const;
};

IdfTable build_idf(std::span<const std::vector<std::string>> documents, IdfFormula formula = IdfFormula::kSmooth);
IdfTable build_idf(const std::map<std::string, std::vector<std::string>>& texts,
                   IdfFormula formula = IdfFormula::kSmooth);

struct EmbeddedText {
  Vector vector;
  std::size_t tokens_used = 0;
  bool zero = true;  // nothing was embedded
};

// Sum of idf(t) * vec(t) over tokens found in both the vocabulary and the
// table, then multiplied by W when a map is given.
EmbeddedText embed_text(std::span<const std::string> tokens, const TypeEmbeddingMatrix& matrix, const IdfTable& idf,
                        const numerics::OrthogonalMap* map = nullptr);
EmbeddedText embed_text(std::span<const std::string> tokens, const NormalizedSpace& space, const IdfTable& idf,
                        const numerics::OrthogonalMap* map = nullptr);

// Average precision of one ranking: mean over the relevant documents of the
// precision at their rank. Relevant ids absent from the ranking contribute 0.
double average_precision(std::span<const std::string> ranking, const std::set<std::string>& relevant);

struct ClirOptions {
  IdfFormula formula = IdfFormula::kSmooth;
  // Query-side weights. Defaults to IDF over the query set itself, since the
  // document IDF covers target-language tokens only.
  std::optional<IdfTable> query_idf;
  std::size_t workers = 1;
};

struct ClirResult {
  double map_score = 0.0;
  std::map<std::string, double> average_precision;  // per evaluated query
  std::size_t zero_queries = 0;
  std::vector<std::string> warnings;
};

// Queries are embedded in the normalized source space and mapped, documents
// in the normalized target space; documents are ranked by cosine, all-zero
// documents last, ties by document id. Queries without relevant documents
// are not evaluated; a query that embeds to zero scores AP 0 with a warning.
ClirResult eval_clir(const RetrievalCollection& collection, const NormalizedSpace& src, const NormalizedSpace& tgt,
                     const numerics::OrthogonalMap& map, const ClirOptions& options = {});
ClirResult eval_clir(const RetrievalCollection& collection, const TypeEmbeddingMatrix& src,
                     const TypeEmbeddingMatrix& tgt, const numerics::OrthogonalMap& map,
                     const ClirOptions& options = {});

}  // namespace lexprobe

#pragma once

// Monolingual evaluators: word similarity (Spearman against human scores),
// analogy by vector offset (P@1), and relation-prediction feature export
// with a logistic-regression baseline.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "lexprobe/embedding_matrix.hpp"

namespace lexprobe {

// --- similarity --------------------------------------------------------------

struct SimilarityPair {
  std::string word1;
  std::string word2;
  double gold_score = 0.0;
};

// "word1 word2 score" per line, tab- or space-separated. A first line whose
// score field is not numeric is treated as a column header.
std::vector<SimilarityPair> load_similarity_pairs(const std::filesystem::path& path);

struct LsimResult {
  double rho = 0.0;
  std::size_t covered = 0;
  std::size_t total = 0;

  double coverage() const { return total == 0 ? 0.0 : double(covered) / double(total); }
};

// Pairs with an OOV (or zero-vector) word are skipped and counted. Needs at
// least 2 covered pairs.
LsimResult eval_lsim(const TypeEmbeddingMatrix& matrix, std::span<const SimilarityPair> pairs);

// --- analogy -----------------------------------------------------------------

struct AnalogyQuestion {
  std::string a, b, c;
  std::vector<std::string> gold;  // any of these counts as correct
  std::string category;
};

// Loads a file or, recursively, every file of a directory (sorted by path;
// category = path relative to the root, without extension). Line formats:
//   "a b c d1/d2/..."   one question (a lone "/" token is ignored)
//   "a<TAB>b1/b2/..."   BATS pair list; the file yields a question for every
//                       ordered pair of distinct lines (i, j):
//                       a_i : b_i(first) = a_j : {b_j...}
//   ": name"            starts a new category inside a file
// Questions whose a, b, c are not pairwise distinct are dropped.
std::vector<AnalogyQuestion> load_analogy_questions(const std::filesystem::path& path);

struct AnalogyCounts {
  std::size_t correct = 0;
  std::size_t evaluable = 0;
  std::size_t total = 0;

  double p_at_1() const { return evaluable == 0 ? 0.0 : double(correct) / double(evaluable); }
};

struct AnalogyResult {
  double p_at_1 = 0.0;  // global micro-average over evaluable questions
  AnalogyCounts counts;
  std::map<std::string, AnalogyCounts> per_category;
  // Macro-average of per-category P@1 over categories with evaluable items.
  double category_macro_p_at_1 = 0.0;
  // Predicted row per question; -1 when not evaluable or undefined.
  std::vector<std::int64_t> predictions;

  double coverage() const {
    return counts.total == 0 ? 0.0 : double(counts.evaluable) / double(counts.total);
  }
};

// argmax over V \ {a, b, c} of cos(row, c - a + b); ties go to the lower
// row. A question is evaluable when a, b and c are all in the vocabulary.
AnalogyResult eval_analogy(const TypeEmbeddingMatrix& matrix, std::span<const AnalogyQuestion> questions,
                           std::size_t workers = 1);

// --- relation prediction -------------------------------------------------------

enum class RelationLabel : std::uint8_t {
  kSynonymy = 0,
  kAntonymy = 1,
  kHypernymy = 2,
  kMeronymy = 3,
  kNoRelation = 4,
};
inline constexpr std::size_t kRelationClassCount = 5;

const char* to_string(RelationLabel label);
RelationLabel parse_relation_label(std::string_view s);

struct RelationPair {
  std::string word1;
  std::string word2;
  RelationLabel label = RelationLabel::kNoRelation;
};

// "word1<TAB>word2<TAB>label" per line.
std::vector<RelationPair> load_relation_pairs(const std::filesystem::path& path);

inline constexpr std::string_view kFeatureMagic = "LXRF";
inline constexpr std::uint32_t kFeatureFormatVersion = 1;

struct ExportSummary {
  std::size_t written = 0;
  std::size_t skipped = 0;
  std::size_t total = 0;
};

// Writes "LXRF", u32 version, u64 JSON length, JSON header (dim, records,
// label names, provenance), then per covered pair: u8 label followed by
// [v1 | v2] as 2*dim f32 little-endian.
ExportSummary export_relp_features(const TypeEmbeddingMatrix& matrix, std::span<const RelationPair> pairs,
                                   const std::filesystem::path& path);

struct RelationFeatures {
  std::size_t dim = 0;  // d of a single word vector
  std::vector<std::uint8_t> labels;
  Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> pairs;  // n x 2d

  std::size_t size() const { return labels.size(); }
};

RelationFeatures load_relp_features(const std::filesystem::path& path);

struct BaselineOptions {
  std::size_t folds = 5;
  std::size_t runs = 5;
  std::uint64_t seed = 0;
  double l2 = 1.0;            // penalty l2/2 * |W|^2 added to the summed loss
  std::size_t epochs = 100;
  double learning_rate = 0.1; // lr_e = learning_rate / (1 + lr_decay * e)
  double lr_decay = 0.05;
  std::size_t batch_size = 32;
  std::size_t workers = 1;    // runs are spread over workers
};

struct BaselineResult {
  double mean_micro_f1 = 0.0;
  double stdev_micro_f1 = 0.0;  // sample standard deviation over runs
  std::vector<double> run_micro_f1;
};

// Multinomial logistic regression on [v1 | v2 | v1*v2] (features standardised
// with training-fold statistics), k-fold cross-validated; one micro-F1 per
// seeded run over all held-out predictions.
BaselineResult train_relation_baseline(const RelationFeatures& features, const BaselineOptions& options = {});

}  // namespace lexprobe

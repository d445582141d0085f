#pragma once

// Layer geometry: CKA between the layers of one model for the same words,
// between source and target layers for translation pairs (or random pairs),
// and rank correlation of CKA with lexicon-induction scores.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "lexprobe/distillation.hpp"
#include "lexprobe/numerics.hpp"

namespace lexprobe {

enum class Pairing { kSelf, kTranslation, kRandom };

const char* to_string(Pairing pairing);
Pairing parse_pairing(std::string_view s);

struct CkaResult {
  Pairing pairing = Pairing::kSelf;
  std::vector<std::string> axis_a;  // row labels
  std::vector<std::string> axis_b;  // column labels
  Matrix scores;
  std::size_t word_count = 0;  // examples s used per CKA
  std::size_t dropped = 0;     // words or pairs that could not be resolved
  std::string preprocessing;
  std::string config;          // free-form description of the extraction
  std::optional<std::uint64_t> seed;
  std::vector<std::pair<std::string, std::string>> pairs;  // random pairing only

  nlohmann::json to_json() const;
  static CkaResult from_json(const nlohmann::json& j);
  // Heatmap CSV: header "layer,<axis_b...>", then one line per axis_a label.
  std::string to_csv() const;
};

void save_cka_result(const CkaResult& result, const std::filesystem::path& json_path,
                     const std::filesystem::path& csv_path);

// Labels "L0".."L{n-1}".
std::vector<std::string> layer_labels(std::size_t n);

struct CkaRunOptions {
  numerics::CkaOptions cka;
  std::size_t workers = 1;
};

// scores[m][n] = CKA(X_m, X_n) over per-layer word matrices with identical
// row order. Symmetric by construction.
CkaResult self_similarity(std::span<const Matrix> layers, const CkaRunOptions& options = {});

// Builds SINGLE(n) layers from the store for every word and drops words that
// cannot be resolved. Needs >= 2 resolved words.
CkaResult self_similarity(std::span<const std::string> words, const StoreSet& stores, const ContextMode& mode,
                          SpecialPolicy policy, const CkaRunOptions& options = {});

enum class CorrespondenceShape {
  kSameLayer,  // scores is L x 1: CKA(src layer n, tgt layer n)
  kAllLayers,  // scores is L x L: CKA(src layer m, tgt layer n)
};

// Rows of src_layers[k] and tgt_layers[k] are aligned by pair.
CkaResult bilingual_correspondence(std::span<const Matrix> src_layers, std::span<const Matrix> tgt_layers,
                                   CorrespondenceShape shape = CorrespondenceShape::kSameLayer,
                                   const CkaRunOptions& options = {});

// Pairs with either word unresolved are dropped; needs >= 2 kept pairs.
CkaResult bilingual_correspondence(const StoreSet& src, const StoreSet& tgt,
                                   std::span<const std::pair<std::string, std::string>> pairs,
                                   const ContextMode& mode, SpecialPolicy policy,
                                   CorrespondenceShape shape = CorrespondenceShape::kSameLayer,
                                   const CkaRunOptions& options = {});

// Source words are the first n_pairs of source_words; each is paired with a
// target word drawn uniformly with replacement from target_vocabulary using
// mt19937_64(seed). Requires both lists to hold >= n_pairs words.
std::vector<std::pair<std::string, std::string>> sample_random_pairs(std::span<const std::string> source_words,
                                                                     std::span<const std::string> target_vocabulary,
                                                                     std::size_t n_pairs, std::uint64_t seed);

CkaResult random_pair_baseline(const StoreSet& src, const StoreSet& tgt, std::span<const std::string> source_words,
                               std::span<const std::string> target_vocabulary, std::size_t n_pairs,
                               std::uint64_t seed, const ContextMode& mode, SpecialPolicy policy,
                               CorrespondenceShape shape = CorrespondenceShape::kSameLayer,
                               const CkaRunOptions& options = {});

// CKA between two type-level matrices on rows aligned by (src word, tgt
// word) pairs; pairs with an OOV side are skipped.
struct MatrixCorrespondence {
  double cka = 0.0;
  std::size_t pairs_used = 0;
};
MatrixCorrespondence matrix_correspondence(const TypeEmbeddingMatrix& src, const TypeEmbeddingMatrix& tgt,
                                           std::span<const std::pair<std::string, std::string>> pairs,
                                           const numerics::CkaOptions& options = {});

// Spearman correlation of per-depth CKA scores with per-depth BLI scores.
double correlate_cka_with_bli(std::span<const double> cka_per_n, std::span<const double> bli_per_n);

}  // namespace lexprobe

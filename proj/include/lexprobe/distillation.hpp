#pragma once

// Turns per-occurrence, per-layer token vectors into one static vector per
// word. Three independent choices define an extraction:
//   context  ISO (word encoded alone) or AOC-M (mean over M corpus contexts)
//   policy   which tokens enter the subword mean (NOSPEC / ALL / WITHCLS)
//   layers   SINGLE(n), AVG_LE(n) (layers 0..n) or AVG_GE(n) (layers n..top)
// All reductions accumulate in double in a fixed order and round to float
// only when a matrix row is stored.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "lexprobe/embedding_matrix.hpp"
#include "lexprobe/token_store.hpp"
#include "lexprobe/vocabulary.hpp"

namespace lexprobe {

enum class SpecialPolicy { kNoSpec, kAll, kWithCls };

struct ContextMode {
  enum class Kind { kIso, kAoc };
  Kind kind = Kind::kIso;
  std::size_t max_contexts = 1;  // M, meaningful for AOC only

  static ContextMode iso() { return {Kind::kIso, 1}; }
  static ContextMode aoc(std::size_t m);

  bool is_aoc() const noexcept { return kind == Kind::kAoc; }
  bool operator==(const ContextMode&) const = default;
};

struct LayerScheme {
  enum class Kind { kAvgLe, kSingle, kAvgGe };
  Kind kind = Kind::kSingle;
  std::size_t layer = 0;

  static LayerScheme single(std::size_t n) { return {Kind::kSingle, n}; }
  static LayerScheme avg_le(std::size_t n) { return {Kind::kAvgLe, n}; }
  static LayerScheme avg_ge(std::size_t n) { return {Kind::kAvgGe, n}; }

  bool operator==(const LayerScheme&) const = default;
};

struct ExtractionConfig {
  SourceKind source = SourceKind::kMono;
  ContextMode context;
  SpecialPolicy policy = SpecialPolicy::kNoSpec;
  LayerScheme layers;

  bool operator==(const ExtractionConfig&) const = default;
};

// The store a configuration reads from, plus the isolated-word store used
// for words without corpus occurrences. AOC extraction requires `backoff`.
struct StoreSet {
  StoreHandle primary;
  StoreHandle backoff;
};

// [num_layers x dim] doubles, layer-major.
struct LayerVectors {
  std::size_t num_layers = 0;
  std::size_t dim = 0;
  std::vector<double> data;

  LayerVectors() = default;
  LayerVectors(std::size_t layers, std::size_t d) : num_layers(layers), dim(d), data(layers * d, 0.0) {}

  std::span<double> row(std::size_t layer) { return {data.data() + layer * dim, dim}; }
  std::span<const double> row(std::size_t layer) const { return {data.data() + layer * dim, dim}; }
};

// Mean of the policy-selected token vectors at every layer, summed in token
// order. Throws kEmptySelection when no token is selected.
LayerVectors pool_subwords(const OccurrenceRecord& record, SpecialPolicy policy);

struct AggregatedWord {
  LayerVectors vectors;
  bool backed_off = false;
  std::size_t contexts_used = 0;
};

// ISO: pooling of the single isolated record (the first one stored).
// AOC(M): mean of pooled vectors over the first min(M, available) stored
// occurrences; with no occurrences the ISO result from `stores.backoff` is
// returned unchanged and flagged.
AggregatedWord aggregate_contexts(std::string_view word, const StoreSet& stores,
                                  const ContextMode& mode, SpecialPolicy policy);

// Mean of the selected layer rows, ascending layer order.
std::vector<double> combine_layers(const LayerVectors& per_layer, const LayerScheme& scheme);

struct BuildOptions {
  std::size_t workers = 1;
};

// Row i = combine_layers(aggregate_contexts(vocab[i])). Words that cannot be
// resolved are collected and reported together in one kNotFound error.
TypeEmbeddingMatrix build_matrix(const Vocabulary& vocab, const StoreSet& stores,
                                 const ExtractionConfig& config, const BuildOptions& options = {});

// Per-layer SINGLE(n) matrices, one float matrix per layer with row i
// belonging to words[i]. Words that cannot be resolved keep a zero row and
// resolved[i] == 0; callers decide whether to drop them.
struct LayerStack {
  std::vector<std::uint8_t> resolved;
  std::vector<Eigen::MatrixXf> layers;  // each words.size() x dim

  std::size_t resolved_count() const;
};

LayerStack build_layer_stack(std::span<const std::string> words, const StoreSet& stores,
                             const ContextMode& mode, SpecialPolicy policy,
                             const BuildOptions& options = {});

}  // namespace lexprobe

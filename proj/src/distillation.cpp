#include "lexprobe/distillation.hpp"

#include "lexprobe/config_id.hpp"
#include "lexprobe/error.hpp"
#include "lexprobe/parallel.hpp"

namespace lexprobe {

ContextMode ContextMode::aoc(std::size_t m) {
  if (m == 0) fail(ErrorKind::kInvalidArgument, "AOC needs a positive context count");
  return {Kind::kAoc, m};
}

namespace {

bool selected(TokenFlag flag, SpecialPolicy policy) {
  switch (policy) {
    case SpecialPolicy::kNoSpec: return flag == TokenFlag::kContent;
    case SpecialPolicy::kAll: return true;
    case SpecialPolicy::kWithCls: return flag != TokenFlag::kSep;
  }
  return false;
}

LayerVectors pool_first(const TokenStore& store, std::string_view word, SpecialPolicy policy) {
  const auto records = store.read_occurrences(word, 1);
  return pool_subwords(records.front(), policy);
}

}  // namespace

LayerVectors pool_subwords(const OccurrenceRecord& record, SpecialPolicy policy) {
  const std::size_t tokens = record.token_count();
  if (record.vectors.size() != record.num_layers * tokens * record.dim) {
    fail(ErrorKind::kDimensionMismatch, "record for '" + record.word + "' is malformed");
  }
  std::size_t count = 0;
  for (TokenFlag f : record.flags) count += selected(f, policy) ? 1 : 0;
  if (count == 0) {
    fail(ErrorKind::kEmptySelection, "no tokens selected by policy " +
                                         std::string(to_string(policy)) + " for '" + record.word + "'");
  }
  LayerVectors out(record.num_layers, record.dim);
  for (std::size_t layer = 0; layer < record.num_layers; ++layer) {
    auto acc = out.row(layer);
    for (std::size_t t = 0; t < tokens; ++t) {
      if (!selected(record.flags[t], policy)) continue;
      const auto v = record.token_vector(layer, t);
      for (std::size_t k = 0; k < record.dim; ++k) acc[k] += v[k];
    }
    for (double& x : acc) x /= static_cast<double>(count);
  }
  return out;
}

AggregatedWord aggregate_contexts(std::string_view word, const StoreSet& stores,
                                  const ContextMode& mode, SpecialPolicy policy) {
  if (!stores.primary) fail(ErrorKind::kInvalidArgument, "no store given");
  AggregatedWord result;
  if (!mode.is_aoc()) {
    if (!stores.primary->contains(word)) {
      fail(ErrorKind::kNotFound, "word '" + std::string(word) + "' not in ISO store");
    }
    result.vectors = pool_first(*stores.primary, word, policy);
    result.contexts_used = 1;
    return result;
  }

  if (!stores.backoff) {
    fail(ErrorKind::kInvalidArgument, "AOC extraction requires an ISO back-off store");
  }
  if (!stores.primary->contains(word)) {
    if (!stores.backoff->contains(word)) {
      fail(ErrorKind::kNotFound, "word '" + std::string(word) + "' in neither AOC nor ISO store");
    }
    result.vectors = pool_first(*stores.backoff, word, policy);
    result.backed_off = true;
    result.contexts_used = 0;
    return result;
  }

  const auto records = stores.primary->read_occurrences(word, mode.max_contexts);
  const auto& first = records.front();
  result.vectors = LayerVectors(first.num_layers, first.dim);
  for (const auto& record : records) {
    const LayerVectors pooled = pool_subwords(record, policy);
    for (std::size_t i = 0; i < pooled.data.size(); ++i) result.vectors.data[i] += pooled.data[i];
  }
  const auto n = static_cast<double>(records.size());
  for (double& x : result.vectors.data) x /= n;
  result.contexts_used = records.size();
  return result;
}

std::vector<double> combine_layers(const LayerVectors& per_layer, const LayerScheme& scheme) {
  if (scheme.layer >= per_layer.num_layers) {
    fail(ErrorKind::kOutOfRange, "layer " + std::to_string(scheme.layer) + " out of range for " +
                                     std::to_string(per_layer.num_layers) + " layers");
  }
  std::size_t first = scheme.layer;
  std::size_t last = scheme.layer;
  if (scheme.kind == LayerScheme::Kind::kAvgLe) first = 0;
  if (scheme.kind == LayerScheme::Kind::kAvgGe) last = per_layer.num_layers - 1;

  std::vector<double> out(per_layer.dim, 0.0);
  for (std::size_t layer = first; layer <= last; ++layer) {
    const auto row = per_layer.row(layer);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += row[k];
  }
  const auto n = static_cast<double>(last - first + 1);
  for (double& x : out) x /= n;
  return out;
}

TypeEmbeddingMatrix build_matrix(const Vocabulary& vocab, const StoreSet& stores,
                                 const ExtractionConfig& config, const BuildOptions& options) {
  if (!stores.primary) fail(ErrorKind::kInvalidArgument, "no store given");
  if (config.context.is_aoc() && !stores.backoff) {
    fail(ErrorKind::kInvalidArgument, "AOC configuration requires an ISO back-off store");
  }
  const std::size_t num_layers = stores.primary->num_layers();
  const std::size_t dim = stores.primary->dim();
  if (stores.backoff &&
      (stores.backoff->num_layers() != num_layers || stores.backoff->dim() != dim)) {
    fail(ErrorKind::kDimensionMismatch, "back-off store shape differs from the primary store");
  }
  if (config.layers.layer >= num_layers) {
    fail(ErrorKind::kOutOfRange, "layer " + std::to_string(config.layers.layer) +
                                     " out of range for " + std::to_string(num_layers) + " layers");
  }

  std::vector<float> data(vocab.size() * dim, 0.0f);
  std::vector<std::uint8_t> backed_off(vocab.size(), 0);
  std::vector<std::uint8_t> missing(vocab.size(), 0);
  parallel_for(vocab.size(), options.workers, [&](std::size_t i) {
    AggregatedWord agg;
    try {
      agg = aggregate_contexts(vocab[i], stores, config.context, config.policy);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kNotFound) throw;
      missing[i] = 1;
      return;
    }
    const auto row = combine_layers(agg.vectors, config.layers);
    for (std::size_t k = 0; k < dim; ++k) data[i * dim + k] = static_cast<float>(row[k]);
    backed_off[i] = agg.backed_off ? 1 : 0;
  });

  std::string missing_list;
  std::size_t missing_count = 0;
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    if (!missing[i]) continue;
    ++missing_count;
    if (!missing_list.empty()) missing_list += ", ";
    missing_list += vocab[i];
  }
  if (missing_count > 0) {
    fail(ErrorKind::kNotFound, std::to_string(missing_count) +
                                   " vocabulary word(s) unresolvable: " + missing_list);
  }

  MatrixProvenance prov;
  prov.config_id = to_config_id(config);
  prov.model_id = stores.primary->header().model_id;
  return TypeEmbeddingMatrix(vocab, dim, std::move(data), std::move(prov), std::move(backed_off));
}

std::size_t LayerStack::resolved_count() const {
  std::size_t n = 0;
  for (auto r : resolved) n += r != 0;
  return n;
}

LayerStack build_layer_stack(std::span<const std::string> words, const StoreSet& stores,
                             const ContextMode& mode, SpecialPolicy policy,
                             const BuildOptions& options) {
  if (!stores.primary) fail(ErrorKind::kInvalidArgument, "no store given");
  if (mode.is_aoc() && !stores.backoff) {
    fail(ErrorKind::kInvalidArgument, "AOC extraction requires an ISO back-off store");
  }
  const std::size_t num_layers = stores.primary->num_layers();
  const auto rows = static_cast<Eigen::Index>(words.size());
  const auto dim = static_cast<Eigen::Index>(stores.primary->dim());
  LayerStack stack;
  stack.resolved.assign(words.size(), 0);
  stack.layers.assign(num_layers, Eigen::MatrixXf::Zero(rows, dim));
  parallel_for(words.size(), options.workers, [&](std::size_t i) {
    AggregatedWord agg;
    try {
      agg = aggregate_contexts(words[i], stores, mode, policy);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kNotFound) throw;
      return;
    }
    stack.resolved[i] = 1;
    for (std::size_t layer = 0; layer < num_layers; ++layer) {
      const auto row = combine_layers(agg.vectors, LayerScheme::single(layer));
      for (Eigen::Index k = 0; k < dim; ++k) {
        stack.layers[layer](static_cast<Eigen::Index>(i), k) = static_cast<float>(row[k]);
      }
    }
  });
  return stack;
}

}  // namespace lexprobe

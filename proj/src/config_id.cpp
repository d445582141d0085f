#include "lexprobe/config_id.hpp"

#include <charconv>

#include "lexprobe/error.hpp"
#include "lexprobe/text.hpp"

namespace lexprobe {
namespace {

std::optional<std::size_t> parse_count(std::string_view s) {
  if (s.empty() || s.size() > 9) return std::nullopt;
  std::size_t value = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return value;
}

[[noreturn]] void bad_segment(std::string_view id, std::string_view segment, const std::string& why) {
  fail(ErrorKind::kParse, "config id '" + std::string(id) + "': bad segment '" +
                              std::string(segment) + "' (" + why + ")");
}

}  // namespace

const char* to_string(SpecialPolicy policy) {
  switch (policy) {
    case SpecialPolicy::kNoSpec: return "nospec";
    case SpecialPolicy::kAll: return "all";
    case SpecialPolicy::kWithCls: return "withcls";
  }
  return "?";
}

std::string to_layer_id(const LayerScheme& scheme) {
  const std::string n = std::to_string(scheme.layer);
  switch (scheme.kind) {
    case LayerScheme::Kind::kAvgLe: return "avg_le" + n;
    case LayerScheme::Kind::kSingle: return "l" + n;
    case LayerScheme::Kind::kAvgGe: return "avg_ge" + n;
  }
  return "?";
}

std::string to_family_id(const ExtractionConfig& config) {
  std::string id = config.source == SourceKind::kMono ? "mono" : "multi";
  id += config.context.is_aoc() ? ".aoc-" + std::to_string(config.context.max_contexts) : ".iso";
  id += '.';
  id += to_string(config.policy);
  return id;
}

std::string to_config_id(const ExtractionConfig& config) {
  return to_family_id(config) + "." + to_layer_id(config.layers);
}

ExtractionConfig parse_config_id(std::string_view id, std::optional<std::size_t> num_layers) {
  const auto segments = text::split(id, '.');
  if (segments.size() != 4) {
    fail(ErrorKind::kParse, "config id '" + std::string(id) +
                                "' must have 4 dot-separated segments: source.context.policy.layers");
  }
  ExtractionConfig config;

  if (segments[0] == "mono") {
    config.source = SourceKind::kMono;
  } else if (segments[0] == "multi") {
    config.source = SourceKind::kMulti;
  } else {
    bad_segment(id, segments[0], "expected mono or multi");
  }

  if (segments[1] == "iso") {
    config.context = ContextMode::iso();
  } else if (segments[1].starts_with("aoc-")) {
    const auto m = parse_count(segments[1].substr(4));
    if (!m || *m == 0) bad_segment(id, segments[1], "AOC needs a positive context count");
    config.context = ContextMode::aoc(*m);
  } else {
    bad_segment(id, segments[1], "expected iso or aoc-M");
  }

  if (segments[2] == "nospec") {
    config.policy = SpecialPolicy::kNoSpec;
  } else if (segments[2] == "all") {
    config.policy = SpecialPolicy::kAll;
  } else if (segments[2] == "withcls") {
    config.policy = SpecialPolicy::kWithCls;
  } else {
    bad_segment(id, segments[2], "expected nospec, all or withcls");
  }

  const std::string_view layers = segments[3];
  std::optional<std::size_t> n;
  if (layers.starts_with("avg_le")) {
    config.layers.kind = LayerScheme::Kind::kAvgLe;
    n = parse_count(layers.substr(6));
  } else if (layers.starts_with("avg_ge")) {
    config.layers.kind = LayerScheme::Kind::kAvgGe;
    n = parse_count(layers.substr(6));
  } else if (layers.starts_with("l")) {
    config.layers.kind = LayerScheme::Kind::kSingle;
    n = parse_count(layers.substr(1));
  } else {
    bad_segment(id, layers, "expected avg_leN, lN or avg_geN");
  }
  if (!n) bad_segment(id, layers, "layer index is not a number");
  if (num_layers && *n >= *num_layers) {
    bad_segment(id, layers, "layer index out of range for " + std::to_string(*num_layers) + " layers");
  }
  config.layers.layer = *n;
  return config;
}

}  // namespace lexprobe

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "lexprobe/distillation.hpp"

namespace lexprobe {

const char* to_string(SpecialPolicy policy);

// Canonical dotted id: source.context.policy.layers, e.g.
// "mono.aoc-100.nospec.avg_le8", "multi.iso.all.l0", "mono.iso.withcls.avg_ge2".
std::string to_config_id(const ExtractionConfig& config);

// Segment "layers" alone, e.g. "avg_le8".
std::string to_layer_id(const LayerScheme& scheme);

// Config id without the layer segment, e.g. "mono.aoc-100.nospec".
std::string to_family_id(const ExtractionConfig& config);

// Parses a config id. When num_layers is given the layer index must be below
// it. Errors are kParse and name the offending segment.
ExtractionConfig parse_config_id(std::string_view id,
                                 std::optional<std::size_t> num_layers = std::nullopt);

}  // namespace lexprobe

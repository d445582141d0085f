#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace lexprobe::text {

// Lowercases ASCII, Latin-1, Latin Extended-A, Greek and Cyrillic code
// points. Other code points and malformed bytes pass through unchanged.
std::string lowercase(std::string_view s);

// Retrieval tokenizer: lowercase, then split on whitespace and ASCII
// punctuation. Non-ASCII bytes are treated as word characters, so accented
// and Cyrillic words stay intact.
std::vector<std::string> tokenize(std::string_view s);

std::string_view trim(std::string_view s);

// Splits on any run of spaces/tabs; empty fields are dropped.
std::vector<std::string_view> split_whitespace(std::string_view s);

// Splits on a single delimiter, keeping empty fields.
std::vector<std::string_view> split(std::string_view s, char delimiter);

// Shortest decimal form that parses back to the same double.
std::string format_double(double value);

}  // namespace lexprobe::text

#include "lexprobe/vocabulary.hpp"

#include <fstream>

#include "lexprobe/error.hpp"
#include "lexprobe/text.hpp"

namespace lexprobe {

Vocabulary::Vocabulary(std::vector<std::string> words) {
  words_.reserve(words.size());
  lookup_.reserve(words.size());
  for (auto& w : words) {
    std::string lowered = text::lowercase(w);
    if (lowered.empty()) fail(ErrorKind::kInvalidArgument, "empty vocabulary word");
    const auto [it, inserted] = lookup_.emplace(lowered, words_.size());
    if (!inserted) fail(ErrorKind::kDuplicate, "duplicate vocabulary word: " + lowered);
    words_.push_back(std::move(lowered));
  }
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open vocabulary file: " + path.string());
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    const auto fields = text::split_whitespace(line);
    if (fields.empty()) continue;
    words.emplace_back(fields.front());
  }
  return Vocabulary(std::move(words));
}

std::optional<std::size_t> Vocabulary::find(std::string_view word) const {
  auto it = lookup_.find(text::lowercase(word));
  if (it == lookup_.end()) return std::nullopt;
  return it->second;
}

}  // namespace lexprobe

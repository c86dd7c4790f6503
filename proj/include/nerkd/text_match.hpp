#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nerkd/corpus.hpp"
#include "nerkd/unicode.hpp"

namespace nerkd {

// A sentence's tokens with their case-folded forms computed once.
class TokenIndex {
 public:
  explicit TokenIndex(const std::vector<std::string>& tokens) : tokens_(tokens) {
    folded_.reserve(tokens.size());
    for (const auto& t : tokens) folded_.push_back(unicode::fold(t));
  }

  const std::vector<std::string>& tokens() const { return tokens_; }
  std::size_t size() const { return tokens_.size(); }

  // First occurrence of `needle` as a run of consecutive tokens starting at
  // or after `from`.
  std::optional<Span> find(const std::vector<std::string>& needle,
                           std::size_t from, bool case_insensitive) const {
    if (needle.empty() || needle.size() > tokens_.size()) return std::nullopt;
    std::vector<std::string> folded_needle;
    if (case_insensitive)
      for (const auto& n : needle) folded_needle.push_back(unicode::fold(n));
    const auto& hay = case_insensitive ? folded_ : tokens_;
    const auto& pat = case_insensitive ? folded_needle : needle;
    for (std::size_t i = from; i + pat.size() <= hay.size(); ++i) {
      bool ok = true;
      for (std::size_t k = 0; k < pat.size() && ok; ++k) ok = hay[i + k] == pat[k];
      if (ok)
        return Span{static_cast<int>(i), static_cast<int>(i + pat.size() - 1)};
    }
    return std::nullopt;
  }

  // Greedy left-to-right non-overlapping occurrences.
  std::vector<Span> find_all(const std::vector<std::string>& needle,
                             bool case_insensitive) const {
    std::vector<Span> out;
    std::size_t from = 0;
    while (auto s = find(needle, from, case_insensitive)) {
      out.push_back(*s);
      from = static_cast<std::size_t>(s->end) + 1;
    }
    return out;
  }

 private:
  std::vector<std::string> tokens_;
  std::vector<std::string> folded_;
};

}  // namespace nerkd

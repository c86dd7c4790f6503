#pragma once

// Parsing and repair of the dictionary answer format, e.g.
//   Step 1 ... Step 4 ... {'ORG': ['Houston Astros'], 'LOC': 'Houston'}
// The last balanced {...} in the text is the answer. Keys and strings may be
// single- or double-quoted; a value is a string, a list of strings, or None.
// Inside a list, a nested list groups the fragments of one discontinuous
// entity; so does a bare string following a value ({'X': 'a b', 'c d'}).

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "nerkd/corpus.hpp"
#include "nerkd/record.hpp"
#include "nerkd/text_match.hpp"
#include "nerkd/unicode.hpp"

namespace nerkd {

struct ParsedOutput {
  std::vector<RawPair> pairs;
  std::vector<std::string> notes;
  bool rejected = false;
};

namespace detail {

inline void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && unicode::is_space(s[b])) ++b;
  while (e > b && unicode::is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

class DictReader {
 public:
  struct Entry {
    std::string key;
    std::vector<std::vector<std::string>> items;  // each item: fragments
  };

  explicit DictReader(std::string_view text) : s_(text) {}

  // Throws ParseError on malformed input.
  std::vector<Entry> read() {
    std::vector<Entry> entries;
    expect('{');
    while (true) {
      skip_ws();
      if (peek() == '}') {
        ++pos_;
        break;
      }
      std::string key;
      bool quoted = is_quote(peek());
      key = quoted ? read_string() : read_bare_key();
      skip_ws();
      if (peek() == ':') {
        ++pos_;
        skip_ws();
        entries.push_back({trim(key), read_value()});
      } else if (quoted && (peek() == ',' || peek() == '}')) {
        // Bare string after an entry: another fragment of the previous value.
        if (entries.empty() || entries.back().items.empty())
          fail("string without a key");
        entries.back().items.back().push_back(key);
      } else {
        fail("expected ':' after key");
      }
      skip_ws();
      if (peek() == ',') {
        ++pos_;
      } else if (peek() != '}') {
        fail("expected ',' or '}'");
      }
    }
    skip_ws();
    if (pos_ != s_.size()) fail("trailing characters after dict");
    return entries;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError("malformed output dict: " + what + " at offset " +
                     std::to_string(pos_));
  }

  char peek() const { return pos_ < s_.size() ? s_[pos_] : '\0'; }
  static bool is_quote(char c) { return c == '\'' || c == '"'; }

  void skip_ws() {
    while (pos_ < s_.size() && unicode::is_space(s_[pos_])) ++pos_;
  }

  void expect(char c) {
    skip_ws();
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  // A quote closes the string only if the next non-space character is a
  // structural one; otherwise it is an apostrophe inside the surface.
  bool closes_here(std::size_t i) const {
    std::size_t j = i + 1;
    while (j < s_.size() && unicode::is_space(s_[j])) ++j;
    if (j == s_.size()) return true;
    char c = s_[j];
    return c == ',' || c == ']' || c == '}' || c == ':' || c == ')';
  }

  std::string read_string() {
    const char q = s_[pos_++];
    std::string out;
    while (true) {
      if (pos_ >= s_.size()) fail("unterminated string");
      char c = s_[pos_];
      if (c == '\\' && pos_ + 1 < s_.size()) {
        char e = s_[pos_ + 1];
        pos_ += 2;
        switch (e) {
          case 'n': out += '\n'; break;
          case 't': out += '\t'; break;
          case 'r': out += '\r'; break;
          case 'u': {
            if (pos_ + 4 > s_.size()) fail("short \\u escape");
            std::uint32_t cp = std::stoul(std::string(s_.substr(pos_, 4)), nullptr, 16);
            pos_ += 4;
            append_utf8(out, cp);
            break;
          }
          default: out += e;
        }
        continue;
      }
      if (c == q && closes_here(pos_)) {
        ++pos_;
        return out;
      }
      out += c;
      ++pos_;
    }
  }

  std::string read_bare_key() {
    std::size_t start = pos_;
    while (pos_ < s_.size() && s_[pos_] != ':' && s_[pos_] != ',' &&
           s_[pos_] != '}' && s_[pos_] != '\n')
      ++pos_;
    std::string key = trim(s_.substr(start, pos_ - start));
    if (key.empty()) fail("empty key");
    return key;
  }

  bool read_keyword_none() {
    for (std::string_view kw : {"None", "null", "none"}) {
      if (s_.substr(pos_, kw.size()) == kw) {
        pos_ += kw.size();
        return true;
      }
    }
    return false;
  }

  std::vector<std::string> read_group(char close) {
    std::vector<std::string> frags;
    ++pos_;
    while (true) {
      skip_ws();
      if (peek() == close) {
        ++pos_;
        return frags;
      }
      if (!is_quote(peek())) fail("expected string in group");
      frags.push_back(read_string());
      skip_ws();
      if (peek() == ',') ++pos_;
      else if (peek() != close) fail("expected ',' in group");
    }
  }

  std::vector<std::vector<std::string>> read_value() {
    std::vector<std::vector<std::string>> items;
    char c = peek();
    if (is_quote(c)) {
      items.push_back({read_string()});
      return items;
    }
    if (read_keyword_none()) return items;
    if (c != '[' && c != '(') fail("expected string, list or None");
    const char close = c == '[' ? ']' : ')';
    ++pos_;
    while (true) {
      skip_ws();
      if (peek() == close) {
        ++pos_;
        return items;
      }
      if (is_quote(peek())) {
        items.push_back({read_string()});
      } else if (peek() == '[' || peek() == '(') {
        items.push_back(read_group(peek() == '[' ? ']' : ')'));
      } else {
        fail("expected string in list");
      }
      skip_ws();
      if (peek() == ',') ++pos_;
      else if (peek() != close) fail("expected ',' in list");
    }
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

}  // namespace detail

// Locates the last balanced {...} region. Returns nullopt with a note when
// none exists or the braces do not balance.
inline std::optional<std::string_view> find_last_dict(std::string_view text,
                                                      std::string& note) {
  const std::size_t close = text.rfind('}');
  const std::size_t last_open = text.rfind('{');
  if (close == std::string_view::npos) {
    note = last_open == std::string_view::npos ? "no output dict found"
                                               : "unbalanced braces in output dict";
    return std::nullopt;
  }
  if (last_open != std::string_view::npos && last_open > close) {
    note = "unbalanced braces in output dict";
    return std::nullopt;
  }
  int depth = 0;
  for (std::size_t i = close + 1; i-- > 0;) {
    if (text[i] == '}') ++depth;
    if (text[i] == '{' && --depth == 0) return text.substr(i, close - i + 1);
  }
  note = "unbalanced braces in output dict";
  return std::nullopt;
}

inline ParsedOutput parse_llm_output(std::string_view raw_text,
                                     const LabelSet& labels = default_labels()) {
  ParsedOutput out;
  std::string note;
  auto region = find_last_dict(raw_text, note);
  if (!region) {
    out.rejected = true;
    out.notes.push_back(note);
    return out;
  }
  std::vector<detail::DictReader::Entry> entries;
  try {
    entries = detail::DictReader(*region).read();
  } catch (const ParseError& e) {
    out.rejected = true;
    out.notes.push_back(e.what());
    return out;
  }

  // Merge duplicate keys into the first occurrence, normalize label case.
  std::vector<detail::DictReader::Entry> merged;
  for (auto& e : entries) {
    for (const auto& l : labels) {
      if (l != e.key && unicode::equal_folded(l, e.key)) {
        out.notes.push_back("label '" + e.key + "' normalized to '" + l + "'");
        e.key = l;
        break;
      }
    }
    auto it = std::find_if(merged.begin(), merged.end(),
                           [&](const auto& m) { return m.key == e.key; });
    if (it == merged.end()) {
      merged.push_back(std::move(e));
    } else {
      out.notes.push_back("duplicate key '" + e.key + "' merged");
      for (auto& item : e.items) it->items.push_back(std::move(item));
    }
  }

  int group = 0;
  for (const auto& e : merged) {
    for (const auto& item : e.items) {
      bool any = false;
      for (const auto& frag : item) {
        std::string surface = detail::trim(frag);
        if (surface.empty()) {
          out.notes.push_back("empty surface under '" + e.key + "' dropped");
          continue;
        }
        out.pairs.push_back({e.key, std::move(surface), group});
        any = true;
      }
      if (any) ++group;
    }
  }
  return out;
}

// Canonical dict text for a pair list: labels in first-appearance order,
// single-quoted strings, fragment groups as nested lists.
inline std::string print_dict(const std::vector<RawPair>& pairs) {
  auto quote = [](const std::string& s) {
    std::string q = "'";
    for (char c : s) {
      if (c == '\\' || c == '\'') q += '\\';
      q += c;
    }
    return q + "'";
  };
  std::vector<std::string> order;
  for (const auto& p : pairs)
    if (std::find(order.begin(), order.end(), p.label) == order.end())
      order.push_back(p.label);
  std::string out = "{";
  for (std::size_t li = 0; li < order.size(); ++li) {
    if (li) out += ", ";
    out += quote(order[li]) + ": [";
    bool first = true;
    for (std::size_t i = 0; i < pairs.size();) {
      if (pairs[i].label != order[li]) {
        ++i;
        continue;
      }
      std::size_t j = i + 1;
      while (j < pairs.size() && pairs[j].group == pairs[i].group &&
             pairs[j].label == pairs[i].label)
        ++j;
      if (!first) out += ", ";
      first = false;
      if (j - i == 1) {
        out += quote(pairs[i].surface);
      } else {
        out += "[";
        for (std::size_t k = i; k < j; ++k) {
          if (k > i) out += ", ";
          out += quote(pairs[k].surface);
        }
        out += "]";
      }
      i = j;
    }
    out += "]";
  }
  return out + "}";
}

struct RepairPolicy {
  LabelSet labels = default_labels();
  bool case_insensitive = true;
};

struct RepairResult {
  std::vector<RawPair> pairs;
  std::vector<std::string> notes;
};

// Ordered rules: drop unknown labels; NFC surfaces; accept a verbatim token
// match, else a case-insensitive one (rewritten to the source casing); drop
// anything still not found in the sentence.
inline RepairResult repair_output(const std::vector<RawPair>& pairs,
                                  const Sentence& sentence,
                                  const RepairPolicy& policy = {}) {
  RepairResult out;
  const TokenIndex index(sentence.tokens);
  for (const auto& p : pairs) {
    if (!contains_label(policy.labels, p.label)) {
      out.notes.push_back("unknown label '" + p.label + "': dropped '" +
                          p.surface + "'");
      continue;
    }
    RawPair q = p;
    q.surface = unicode::nfc(p.surface);
    const auto words = unicode::split_ws(q.surface);
    if (index.find(words, 0, false)) {
      out.pairs.push_back(std::move(q));
      continue;
    }
    if (policy.case_insensitive) {
      if (auto span = index.find(words, 0, true)) {
        std::string fixed = span_text(sentence.tokens, *span);
        out.notes.push_back("case repair: " + q.label + " '" + q.surface +
                            "' -> '" + fixed + "'");
        q.surface = std::move(fixed);
        out.pairs.push_back(std::move(q));
        continue;
      }
    }
    out.notes.push_back("hallucinated surface: " + q.label + " '" + q.surface +
                        "' dropped");
  }
  return out;
}

}  // namespace nerkd

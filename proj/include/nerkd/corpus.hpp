#pragma once

// Token-level NER corpora: CoNLL 2003 reading/writing, IOB1/IOB2 conversion,
// span <-> tag conversion, seeded sampling and the JSONL sidecar format.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "nerkd/error.hpp"
#include "nerkd/random.hpp"
#include "nerkd/unicode.hpp"

namespace nerkd {

using LabelSet = std::vector<std::string>;

inline LabelSet default_labels() { return {"LOC", "ORG", "PER", "MISC"}; }

inline bool contains_label(const LabelSet& labels, std::string_view label) {
  return std::find(labels.begin(), labels.end(), label) != labels.end();
}

enum class Source { conll_train, conll_test, bbc, other };

inline std::string to_string(Source s) {
  switch (s) {
    case Source::conll_train: return "conll-train";
    case Source::conll_test: return "conll-test";
    case Source::bbc: return "bbc";
    case Source::other: return "other";
  }
  return "other";
}

inline Source source_from_string(std::string_view s) {
  if (s == "conll-train") return Source::conll_train;
  if (s == "conll-test") return Source::conll_test;
  if (s == "bbc") return Source::bbc;
  if (s == "other") return Source::other;
  throw InvalidArgument("unknown corpus source '" + std::string(s) + "'");
}

enum class TagScheme { iob1, iob2 };

inline TagScheme scheme_from_string(std::string_view s) {
  if (s == "iob1" || s == "IOB1") return TagScheme::iob1;
  if (s == "iob2" || s == "IOB2" || s == "bio" || s == "BIO")
    return TagScheme::iob2;
  throw InvalidArgument("unknown tag scheme '" + std::string(s) + "'");
}

struct Sentence {
  std::string id;
  std::vector<std::string> tokens;
  std::optional<std::vector<std::string>> gold_tags;
  Source source = Source::other;
  std::optional<std::string> doc_id;
  // Columns between the token and the NER tag (POS, chunk), kept verbatim
  // per token so that writing reproduces the input. Empty when unknown.
  std::vector<std::vector<std::string>> columns;

  std::string text() const { return unicode::join(tokens); }
};

// Inclusive token range.
struct Span {
  int start = 0;
  int end = 0;

  int length() const { return end - start + 1; }
  friend bool operator==(const Span&, const Span&) = default;
  friend auto operator<=>(const Span&, const Span&) = default;
};

// A typed entity. One span is a contiguous mention, several spans a
// discontinuous one. Nesting is never represented inside a mention.
struct EntityMention {
  std::string etype;
  std::vector<Span> spans;
  std::vector<std::string> surfaces;  // one per span; may be empty if unknown

  bool contiguous() const { return spans.size() == 1; }
  int token_count() const {
    int n = 0;
    for (const auto& s : spans) n += s.length();
    return n;
  }
  friend bool operator==(const EntityMention&, const EntityMention&) = default;
};

// Orders by (first start, type, spans); surfaces ignored.
inline bool mention_less(const EntityMention& a, const EntityMention& b) {
  return std::tie(a.spans, a.etype) < std::tie(b.spans, b.etype);
}

inline bool same_entity(const EntityMention& a, const EntityMention& b) {
  return a.etype == b.etype && a.spans == b.spans;
}

inline std::string to_string(const EntityMention& m) {
  std::string out = m.etype + "[";
  for (std::size_t i = 0; i < m.spans.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(m.spans[i].start) + "-" +
           std::to_string(m.spans[i].end);
  }
  return out + "]";
}

inline void validate(const EntityMention& m) {
  if (m.spans.empty())
    throw InvalidArgument("mention " + m.etype + " has no spans");
  for (std::size_t i = 0; i < m.spans.size(); ++i) {
    const Span& s = m.spans[i];
    if (s.start < 0 || s.start > s.end)
      throw InvalidArgument("bad span in mention " + to_string(m));
    if (i && m.spans[i - 1].end >= s.start)
      throw InvalidArgument("spans unsorted or overlapping in " + to_string(m));
  }
  if (!m.surfaces.empty() && m.surfaces.size() != m.spans.size())
    throw InvalidArgument("surface count mismatch in " + to_string(m));
}

// Whitespace-join of the tokens covered by a span.
inline std::string span_text(const std::vector<std::string>& tokens,
                             const Span& s) {
  std::string out;
  for (int i = s.start; i <= s.end; ++i) {
    if (i > s.start) out += ' ';
    out += tokens.at(static_cast<std::size_t>(i));
  }
  return out;
}

inline void attach_surfaces(EntityMention& m,
                            const std::vector<std::string>& tokens) {
  m.surfaces.clear();
  for (const auto& s : m.spans) m.surfaces.push_back(span_text(tokens, s));
}

// ---------------------------------------------------------------------------
// Tags

struct ParsedTag {
  char prefix = 'O';  // 'O', 'B' or 'I'
  std::string type;
};

inline std::optional<ParsedTag> parse_tag(std::string_view tag) {
  if (tag == "O") return ParsedTag{};
  if (tag.size() < 3 || tag[1] != '-' || (tag[0] != 'B' && tag[0] != 'I'))
    return std::nullopt;
  return ParsedTag{tag[0], std::string(tag.substr(2))};
}

inline bool is_valid_tag(std::string_view tag, const LabelSet& labels) {
  auto p = parse_tag(tag);
  return p && (p->prefix == 'O' || contains_label(labels, p->type));
}

// I-X that does not continue an X entity starts one. Total; identity on
// valid IOB2; also used to repair stray I- tags from predictors.
inline std::vector<std::string> iob1_to_iob2(
    const std::vector<std::string>& tags) {
  std::vector<std::string> out = tags;
  std::string prev_type;
  for (auto& tag : out) {
    auto p = parse_tag(tag);
    if (!p || p->prefix == 'O') {
      prev_type.clear();
      continue;
    }
    if (p->prefix == 'I' && p->type != prev_type) tag = "B-" + p->type;
    prev_type = p->type;
  }
  return out;
}

// B-X is kept only where it separates two adjacent X entities.
inline std::vector<std::string> iob2_to_iob1(
    const std::vector<std::string>& tags) {
  std::vector<std::string> out = tags;
  std::string prev_type;
  for (auto& tag : out) {
    auto p = parse_tag(tag);
    if (!p || p->prefix == 'O') {
      prev_type.clear();
      continue;
    }
    if (p->prefix == 'B' && p->type != prev_type) tag = "I-" + p->type;
    prev_type = p->type;
  }
  return out;
}

// Maximal B-started runs of an IOB2 sequence, sorted by start. A stray I-X
// is read as the start of a run. Surfaces are left empty.
inline std::vector<EntityMention> tags_to_spans(
    const std::vector<std::string>& tags) {
  std::vector<EntityMention> out;
  std::optional<EntityMention> cur;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    auto p = parse_tag(tags[i]);
    const int pos = static_cast<int>(i);
    if (p && p->prefix == 'I' && cur && cur->etype == p->type) {
      cur->spans[0].end = pos;
      continue;
    }
    if (cur) out.push_back(std::move(*cur));
    cur.reset();
    if (p && p->prefix != 'O') cur = EntityMention{p->type, {{pos, pos}}, {}};
  }
  if (cur) out.push_back(std::move(*cur));
  return out;
}

inline std::vector<EntityMention> tags_to_mentions(
    const std::vector<std::string>& tags,
    const std::vector<std::string>& tokens) {
  auto out = tags_to_spans(tags);
  for (auto& m : out) attach_surfaces(m, tokens);
  return out;
}

inline std::vector<std::string> spans_to_tags(
    const std::vector<EntityMention>& mentions, std::size_t length) {
  std::vector<std::string> tags(length, "O");
  std::vector<const EntityMention*> owner(length, nullptr);
  for (const auto& m : mentions) {
    validate(m);
    if (m.spans.size() != 1)
      throw InvalidArgument("spans_to_tags: discontinuous mention " +
                            to_string(m) + " must be flattened first");
    const Span s = m.spans[0];
    if (static_cast<std::size_t>(s.end) >= length)
      throw InvalidArgument("mention " + to_string(m) +
                            " exceeds sentence length " +
                            std::to_string(length));
    for (int i = s.start; i <= s.end; ++i) {
      if (owner[i])
        throw InvalidArgument("overlapping mentions: " + to_string(*owner[i]) +
                              " and " + to_string(m));
      owner[i] = &m;
      tags[i] = (i == s.start ? "B-" : "I-") + m.etype;
    }
  }
  return tags;
}

// ---------------------------------------------------------------------------
// CoNLL

struct ConllOptions {
  TagScheme scheme = TagScheme::iob2;
  Source source = Source::other;
  LabelSet labels = default_labels();
};

inline std::string make_sentence_id(Source source, std::size_t ordinal) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%05zu", ordinal);
  return to_string(source) + "-" + buf;
}

inline void validate(const Sentence& s, const LabelSet& labels) {
  for (const auto& t : s.tokens)
    if (t.empty()) throw InvalidArgument("sentence " + s.id + " has an empty token");
  if (!s.gold_tags) return;
  if (s.gold_tags->size() != s.tokens.size())
    throw InvalidArgument("sentence " + s.id + ": " +
                          std::to_string(s.gold_tags->size()) + " tags for " +
                          std::to_string(s.tokens.size()) + " tokens");
  for (const auto& t : *s.gold_tags)
    if (!is_valid_tag(t, labels))
      throw InvalidArgument("sentence " + s.id + ": invalid tag '" + t + "'");
}

// Reads sentences in file order. Tags are normalized to IOB2; -DOCSTART-
// lines open a new document. Empty sentences are skipped and reported in
// `warnings` when given.
inline std::vector<Sentence> parse_conll(
    std::istream& in, const ConllOptions& opts = {},
    std::vector<std::string>* warnings = nullptr) {
  std::vector<Sentence> out;
  Sentence cur;
  std::optional<std::string> doc_id;
  std::size_t doc_count = 0;
  std::size_t line_no = 0;
  bool after_docstart = false;

  auto flush = [&] {
    if (cur.tokens.empty()) return;
    cur.id = make_sentence_id(opts.source, out.size());
    cur.source = opts.source;
    cur.doc_id = doc_id;
    if (opts.scheme == TagScheme::iob1) cur.gold_tags = iob1_to_iob2(*cur.gold_tags);
    out.push_back(std::move(cur));
    cur = Sentence{};
  };

  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto cols = unicode::split_ws(line);
    if (cols.empty()) {
      if (!cur.tokens.empty()) {
        flush();
      } else if (after_docstart) {
        after_docstart = false;
      } else if (warnings) {
        warnings->push_back("line " + std::to_string(line_no) +
                            ": empty sentence skipped");
      }
      continue;
    }
    if (cols.size() < 2)
      throw ParseError("expected at least 2 columns (token ... tag)", line_no);
    if (cols[0] == "-DOCSTART-") {
      flush();
      doc_id = to_string(opts.source) + "-doc-" + std::to_string(doc_count++);
      after_docstart = true;
      continue;
    }
    after_docstart = false;
    const std::string& tag = cols.back();
    if (!is_valid_tag(tag, opts.labels))
      throw ParseError("tag '" + tag + "' is outside the tag grammar", line_no);
    if (!cur.gold_tags) cur.gold_tags.emplace();
    cur.tokens.push_back(unicode::nfc(cols[0]));
    cur.gold_tags->push_back(tag);
    cur.columns.emplace_back(cols.begin() + 1, cols.end() - 1);
  }
  flush();
  return out;
}

inline std::vector<Sentence> parse_conll(
    std::string_view text, const ConllOptions& opts = {},
    std::vector<std::string>* warnings = nullptr) {
  std::istringstream in{std::string(text)};
  return parse_conll(in, opts, warnings);
}

// One token per line, single-space separated, blank line after every
// sentence. A -DOCSTART- block is written whenever doc_id changes.
inline void write_conll(std::ostream& out, const std::vector<Sentence>& sentences,
                        TagScheme scheme = TagScheme::iob2) {
  std::optional<std::string> prev_doc;
  for (const auto& s : sentences) {
    if (!s.gold_tags)
      throw InvalidArgument("write_conll: sentence " + s.id + " has no tags");
    if (s.gold_tags->size() != s.tokens.size())
      throw InvalidArgument("write_conll: sentence " + s.id +
                            " has mismatched tag count");
    if (s.doc_id && s.doc_id != prev_doc) {
      out << "-DOCSTART-";
      const std::size_t extra = s.columns.empty() ? 0 : s.columns[0].size();
      for (std::size_t i = 0; i < extra; ++i) out << " -X-";
      out << " O\n\n";
    }
    prev_doc = s.doc_id;
    const auto tags =
        scheme == TagScheme::iob1 ? iob2_to_iob1(*s.gold_tags) : *s.gold_tags;
    for (std::size_t i = 0; i < s.tokens.size(); ++i) {
      out << s.tokens[i];
      if (i < s.columns.size())
        for (const auto& c : s.columns[i]) out << ' ' << c;
      out << ' ' << tags[i] << '\n';
    }
    out << '\n';
  }
}

inline std::string write_conll(const std::vector<Sentence>& sentences,
                               TagScheme scheme = TagScheme::iob2) {
  std::ostringstream out;
  write_conll(out, sentences, scheme);
  return out.str();
}

// ---------------------------------------------------------------------------
// Sampling and filtering

// Uniform sample without replacement, in original order.
inline std::vector<Sentence> sample_sentences(const std::vector<Sentence>& pool,
                                              std::size_t n,
                                              std::uint64_t seed) {
  std::vector<Sentence> out;
  out.reserve(n);
  for (std::size_t i : rng::sample_indices(pool.size(), n, seed))
    out.push_back(pool[i]);
  return out;
}

// As sample_sentences, drawing only from sentences whose id is not in
// `exclude`; used for a second sample disjoint from the first.
inline std::vector<Sentence> sample_sentences_excluding(
    const std::vector<Sentence>& pool, std::size_t n, std::uint64_t seed,
    const std::unordered_set<std::string>& exclude) {
  std::vector<Sentence> rest;
  for (const auto& s : pool)
    if (!exclude.count(s.id)) rest.push_back(s);
  return sample_sentences(rest, n, seed);
}

inline std::vector<Sentence> filter_by_length(const std::vector<Sentence>& in,
                                              std::size_t min_tokens) {
  std::vector<Sentence> out;
  for (const auto& s : in)
    if (s.tokens.size() >= min_tokens) out.push_back(s);
  return out;
}

// ---------------------------------------------------------------------------
// JSONL sidecar: {id, source, tokens, gold_tags?, doc_id?}

inline nlohmann::json to_json(const Sentence& s) {
  nlohmann::json j;
  j["id"] = s.id;
  j["source"] = to_string(s.source);
  j["tokens"] = s.tokens;
  if (s.gold_tags) j["gold_tags"] = *s.gold_tags;
  if (s.doc_id) j["doc_id"] = *s.doc_id;
  return j;
}

inline Sentence sentence_from_json(const nlohmann::json& j,
                                   const LabelSet& labels = default_labels()) {
  Sentence s;
  try {
    s.id = j.at("id").get<std::string>();
    s.source = source_from_string(j.at("source").get<std::string>());
    for (const auto& t : j.at("tokens"))
      s.tokens.push_back(unicode::nfc(t.get<std::string>()));
    if (j.contains("gold_tags") && !j["gold_tags"].is_null())
      s.gold_tags = j["gold_tags"].get<std::vector<std::string>>();
    if (j.contains("doc_id") && !j["doc_id"].is_null())
      s.doc_id = j["doc_id"].get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad sentence object: ") + e.what());
  }
  validate(s, labels);
  return s;
}

inline void write_jsonl(std::ostream& out, const std::vector<Sentence>& sentences) {
  for (const auto& s : sentences) out << to_json(s).dump() << '\n';
}

inline std::vector<Sentence> read_jsonl(std::istream& in,
                                        const LabelSet& labels = default_labels()) {
  std::vector<Sentence> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (unicode::split_ws(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(e.what(), line_no);
    }
    try {
      out.push_back(sentence_from_json(j, labels));
    } catch (const Error& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  return out;
}

}  // namespace nerkd

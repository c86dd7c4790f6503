#pragma once

// Surface strings -> token spans, and nested/discontinuous mention sets ->
// one flat IOB2 sequence.

#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "nerkd/corpus.hpp"
#include "nerkd/record.hpp"
#include "nerkd/text_match.hpp"

namespace nerkd {

struct AlignmentPolicy {
  bool case_sensitive_first = true;  // false: match case-insensitively only
  bool all_occurrences = true;
  // Only longest-span-wins is defined.
  std::string flatten_rule = "longest-span-wins";
  std::vector<std::string> type_tiebreak = {"PER", "LOC", "ORG", "MISC"};
};

inline void validate(const AlignmentPolicy& p, const LabelSet& labels) {
  if (p.flatten_rule != "longest-span-wins")
    throw InvalidArgument("unknown flatten rule " + p.flatten_rule);
  std::vector<std::string> a = p.type_tiebreak, b = labels;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  if (a != b)
    throw InvalidArgument("type_tiebreak must be a permutation of the label set");
}

struct DroppedMention {
  EntityMention mention;
  std::string reason;
};

struct FlattenReport {
  std::vector<EntityMention> kept;  // flat, disjoint, sorted by start
  std::vector<DroppedMention> dropped;
  std::size_t discontinuous_split = 0;  // discontinuous inputs split apart
};

namespace detail {

inline std::vector<Span> occurrences(const TokenIndex& index,
                                     const std::vector<std::string>& words,
                                     const AlignmentPolicy& policy,
                                     std::size_t from, bool all) {
  auto run = [&](bool ci) -> std::vector<Span> {
    if (all) return index.find_all(words, ci);
    if (auto s = index.find(words, from, ci)) return {*s};
    return {};
  };
  if (policy.case_sensitive_first) {
    auto exact = run(false);
    if (!exact.empty()) return exact;
  }
  return run(true);
}

}  // namespace detail

// Matches each surface as a run of consecutive tokens. Pairs that share a
// group id form a single discontinuous mention whose fragments must occur in
// order; unmatched surfaces are omitted. Identical mentions are emitted once.
inline std::vector<EntityMention> align_surface_to_spans(
    const Sentence& sentence, const std::vector<RawPair>& pairs,
    const AlignmentPolicy& policy = {}) {
  const TokenIndex index(sentence.tokens);
  std::vector<EntityMention> out;
  auto push_unique = [&](EntityMention m) {
    for (const auto& e : out)
      if (same_entity(e, m)) return;
    out.push_back(std::move(m));
  };

  for (std::size_t i = 0; i < pairs.size();) {
    std::size_t j = i + 1;
    while (j < pairs.size() && pairs[j].group == pairs[i].group &&
           pairs[j].label == pairs[i].label)
      ++j;
    if (j - i == 1) {
      const auto words = unicode::split_ws(unicode::nfc(pairs[i].surface));
      for (const Span& s : detail::occurrences(index, words, policy, 0,
                                               policy.all_occurrences)) {
        EntityMention m{pairs[i].label, {s}, {}};
        attach_surfaces(m, sentence.tokens);
        push_unique(std::move(m));
      }
    } else {
      EntityMention m{pairs[i].label, {}, {}};
      std::size_t from = 0;
      bool ok = true;
      for (std::size_t k = i; k < j && ok; ++k) {
        const auto words = unicode::split_ws(unicode::nfc(pairs[k].surface));
        auto found = detail::occurrences(index, words, policy, from, false);
        if (found.empty()) {
          ok = false;
        } else {
          m.spans.push_back(found.front());
          from = static_cast<std::size_t>(found.front().end) + 1;
        }
      }
      if (ok) {
        attach_surfaces(m, sentence.tokens);
        push_unique(std::move(m));
      }
    }
    i = j;
  }
  std::stable_sort(out.begin(), out.end(), mention_less);
  return out;
}

// Greedy longest-span-wins: candidates ordered by (length desc, start asc,
// tiebreak rank asc) and kept when disjoint from everything kept so far.
// Discontinuous mentions compete fragment by fragment.
inline FlattenReport flatten(const std::vector<EntityMention>& mentions,
                             const AlignmentPolicy& policy = {}) {
  struct Candidate {
    EntityMention m;
    bool fragment;
  };
  FlattenReport report;
  std::vector<Candidate> cands;
  for (const auto& m : mentions) {
    if (m.spans.size() == 1) {
      cands.push_back({m, false});
      continue;
    }
    ++report.discontinuous_split;
    for (std::size_t k = 0; k < m.spans.size(); ++k) {
      EntityMention f{m.etype, {m.spans[k]}, {}};
      if (k < m.surfaces.size()) f.surfaces = {m.surfaces[k]};
      cands.push_back({std::move(f), true});
    }
  }
  auto rank = [&](const std::string& t) {
    auto it = std::find(policy.type_tiebreak.begin(), policy.type_tiebreak.end(), t);
    return static_cast<std::size_t>(it - policy.type_tiebreak.begin());
  };
  std::vector<std::size_t> order(cands.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& x = cands[a].m;
    const auto& y = cands[b].m;
    const Span sx = x.spans[0], sy = y.spans[0];
    return std::make_tuple(-sx.length(), sx.start, rank(x.etype), x.etype,
                           cands[a].fragment) <
           std::make_tuple(-sy.length(), sy.start, rank(y.etype), y.etype,
                           cands[b].fragment);
  });

  std::map<int, const EntityMention*> owner;  // token -> kept mention
  std::vector<EntityMention> kept;
  kept.reserve(cands.size());
  for (std::size_t idx : order) {
    const auto& c = cands[idx];
    const Span s = c.m.spans[0];
    const EntityMention* clash = nullptr;
    for (int t = s.start; t <= s.end && !clash; ++t)
      if (auto it = owner.find(t); it != owner.end()) clash = it->second;
    if (!clash) {
      kept.push_back(c.m);
      for (int t = s.start; t <= s.end; ++t) owner[t] = &kept.back();
      continue;
    }
    std::string reason;
    if (same_entity(*clash, c.m))
      reason = "duplicate";
    else if (clash->spans[0].length() > s.length())
      reason = "covered by longer span";
    else if (clash->spans[0] == s)
      reason = "same span, lower type priority";
    else
      reason = "overlaps earlier span of equal length";
    if (c.fragment) reason = "fragment-of-discontinuous; " + reason;
    report.dropped.push_back({c.m, std::move(reason)});
  }
  std::sort(kept.begin(), kept.end(), mention_less);
  report.kept = std::move(kept);
  return report;
}

inline void align_record(AnnotationRecord& record, const Sentence& sentence,
                         const AlignmentPolicy& policy = {}) {
  if (record.provenance == Provenance::gold) return;
  record.entities = align_surface_to_spans(sentence, record.pairs, policy);
}

struct TagResult {
  std::vector<std::string> tags;
  FlattenReport report;
};

inline TagResult record_to_tags(const Sentence& sentence,
                                const AnnotationRecord& record,
                                const AlignmentPolicy& policy = {}) {
  TagResult r;
  r.report = flatten(record.entities, policy);
  r.tags = spans_to_tags(r.report.kept, sentence.tokens.size());
  return r;
}

// Aligned-record line: {sentence_id, provenance, entities, dropped, repairs}.
// `entities` keeps the full nested/discontinuous structure; `dropped` lists
// what flattening removed for tag emission.
inline nlohmann::json aligned_record_json(const AnnotationRecord& record,
                                          const FlattenReport& report) {
  nlohmann::json j;
  j["sentence_id"] = record.sentence_id;
  j["provenance"] = to_string(record.provenance);
  j["entities"] = nlohmann::json::array();
  for (const auto& m : record.entities) j["entities"].push_back(to_json(m));
  j["dropped"] = nlohmann::json::array();
  for (const auto& d : report.dropped) {
    auto jd = to_json(d.mention);
    jd["reason"] = d.reason;
    j["dropped"].push_back(jd);
  }
  j["repairs"] = record.repairs;
  return j;
}

}  // namespace nerkd

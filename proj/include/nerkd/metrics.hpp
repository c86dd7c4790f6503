#pragma once

// Entity-level precision/recall/F1 under exact (type, spans) matching, with
// per-type, micro, macro and support-weighted aggregates.

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "nerkd/align.hpp"
#include "nerkd/corpus.hpp"
#include "nerkd/record.hpp"

namespace nerkd {

struct TypeCounts {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;

  std::int64_t support() const { return tp + fn; }
  TypeCounts& operator+=(const TypeCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
  friend bool operator==(const TypeCounts&, const TypeCounts&) = default;
};

struct MatchCounts {
  std::map<std::string, TypeCounts> per_type;

  MatchCounts& operator+=(const MatchCounts& o) {
    for (const auto& [k, v] : o.per_type) per_type[k] += v;
    return *this;
  }
  TypeCounts total() const {
    TypeCounts t;
    for (const auto& [_, v] : per_type) t += v;
    return t;
  }
  friend bool operator==(const MatchCounts&, const MatchCounts&) = default;
};

struct Prf {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

struct TypeScores {
  Prf prf;
  std::int64_t support = 0;
};

struct EvalReport {
  std::map<std::string, TypeScores> per_type;
  Prf micro, macro, weighted;
  std::int64_t total_support = 0;
  // Ratios whose denominator was zero and were reported as 0.
  std::vector<std::string> undefined;
  std::size_t discontinuous_pred = 0;
  std::size_t discontinuous_gold = 0;
};

inline double f1_of(double p, double r) {
  return p + r > 0 ? 2 * p * r / (p + r) : 0.0;
}

// One-to-one exact matching. Because a match requires identical (type,
// spans), the maximum matching pairs min(#gold, #pred) copies of each key.
inline MatchCounts match_entities(const std::vector<EntityMention>& gold,
                                  const std::vector<EntityMention>& pred) {
  MatchCounts c;
  std::map<std::pair<std::string, std::vector<Span>>, std::int64_t> unmatched;
  for (const auto& g : gold) ++unmatched[{g.etype, g.spans}];
  for (const auto& p : pred) {
    auto it = unmatched.find({p.etype, p.spans});
    if (it != unmatched.end() && it->second > 0) {
      --it->second;
      ++c.per_type[p.etype].tp;
    } else {
      ++c.per_type[p.etype].fp;
    }
  }
  for (const auto& [key, n] : unmatched)
    if (n > 0) c.per_type[key.first].fn += n;
  return c;
}

inline EvalReport aggregate(const MatchCounts& counts) {
  EvalReport r;
  auto ratio = [&](std::int64_t num, std::int64_t den, const std::string& what) {
    if (den == 0) {
      r.undefined.push_back(what);
      return 0.0;
    }
    return static_cast<double>(num) / static_cast<double>(den);
  };
  for (const auto& [label, c] : counts.per_type) {
    TypeScores s;
    s.prf.precision = ratio(c.tp, c.tp + c.fp, label + ".precision");
    s.prf.recall = ratio(c.tp, c.tp + c.fn, label + ".recall");
    s.prf.f1 = f1_of(s.prf.precision, s.prf.recall);
    s.support = c.support();
    r.per_type[label] = s;
    r.total_support += s.support;
  }
  const TypeCounts t = counts.total();
  r.micro.precision = ratio(t.tp, t.tp + t.fp, "micro.precision");
  r.micro.recall = ratio(t.tp, t.tp + t.fn, "micro.recall");
  r.micro.f1 = f1_of(r.micro.precision, r.micro.recall);
  if (!r.per_type.empty()) {
    const double n = static_cast<double>(r.per_type.size());
    for (const auto& [_, s] : r.per_type) {
      r.macro.precision += s.prf.precision / n;
      r.macro.recall += s.prf.recall / n;
      r.macro.f1 += s.prf.f1 / n;
    }
  }
  if (r.total_support > 0) {
    const double w = static_cast<double>(r.total_support);
    for (const auto& [_, s] : r.per_type) {
      const double share = static_cast<double>(s.support) / w;
      r.weighted.precision += share * s.prf.precision;
      r.weighted.recall += share * s.prf.recall;
      r.weighted.f1 += share * s.prf.f1;
    }
  } else {
    r.undefined.push_back("weighted");
  }
  return r;
}

// Weighted aggregate from already-computed per-type scores, as when
// checking a published table.
inline Prf weighted_average(const std::map<std::string, TypeScores>& per_type) {
  Prf out;
  std::int64_t total = 0;
  for (const auto& [_, s] : per_type) total += s.support;
  if (total == 0) return out;
  for (const auto& [_, s] : per_type) {
    const double share = static_cast<double>(s.support) / static_cast<double>(total);
    out.precision += share * s.prf.precision;
    out.recall += share * s.prf.recall;
    out.f1 += share * s.prf.f1;
  }
  return out;
}

inline Prf macro_average(const std::map<std::string, TypeScores>& per_type) {
  Prf out;
  if (per_type.empty()) return out;
  const double n = static_cast<double>(per_type.size());
  for (const auto& [_, s] : per_type) {
    out.precision += s.prf.precision / n;
    out.recall += s.prf.recall / n;
    out.f1 += s.prf.f1 / n;
  }
  return out;
}

// Joins on sentence_id. Gold sentences missing from `pred` count all their
// mentions as misses. Both sides are flattened first; discontinuous
// mentions are scored by fragment and counted separately.
inline EvalReport evaluate_annotations(const std::vector<AnnotationRecord>& gold,
                                       const std::vector<AnnotationRecord>& pred,
                                       const LabelSet& labels = default_labels(),
                                       const AlignmentPolicy& policy = {}) {
  std::unordered_map<std::string, const AnnotationRecord*> pred_by_id;
  for (const auto& p : pred) {
    if (!pred_by_id.emplace(p.sentence_id, &p).second)
      throw InvalidArgument("duplicate prediction for sentence " + p.sentence_id);
  }
  std::unordered_map<std::string, const AnnotationRecord*> gold_by_id;
  for (const auto& g : gold) gold_by_id.emplace(g.sentence_id, &g);
  for (const auto& p : pred)
    if (!gold_by_id.count(p.sentence_id))
      throw InvalidArgument("prediction for unknown sentence " + p.sentence_id);

  MatchCounts counts;
  for (const auto& l : labels) counts.per_type[l];
  std::size_t disc_pred = 0, disc_gold = 0;
  for (const auto& g : gold) {
    auto gf = flatten(g.entities, policy);
    disc_gold += gf.discontinuous_split;
    std::vector<EntityMention> pk;
    if (auto it = pred_by_id.find(g.sentence_id); it != pred_by_id.end()) {
      auto pf = flatten(it->second->entities, policy);
      disc_pred += pf.discontinuous_split;
      pk = std::move(pf.kept);
    }
    counts += match_entities(gf.kept, pk);
  }
  auto report = aggregate(counts);
  report.discontinuous_pred = disc_pred;
  report.discontinuous_gold = disc_gold;
  return report;
}

// ---------------------------------------------------------------------------
// Emission

inline nlohmann::json to_json(const Prf& p) {
  return {{"precision", p.precision}, {"recall", p.recall}, {"f1", p.f1}};
}

inline Prf prf_from_json(const nlohmann::json& j) {
  return {j.at("precision").get<double>(), j.at("recall").get<double>(),
          j.at("f1").get<double>()};
}

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j;
  j["per_type"] = nlohmann::json::object();
  for (const auto& [l, s] : r.per_type) {
    auto js = to_json(s.prf);
    js["support"] = s.support;
    j["per_type"][l] = js;
  }
  j["micro"] = to_json(r.micro);
  j["macro"] = to_json(r.macro);
  j["weighted"] = to_json(r.weighted);
  j["total_support"] = r.total_support;
  j["undefined"] = r.undefined;
  j["discontinuous_pred"] = r.discontinuous_pred;
  j["discontinuous_gold"] = r.discontinuous_gold;
  return j;
}

inline EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport r;
  for (const auto& [l, js] : j.at("per_type").items())
    r.per_type[l] = {prf_from_json(js), js.at("support").get<std::int64_t>()};
  r.micro = prf_from_json(j.at("micro"));
  r.macro = prf_from_json(j.at("macro"));
  r.weighted = prf_from_json(j.at("weighted"));
  r.total_support = j.at("total_support").get<std::int64_t>();
  r.undefined = j.value("undefined", std::vector<std::string>{});
  r.discontinuous_pred = j.value("discontinuous_pred", std::size_t{0});
  r.discontinuous_gold = j.value("discontinuous_gold", std::size_t{0});
  return r;
}

// Named scalar view of a report, in table row order: micro, macro,
// weighted, then each label; f1, precision, recall within each block.
struct MetricRow {
  std::string block;   // "micro avg", "LOC", ...
  std::string metric;  // "f1-score", "precision", "recall"
  std::int64_t support;
  double value;
};

inline std::vector<MetricRow> metric_rows(const EvalReport& r,
                                          const LabelSet& labels = default_labels()) {
  std::vector<MetricRow> rows;
  auto add = [&](const std::string& block, const Prf& p, std::int64_t support) {
    rows.push_back({block, "f1-score", support, p.f1});
    rows.push_back({block, "precision", support, p.precision});
    rows.push_back({block, "recall", support, p.recall});
  };
  add("micro avg", r.micro, r.total_support);
  add("macro avg", r.macro, r.total_support);
  add("weighted avg", r.weighted, r.total_support);
  for (const auto& l : labels) {
    auto it = r.per_type.find(l);
    add(l, it == r.per_type.end() ? Prf{} : it->second.prf,
        it == r.per_type.end() ? 0 : it->second.support);
  }
  return rows;
}

}  // namespace nerkd

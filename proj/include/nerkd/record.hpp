#pragma once

// Per-sentence annotation records shared by the annotator, aligner and
// evaluator, with their JSONL encodings.

#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nerkd/corpus.hpp"
#include "nerkd/error.hpp"

namespace nerkd {

enum class Provenance { gold, llm_standard, llm_cot };

inline std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::gold: return "gold";
    case Provenance::llm_standard: return "llm-standard";
    case Provenance::llm_cot: return "llm-cot";
  }
  return "gold";
}

inline Provenance provenance_from_string(std::string_view s) {
  if (s == "gold") return Provenance::gold;
  if (s == "llm-standard") return Provenance::llm_standard;
  if (s == "llm-cot") return Provenance::llm_cot;
  throw InvalidArgument("unknown provenance '" + std::string(s) + "'");
}

enum class RecordStatus { ok, repaired, rejected };

inline std::string to_string(RecordStatus s) {
  switch (s) {
    case RecordStatus::ok: return "ok";
    case RecordStatus::repaired: return "repaired";
    case RecordStatus::rejected: return "rejected";
  }
  return "ok";
}

inline RecordStatus status_from_string(std::string_view s) {
  if (s == "ok") return RecordStatus::ok;
  if (s == "repaired") return RecordStatus::repaired;
  if (s == "rejected") return RecordStatus::rejected;
  throw InvalidArgument("unknown record status '" + std::string(s) + "'");
}

// One (label, surface) string pulled from an LLM output dict. Pairs sharing
// a group id are fragments of one discontinuous entity.
struct RawPair {
  std::string label;
  std::string surface;
  int group = 0;

  friend bool operator==(const RawPair&, const RawPair&) = default;
};

struct AnnotationRecord {
  std::string sentence_id;
  Provenance provenance = Provenance::gold;
  std::vector<EntityMention> entities;  // span-resolved; filled by alignment
  std::vector<RawPair> raw_pairs;       // as parsed, before repair
  std::vector<RawPair> pairs;           // after repair
  std::string raw_text;
  std::vector<std::string> repairs;
  RecordStatus status = RecordStatus::ok;
};

inline AnnotationRecord make_gold_record(const Sentence& s) {
  if (!s.gold_tags)
    throw InvalidArgument("sentence " + s.id + " has no gold tags");
  AnnotationRecord r;
  r.sentence_id = s.id;
  r.provenance = Provenance::gold;
  r.entities = tags_to_mentions(*s.gold_tags, s.tokens);
  for (std::size_t i = 0; i < r.entities.size(); ++i)
    r.pairs.push_back({r.entities[i].etype, r.entities[i].surfaces[0],
                       static_cast<int>(i)});
  r.raw_pairs = r.pairs;
  return r;
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const EntityMention& m) {
  nlohmann::json spans = nlohmann::json::array();
  for (const auto& s : m.spans) spans.push_back({s.start, s.end});
  return {{"etype", m.etype}, {"spans", spans}, {"surfaces", m.surfaces}};
}

inline EntityMention mention_from_json(const nlohmann::json& j) {
  EntityMention m;
  m.etype = j.at("etype").get<std::string>();
  for (const auto& s : j.at("spans"))
    m.spans.push_back({s.at(0).get<int>(), s.at(1).get<int>()});
  if (j.contains("surfaces"))
    m.surfaces = j["surfaces"].get<std::vector<std::string>>();
  validate(m);
  return m;
}

inline nlohmann::json to_json(const RawPair& p) {
  return {{"label", p.label}, {"surface", p.surface}, {"group", p.group}};
}

inline RawPair raw_pair_from_json(const nlohmann::json& j) {
  return {j.at("label").get<std::string>(), j.at("surface").get<std::string>(),
          j.value("group", 0)};
}

// Transcript line: everything the annotator knows about one sentence.
inline nlohmann::json to_json(const AnnotationRecord& r) {
  nlohmann::json j;
  j["sentence_id"] = r.sentence_id;
  j["provenance"] = to_string(r.provenance);
  j["status"] = to_string(r.status);
  j["raw_text"] = r.raw_text;
  j["raw_pairs"] = nlohmann::json::array();
  for (const auto& p : r.raw_pairs) j["raw_pairs"].push_back(to_json(p));
  j["pairs"] = nlohmann::json::array();
  for (const auto& p : r.pairs) j["pairs"].push_back(to_json(p));
  j["repairs"] = r.repairs;
  j["entities"] = nlohmann::json::array();
  for (const auto& m : r.entities) j["entities"].push_back(to_json(m));
  return j;
}

inline AnnotationRecord record_from_json(const nlohmann::json& j) {
  AnnotationRecord r;
  try {
    r.sentence_id = j.at("sentence_id").get<std::string>();
    r.provenance = provenance_from_string(j.at("provenance").get<std::string>());
    r.status = status_from_string(j.value("status", std::string("ok")));
    r.raw_text = j.value("raw_text", std::string());
    if (j.contains("raw_pairs"))
      for (const auto& p : j["raw_pairs"]) r.raw_pairs.push_back(raw_pair_from_json(p));
    if (j.contains("pairs"))
      for (const auto& p : j["pairs"]) r.pairs.push_back(raw_pair_from_json(p));
    if (j.contains("repairs"))
      r.repairs = j["repairs"].get<std::vector<std::string>>();
    if (j.contains("entities"))
      for (const auto& m : j["entities"]) r.entities.push_back(mention_from_json(m));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad annotation record: ") + e.what());
  }
  return r;
}

inline void write_records(std::ostream& out,
                          const std::vector<AnnotationRecord>& records) {
  for (const auto& r : records) out << to_json(r).dump() << '\n';
}

inline std::vector<AnnotationRecord> read_records(std::istream& in) {
  std::vector<AnnotationRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (unicode::split_ws(line).empty()) continue;
    try {
      out.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(e.what(), line_no);
    } catch (const ParseError& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  return out;
}

}  // namespace nerkd

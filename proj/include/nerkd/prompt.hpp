#pragma once

// Few-shot and chain-of-thought annotation prompts.

#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nerkd/corpus.hpp"
#include "nerkd/digest.hpp"
#include "nerkd/error.hpp"
#include "nerkd/llm_output.hpp"

namespace nerkd {

enum class PromptMode { standard, cot };

inline std::string to_string(PromptMode m) {
  return m == PromptMode::cot ? "cot" : "standard";
}

inline PromptMode prompt_mode_from_string(std::string_view s) {
  if (s == "standard") return PromptMode::standard;
  if (s == "cot") return PromptMode::cot;
  throw InvalidArgument("unknown prompt mode '" + std::string(s) + "'");
}

struct Exemplar {
  std::string sentence;
  std::string output;     // expected dict text
  std::string reasoning;  // optional; shown before the output when present

  friend bool operator==(const Exemplar&, const Exemplar&) = default;
};

struct PromptTemplate {
  PromptMode mode = PromptMode::standard;
  std::string role_preamble;
  std::map<std::string, std::string> entity_definitions;
  std::vector<std::string> reasoning_steps;
  std::vector<Exemplar> exemplars;
  std::string output_instruction;
  std::string version;  // free-form tag of the exemplar bank

  friend bool operator==(const PromptTemplate&, const PromptTemplate&) = default;
};

struct RenderedPrompt {
  std::string text;
  std::string template_hash;
  std::string target_sentence_id;
};

// Hook for choosing exemplars per sentence; the default returns the
// template's static bank.
using ExemplarSelector =
    std::function<std::vector<Exemplar>(const PromptTemplate&, const Sentence&)>;

inline nlohmann::json to_json(const PromptTemplate& t) {
  nlohmann::json ex = nlohmann::json::array();
  for (const auto& e : t.exemplars) {
    nlohmann::json je{{"sentence", e.sentence}, {"output", e.output}};
    if (!e.reasoning.empty()) je["reasoning"] = e.reasoning;
    ex.push_back(je);
  }
  nlohmann::json j{{"mode", to_string(t.mode)},
                   {"role_preamble", t.role_preamble},
                   {"entity_definitions", t.entity_definitions},
                   {"reasoning_steps", t.reasoning_steps},
                   {"exemplars", ex},
                   {"output_instruction", t.output_instruction}};
  if (!t.version.empty()) j["version"] = t.version;
  return j;
}

inline PromptTemplate template_from_json(const nlohmann::json& j) {
  PromptTemplate t;
  try {
    t.mode = prompt_mode_from_string(j.at("mode").get<std::string>());
    t.role_preamble = j.at("role_preamble").get<std::string>();
    t.entity_definitions =
        j.at("entity_definitions").get<std::map<std::string, std::string>>();
    t.reasoning_steps = j.value("reasoning_steps", std::vector<std::string>{});
    if (j.contains("exemplars"))
      for (const auto& e : j["exemplars"])
        t.exemplars.push_back({e.at("sentence").get<std::string>(),
                               e.at("output").get<std::string>(),
                               e.value("reasoning", std::string())});
    t.output_instruction = j.at("output_instruction").get<std::string>();
    t.version = j.value("version", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad prompt template: ") + e.what());
  }
  return t;
}

inline PromptTemplate load_template(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open template " + path);
  try {
    return template_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
}

inline void validate(const PromptTemplate& t, const LabelSet& labels) {
  if (t.mode == PromptMode::cot && t.reasoning_steps.empty())
    throw InvalidArgument("cot template needs at least one reasoning step");
  if (t.mode == PromptMode::standard && !t.reasoning_steps.empty())
    throw InvalidArgument("standard template must not have reasoning steps");
  for (const auto& l : labels)
    if (!t.entity_definitions.count(l))
      throw InvalidArgument("template has no definition for label " + l);
  for (const auto& [l, _] : t.entity_definitions)
    if (!contains_label(labels, l))
      throw InvalidArgument("template defines label " + l +
                            " which is not in the configured label set");
  for (const auto& e : t.exemplars) {
    auto parsed = parse_llm_output(e.output, labels);
    if (parsed.rejected)
      throw InvalidArgument("exemplar output does not parse: " + e.output);
  }
}

inline std::string template_hash(const PromptTemplate& t, const Sentence& s) {
  nlohmann::json j{{"template", to_json(t)},
                   {"sentence_id", s.id},
                   {"tokens", s.tokens}};
  return sha256_hex(j.dump());
}

inline std::string label_key_list(const LabelSet& labels) {
  std::string out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (i) out += ", ";
    out += "'" + labels[i] + "'";
  }
  return out;
}

// Sections in order: preamble, definitions, steps (cot), examples, output
// format, target sentence.
inline RenderedPrompt render_prompt(const PromptTemplate& t, const Sentence& s,
                                    const LabelSet& labels = default_labels(),
                                    const ExemplarSelector& select = {}) {
  if (s.tokens.empty())
    throw InvalidArgument("render_prompt: sentence " + s.id + " has no tokens");
  validate(t, labels);
  const auto exemplars = select ? select(t, s) : t.exemplars;

  std::string text = t.role_preamble + "\n\nEntity types:\n";
  for (const auto& l : labels)
    text += "- " + l + ": " + t.entity_definitions.at(l) + "\n";

  if (t.mode == PromptMode::cot) {
    text += "\nReason step by step before answering:\n";
    for (std::size_t i = 0; i < t.reasoning_steps.size(); ++i)
      text += "Step " + std::to_string(i + 1) + ": " + t.reasoning_steps[i] + "\n";
  }

  if (!exemplars.empty()) {
    text += "\nExamples:\n";
    for (const auto& e : exemplars) {
      text += "\nSentence: " + e.sentence + "\n";
      if (!e.reasoning.empty()) text += "Reasoning: " + e.reasoning + "\n";
      text += "Answer: " + e.output + "\n";
    }
  }

  text += "\n" + t.output_instruction + "\nUse exactly these keys: " +
          label_key_list(labels) + ".\n";
  text += "\nSentence: " + s.text() + "\n";
  return {std::move(text), template_hash(t, s), s.id};
}

// Defaults written from the prose description of the protocol; the exact
// prompts used originally are not available.
inline std::pair<PromptTemplate, PromptTemplate> default_templates() {
  PromptTemplate base;
  base.version = "default-1";
  base.role_preamble =
      "You are an expert NLP annotator. Your task is to determine the type of "
      "each named entity present in the given sentence.";
  base.entity_definitions = {
      {"LOC", "Location: names of places such as countries, cities, regions, "
              "rivers and mountains."},
      {"ORG", "Organization: companies, institutions, agencies, political "
              "parties, sports teams and other organized groups."},
      {"PER", "Person: names of people, including first names, surnames and "
              "nicknames."},
      {"MISC", "Miscellaneous: named entities that are not locations, "
               "organizations or persons, such as nationalities, events, "
               "languages, titles of works and products."}};
  base.output_instruction =
      "Present the result as a dictionary that maps each entity type to a list "
      "of the entity strings exactly as they appear in the sentence, e.g. "
      "{'PER': ['Ana Ruiz'], 'LOC': ['Lisbon']}. Use {} when the sentence has "
      "no named entities.";

  PromptTemplate standard = base;
  standard.mode = PromptMode::standard;
  standard.exemplars = {
      {"Ana Ruiz signed for Benfica in Lisbon on Tuesday .",
       "{'PER': ['Ana Ruiz'], 'ORG': ['Benfica'], 'LOC': ['Lisbon']}", ""},
      {"The Dutch government approved the plan .", "{'MISC': ['Dutch']}", ""},
      {"Shares closed higher on Friday .", "{}", ""}};

  PromptTemplate cot = base;
  cot.mode = PromptMode::cot;
  cot.reasoning_steps = {
      "Understand the context of the sentence.",
      "Identify the potential named entities in the sentence.",
      "Determine the type of each entity based on the context.",
      "Justify the classification of each entity with reasoning."};
  cot.exemplars = {
      {"Ana Ruiz signed for Benfica in Lisbon on Tuesday .",
       "{'PER': ['Ana Ruiz'], 'ORG': ['Benfica'], 'LOC': ['Lisbon']}",
       "Step 1: The sentence reports a football transfer. Step 2: Candidates "
       "are Ana Ruiz, Benfica and Lisbon. Step 3: Ana Ruiz is a player, "
       "Benfica a club, Lisbon a city. Step 4: A person signs for a club "
       "located in a city."},
      {"The Dutch government approved the plan .", "{'MISC': ['Dutch']}",
       "Step 1: A government decision. Step 2: Candidate is Dutch. Step 3: "
       "Dutch is a nationality adjective. Step 4: Nationalities are "
       "miscellaneous entities."}};
  return {standard, cot};
}

}  // namespace nerkd

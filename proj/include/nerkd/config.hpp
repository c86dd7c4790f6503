#pragma once

// One JSON file mirroring every tunable of the toolkit. Missing keys keep
// their defaults; unknown top-level sections are rejected.

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "nerkd/align.hpp"
#include "nerkd/corpus.hpp"
#include "nerkd/llm_client.hpp"
#include "nerkd/prompt.hpp"
#include "nerkd/schedule.hpp"

namespace nerkd {

struct ExperimentSettings {
  int iterations = 5;
  std::string trainer = "baseline";  // baseline | gold-echo | external
  std::string command;               // external trainer executable
  std::string work_dir = "runs";
};

struct ToolkitConfig {
  std::uint64_t seed = 0;
  LabelSet labels = default_labels();
  TagScheme scheme = TagScheme::iob2;
  PromptMode prompt_mode = PromptMode::standard;
  std::string template_path;  // empty: built-in default for prompt_mode
  AnnotatorConfig annotator;
  EndpointConfig endpoint;
  std::string cache_dir = ".nerkd-cache";
  unsigned parallelism = 1;
  AlignmentPolicy alignment;
  ScheduleSpec schedule;
  LrSpec lr;
  ExperimentSettings experiment;
};

namespace detail {

template <class T>
void read_opt(const nlohmann::json& j, const char* key, T& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

inline CacheMode cache_mode_from_string(std::string_view s) {
  if (s == "read_write") return CacheMode::read_write;
  if (s == "read_only") return CacheMode::read_only;
  if (s == "disabled") return CacheMode::disabled;
  throw InvalidArgument("unknown cache mode '" + std::string(s) + "'");
}

inline std::string to_string(CacheMode m) {
  switch (m) {
    case CacheMode::read_write: return "read_write";
    case CacheMode::read_only: return "read_only";
    case CacheMode::disabled: return "disabled";
  }
  return "?";
}

}  // namespace detail

using detail::cache_mode_from_string;

inline ToolkitConfig config_from_json(const nlohmann::json& j) {
  using detail::read_opt;
  static const std::set<std::string> known{"seed", "labels", "corpus", "prompt", "llm",
                                           "alignment", "schedule", "lr", "experiment"};
  for (const auto& [k, _] : j.items())
    if (!known.count(k)) throw InvalidArgument("unknown config section '" + k + "'");

  ToolkitConfig c;
  try {
    read_opt(j, "seed", c.seed);
    read_opt(j, "labels", c.labels);
    c.annotator.labels = c.labels;
    if (j.contains("corpus"))
      c.scheme = scheme_from_string(j["corpus"].value("scheme", std::string("iob2")));
    if (j.contains("prompt")) {
      const auto& p = j["prompt"];
      if (p.contains("mode")) c.prompt_mode = prompt_mode_from_string(p["mode"].get<std::string>());
      read_opt(p, "template", c.template_path);
    }
    if (j.contains("llm")) {
      const auto& l = j["llm"];
      read_opt(l, "model", c.annotator.model_name);
      read_opt(l, "temperature", c.annotator.temperature);
      read_opt(l, "max_output_tokens", c.annotator.max_output_tokens);
      read_opt(l, "case_repair", c.annotator.case_repair);
      read_opt(l, "cache_dir", c.cache_dir);
      read_opt(l, "parallelism", c.parallelism);
      if (l.contains("cache_mode"))
        c.annotator.cache_mode = cache_mode_from_string(l["cache_mode"].get<std::string>());
      if (l.contains("retry")) {
        const auto& r = l["retry"];
        read_opt(r, "max_attempts", c.annotator.retry.max_attempts);
        if (r.contains("base_delay_ms"))
          c.annotator.retry.base_delay = std::chrono::milliseconds(r["base_delay_ms"].get<int>());
        if (r.contains("max_delay_ms"))
          c.annotator.retry.max_delay = std::chrono::milliseconds(r["max_delay_ms"].get<int>());
      }
      if (l.contains("endpoint")) {
        const auto& e = l["endpoint"];
        read_opt(e, "url", c.endpoint.url);
        read_opt(e, "api_key_env", c.endpoint.api_key_env);
        if (e.contains("body_template")) c.endpoint.body_template = e["body_template"];
        read_opt(e, "model_path", c.endpoint.model_path);
        read_opt(e, "prompt_path", c.endpoint.prompt_path);
        read_opt(e, "temperature_path", c.endpoint.temperature_path);
        read_opt(e, "max_tokens_path", c.endpoint.max_tokens_path);
        read_opt(e, "response_text_path", c.endpoint.response_text_path);
        read_opt(e, "timeout_seconds", c.endpoint.timeout_seconds);
      }
    }
    if (j.contains("alignment")) {
      const auto& a = j["alignment"];
      read_opt(a, "case_sensitive_first", c.alignment.case_sensitive_first);
      read_opt(a, "all_occurrences", c.alignment.all_occurrences);
      read_opt(a, "flatten_rule", c.alignment.flatten_rule);
      read_opt(a, "type_tiebreak", c.alignment.type_tiebreak);
    }
    if (j.contains("schedule")) {
      const auto& s = j["schedule"];
      if (s.contains("kind")) c.schedule.kind = blend_kind_from_string(s["kind"].get<std::string>());
      read_opt(s, "k", c.schedule.k);
      read_opt(s, "n", c.schedule.n);
      read_opt(s, "T", c.schedule.T);
    }
    if (j.contains("lr")) {
      read_opt(j["lr"], "base_lr", c.lr.base_lr);
      read_opt(j["lr"], "decay_factor", c.lr.decay_factor);
    }
    if (j.contains("experiment")) {
      const auto& e = j["experiment"];
      read_opt(e, "iterations", c.experiment.iterations);
      read_opt(e, "trainer", c.experiment.trainer);
      read_opt(e, "command", c.experiment.command);
      read_opt(e, "work_dir", c.experiment.work_dir);
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }
  validate(c.alignment, c.labels);
  return c;
}

inline nlohmann::json to_json(const ToolkitConfig& c) {
  return {
      {"seed", c.seed},
      {"labels", c.labels},
      {"corpus", {{"scheme", c.scheme == TagScheme::iob1 ? "iob1" : "iob2"}}},
      {"prompt", {{"mode", to_string(c.prompt_mode)}, {"template", c.template_path}}},
      {"llm",
       {{"model", c.annotator.model_name},
        {"temperature", c.annotator.temperature},
        {"max_output_tokens", c.annotator.max_output_tokens},
        {"case_repair", c.annotator.case_repair},
        {"cache_dir", c.cache_dir},
        {"cache_mode", detail::to_string(c.annotator.cache_mode)},
        {"parallelism", c.parallelism},
        {"retry",
         {{"max_attempts", c.annotator.retry.max_attempts},
          {"base_delay_ms", c.annotator.retry.base_delay.count()},
          {"max_delay_ms", c.annotator.retry.max_delay.count()}}},
        {"endpoint",
         {{"url", c.endpoint.url},
          {"api_key_env", c.endpoint.api_key_env},
          {"body_template", c.endpoint.body_template},
          {"model_path", c.endpoint.model_path},
          {"prompt_path", c.endpoint.prompt_path},
          {"temperature_path", c.endpoint.temperature_path},
          {"max_tokens_path", c.endpoint.max_tokens_path},
          {"response_text_path", c.endpoint.response_text_path},
          {"timeout_seconds", c.endpoint.timeout_seconds}}}}},
      {"alignment",
       {{"case_sensitive_first", c.alignment.case_sensitive_first},
        {"all_occurrences", c.alignment.all_occurrences},
        {"flatten_rule", c.alignment.flatten_rule},
        {"type_tiebreak", c.alignment.type_tiebreak}}},
      {"schedule",
       {{"kind", to_string(c.schedule.kind)},
        {"k", c.schedule.k},
        {"n", c.schedule.n},
        {"T", c.schedule.T}}},
      {"lr", {{"base_lr", c.lr.base_lr}, {"decay_factor", c.lr.decay_factor}}},
      {"experiment",
       {{"iterations", c.experiment.iterations},
        {"trainer", c.experiment.trainer},
        {"command", c.experiment.command},
        {"work_dir", c.experiment.work_dir}}}};
}

inline ToolkitConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open config " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  return config_from_json(j);
}

}  // namespace nerkd

#pragma once

// Chat-completion client with an on-disk response cache and bounded
// exponential-backoff retry, plus the annotate() driver.

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <unistd.h>

#include "nerkd/corpus.hpp"
#include "nerkd/digest.hpp"
#include "nerkd/error.hpp"
#include "nerkd/llm_output.hpp"
#include "nerkd/prompt.hpp"
#include "nerkd/record.hpp"

namespace nerkd {

struct LlmRequest {
  std::string model_name;
  std::string prompt_text;
  double temperature = 0.0;
  int max_output_tokens = 1024;
  std::string request_key;
};

inline std::string compute_request_key(const std::string& model,
                                       const std::string& prompt,
                                       double temperature) {
  nlohmann::json j{model, prompt, temperature};
  return sha256_hex(j.dump());
}

inline LlmRequest make_request(std::string model, std::string prompt,
                               double temperature = 0.0,
                               int max_output_tokens = 1024) {
  LlmRequest r{std::move(model), std::move(prompt), temperature,
               max_output_tokens, {}};
  r.request_key = compute_request_key(r.model_name, r.prompt_text, r.temperature);
  return r;
}

struct LlmResponse {
  std::string raw_text;
  std::int64_t latency_ms = 0;
  bool from_cache = false;
  int attempt = 1;
};

// One round trip to the endpoint. status 0 means the request never got an
// HTTP answer (connection refused, timeout).
struct TransportReply {
  int status = 0;
  std::string text;   // completion text when 2xx
  std::string error;  // diagnostic otherwise
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual TransportReply complete(const LlmRequest& request) = 0;
};

// Where the request fields go in the POST body and where the completion text
// is found in the reply, as JSON pointers.
struct EndpointConfig {
  std::string url = "https://api.openai.com/v1/chat/completions";
  std::string api_key_env = "ANNOTATOR_API_KEY";
  nlohmann::json body_template = {
      {"messages", nlohmann::json::array({{{"role", "user"}, {"content", ""}}})}};
  std::string model_path = "/model";
  std::string prompt_path = "/messages/0/content";
  std::string temperature_path = "/temperature";
  std::string max_tokens_path = "/max_tokens";
  std::string response_text_path = "/choices/0/message/content";
  int timeout_seconds = 120;
};

inline nlohmann::json build_request_body(const EndpointConfig& cfg,
                                         const LlmRequest& req) {
  nlohmann::json body = cfg.body_template;
  using ptr = nlohmann::json::json_pointer;
  body[ptr(cfg.model_path)] = req.model_name;
  body[ptr(cfg.prompt_path)] = req.prompt_text;
  if (!cfg.temperature_path.empty()) body[ptr(cfg.temperature_path)] = req.temperature;
  if (!cfg.max_tokens_path.empty())
    body[ptr(cfg.max_tokens_path)] = req.max_output_tokens;
  return body;
}

class HttpTransport : public Transport {
 public:
  explicit HttpTransport(EndpointConfig cfg) : cfg_(std::move(cfg)) {
    const auto scheme_end = cfg_.url.find("://");
    if (scheme_end == std::string::npos)
      throw InvalidArgument("endpoint url needs a scheme: " + cfg_.url);
    const auto path_start = cfg_.url.find('/', scheme_end + 3);
    origin_ = cfg_.url.substr(0, path_start);
    path_ = path_start == std::string::npos ? "/" : cfg_.url.substr(path_start);
  }

  TransportReply complete(const LlmRequest& req) override {
    httplib::Client cli(origin_);
    cli.set_connection_timeout(cfg_.timeout_seconds);
    cli.set_read_timeout(cfg_.timeout_seconds);
    httplib::Headers headers;
    if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key)
      headers.emplace("Authorization", std::string("Bearer ") + key);
    auto res = cli.Post(path_, headers, build_request_body(cfg_, req).dump(),
                        "application/json");
    if (!res) return {0, {}, httplib::to_string(res.error())};
    if (res->status < 200 || res->status >= 300)
      return {res->status, {}, res->body};
    try {
      auto j = nlohmann::json::parse(res->body);
      return {res->status,
              j.at(nlohmann::json::json_pointer(cfg_.response_text_path))
                  .get<std::string>(),
              {}};
    } catch (const nlohmann::json::exception& e) {
      return {res->status, {}, std::string("unreadable reply body: ") + e.what()};
    }
  }

 private:
  EndpointConfig cfg_;
  std::string origin_;
  std::string path_;
};

// Base delay doubles after each failed attempt, capped at max_delay.
struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds base_delay{500};
  std::chrono::milliseconds max_delay{30000};
  std::function<void(std::chrono::milliseconds)> sleep =
      [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };

  std::chrono::milliseconds delay_after(int attempt) const {
    auto d = base_delay;
    for (int i = 1; i < attempt && d < max_delay; ++i) d *= 2;
    return std::min(d, max_delay);
  }
};

inline bool is_retryable(int status) {
  return status == 0 || status == 429 || status >= 500;
}

enum class CacheMode { read_write, read_only, disabled };

inline std::string utc_timestamp() {
  const std::time_t now =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// One JSON file per request key at <dir>/<k[0:2]>/<k[2:4]>/<key>.json,
// written to a temporary name and renamed into place.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

  const std::filesystem::path& dir() const { return dir_; }

  std::filesystem::path path_for(const std::string& key) const {
    if (key.size() < 4) throw InvalidArgument("request key too short: " + key);
    return dir_ / key.substr(0, 2) / key.substr(2, 2) / (key + ".json");
  }

  std::optional<LlmResponse> load(const LlmRequest& req) const {
    std::ifstream in(path_for(req.request_key));
    if (!in) return std::nullopt;
    try {
      auto j = nlohmann::json::parse(in);
      const auto& r = j.at("response");
      return LlmResponse{r.at("raw_text").get<std::string>(),
                         r.value("latency_ms", std::int64_t{0}), true,
                         r.value("attempt", 1)};
    } catch (const nlohmann::json::exception& e) {
      throw TransportError("corrupt cache entry " +
                           path_for(req.request_key).string() + ": " + e.what());
    }
  }

  void store(const LlmRequest& req, const LlmResponse& resp) {
    nlohmann::json j{
        {"request",
         {{"model_name", req.model_name},
          {"prompt_text", req.prompt_text},
          {"temperature", req.temperature},
          {"max_output_tokens", req.max_output_tokens},
          {"request_key", req.request_key}}},
        {"response",
         {{"raw_text", resp.raw_text},
          {"latency_ms", resp.latency_ms},
          {"attempt", resp.attempt}}},
        {"timestamp", utc_timestamp()}};
    const auto final_path = path_for(req.request_key);
    std::lock_guard lock(write_mu_);
    std::filesystem::create_directories(final_path.parent_path());
    auto tmp = final_path;
    tmp += ".tmp." + std::to_string(::getpid()) + "." +
           std::to_string(tmp_counter_++);
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw TransportError("cannot write cache file " + tmp.string());
      out << j.dump(2) << '\n';
      if (!out.flush()) throw TransportError("cannot write cache file " + tmp.string());
    }
    std::filesystem::rename(tmp, final_path);
  }

 private:
  std::filesystem::path dir_;
  std::mutex write_mu_;
  std::uint64_t tmp_counter_ = 0;
};

inline LlmResponse send_with_cache(const LlmRequest& req, ResponseCache* cache,
                                   Transport* transport,
                                   const RetryPolicy& retry = {},
                                   CacheMode mode = CacheMode::read_write) {
  if (cache && mode != CacheMode::disabled) {
    if (auto hit = cache->load(req)) return *hit;
  }
  if (mode == CacheMode::read_only) throw CacheMiss(req.request_key);
  if (!transport) throw TransportError("no transport configured");

  int last_status = 0;
  std::string last_error;
  for (int attempt = 1; attempt <= retry.max_attempts; ++attempt) {
    const auto t0 = std::chrono::steady_clock::now();
    TransportReply reply = transport->complete(req);
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
    if (reply.status >= 200 && reply.status < 300 && reply.error.empty()) {
      LlmResponse resp{std::move(reply.text), ms, false, attempt};
      if (cache && mode == CacheMode::read_write) cache->store(req, resp);
      return resp;
    }
    last_status = reply.status;
    last_error = reply.error;
    if (!is_retryable(reply.status) || (reply.status >= 200 && reply.status < 300))
      throw TransportError("request failed with HTTP " +
                               std::to_string(reply.status) + ": " + last_error,
                           reply.status);
    if (attempt < retry.max_attempts) retry.sleep(retry.delay_after(attempt));
  }
  throw TransportError("request failed after " +
                           std::to_string(retry.max_attempts) +
                           " attempts; last status " +
                           std::to_string(last_status) + ": " + last_error,
                       last_status);
}

struct AnnotatorConfig {
  std::string model_name = "gpt-4-0125-preview";
  double temperature = 0.0;
  int max_output_tokens = 1024;
  LabelSet labels = default_labels();
  CacheMode cache_mode = CacheMode::read_write;
  RetryPolicy retry;
  bool case_repair = true;
};

class Annotator {
 public:
  Annotator(AnnotatorConfig cfg, ResponseCache* cache, Transport* transport)
      : cfg_(std::move(cfg)), cache_(cache), transport_(transport) {}

  const AnnotatorConfig& config() const { return cfg_; }

  // render -> send (cached) -> parse -> repair. The record keeps the raw
  // transcript whatever the outcome.
  AnnotationRecord annotate(const Sentence& sentence,
                            const PromptTemplate& tmpl) const {
    const auto prompt = render_prompt(tmpl, sentence, cfg_.labels);
    const auto req = make_request(cfg_.model_name, prompt.text,
                                  cfg_.temperature, cfg_.max_output_tokens);
    const auto resp =
        send_with_cache(req, cache_, transport_, cfg_.retry, cfg_.cache_mode);
    return build_record(sentence, tmpl.mode, resp.raw_text, cfg_.labels,
                        cfg_.case_repair);
  }

  // Annotates in input order using up to `parallelism` worker threads. The
  // first failure is rethrown after all workers stop.
  std::vector<AnnotationRecord> annotate_all(const std::vector<Sentence>& sentences,
                                             const PromptTemplate& tmpl,
                                             unsigned parallelism = 1) const {
    std::vector<AnnotationRecord> out(sentences.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex err_mu;
    auto worker = [&] {
      for (std::size_t i; (i = next++) < sentences.size();) {
        try {
          out[i] = annotate(sentences[i], tmpl);
        } catch (...) {
          std::lock_guard lock(err_mu);
          if (!first_error) first_error = std::current_exception();
          next = sentences.size();
        }
      }
    };
    const unsigned n = std::max(1u, parallelism);
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
    return out;
  }

  static AnnotationRecord build_record(const Sentence& sentence, PromptMode mode,
                                       const std::string& raw_text,
                                       const LabelSet& labels,
                                       bool case_repair = true) {
    AnnotationRecord rec;
    rec.sentence_id = sentence.id;
    rec.provenance =
        mode == PromptMode::cot ? Provenance::llm_cot : Provenance::llm_standard;
    rec.raw_text = raw_text;
    auto parsed = parse_llm_output(raw_text, labels);
    rec.repairs = parsed.notes;
    if (parsed.rejected) {
      rec.status = RecordStatus::rejected;
      return rec;
    }
    rec.raw_pairs = parsed.pairs;
    auto repaired = repair_output(parsed.pairs, sentence, {labels, case_repair});
    rec.pairs = std::move(repaired.pairs);
    rec.repairs.insert(rec.repairs.end(), repaired.notes.begin(),
                       repaired.notes.end());
    rec.status = rec.repairs.empty() ? RecordStatus::ok : RecordStatus::repaired;
    return rec;
  }

 private:
  AnnotatorConfig cfg_;
  ResponseCache* cache_;
  Transport* transport_;
};

// Transcript JSONL: one {sentence_id, provenance, raw_text} object per line.
// Records can be rebuilt from transcripts without contacting the endpoint.
struct Transcript {
  std::string sentence_id;
  Provenance provenance = Provenance::llm_standard;
  std::string raw_text;
};

inline void write_transcripts(std::ostream& out,
                              const std::vector<AnnotationRecord>& records) {
  for (const auto& r : records)
    out << nlohmann::json{{"sentence_id", r.sentence_id},
                          {"provenance", to_string(r.provenance)},
                          {"raw_text", r.raw_text}}
               .dump()
        << '\n';
}

inline std::vector<Transcript> read_transcripts(std::istream& in) {
  std::vector<Transcript> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      out.push_back({j.at("sentence_id").get<std::string>(),
                     provenance_from_string(j.value("provenance", "llm-standard")),
                     j.at("raw_text").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  return out;
}

// Sentences without a transcript are skipped.
inline std::vector<AnnotationRecord> records_from_transcripts(
    const std::vector<Transcript>& transcripts, const std::vector<Sentence>& sentences,
    const LabelSet& labels = default_labels(), bool case_repair = true) {
  std::unordered_map<std::string, const Sentence*> by_id;
  for (const auto& s : sentences) by_id.emplace(s.id, &s);
  std::vector<AnnotationRecord> out;
  for (const auto& t : transcripts) {
    auto it = by_id.find(t.sentence_id);
    if (it == by_id.end())
      throw InvalidArgument("transcript for unknown sentence " + t.sentence_id);
    out.push_back(Annotator::build_record(
        *it->second, t.provenance == Provenance::llm_cot ? PromptMode::cot : PromptMode::standard,
        t.raw_text, labels, case_repair));
  }
  return out;
}

}  // namespace nerkd

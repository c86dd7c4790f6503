#pragma once

// Per-epoch training manifests from blend schedules, trainer adapters,
// repeated runs and comparison reports.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>
#include <sys/wait.h>

#include "nerkd/corpus.hpp"
#include "nerkd/metrics.hpp"
#include "nerkd/random.hpp"
#include "nerkd/record.hpp"
#include "nerkd/schedule.hpp"

namespace nerkd {

enum class AnnotationSource { gold, llm };

inline std::string to_string(AnnotationSource s) {
  return s == AnnotationSource::gold ? "gold" : "llm";
}

struct DatasetRef {
  std::string name;
  std::vector<std::string> sentence_ids;
  AnnotationSource annotation_source = AnnotationSource::gold;

  std::size_t size() const { return sentence_ids.size(); }
};

// Sentences keyed by (annotation source, id); the same id may carry gold
// tags in one source and LLM tags in the other.
class CorpusStore {
 public:
  void add(const Sentence& s, AnnotationSource src) {
    if (!s.gold_tags)
      throw InvalidArgument("corpus store: sentence " + s.id + " has no tags");
    map(src)[s.id] = s;
  }

  DatasetRef add_dataset(std::string name, const std::vector<Sentence>& sentences,
                         AnnotationSource src) {
    DatasetRef ref{std::move(name), {}, src};
    for (const auto& s : sentences) {
      add(s, src);
      ref.sentence_ids.push_back(s.id);
    }
    return ref;
  }

  bool contains(const std::string& id, AnnotationSource src) const {
    return map(src).count(id) > 0;
  }

  const Sentence& get(const std::string& id, AnnotationSource src) const {
    auto it = map(src).find(id);
    if (it == map(src).end())
      throw InvalidArgument("sentence " + id + " not in " + to_string(src) + " store");
    return it->second;
  }

  void check(const DatasetRef& ref) const {
    std::unordered_set<std::string> seen;
    for (const auto& id : ref.sentence_ids) {
      if (!seen.insert(id).second)
        throw InvalidArgument("dataset " + ref.name + " lists " + id + " twice");
      get(id, ref.annotation_source);
    }
  }

 private:
  std::unordered_map<std::string, Sentence>& map(AnnotationSource s) {
    return s == AnnotationSource::gold ? gold_ : llm_;
  }
  const std::unordered_map<std::string, Sentence>& map(AnnotationSource s) const {
    return s == AnnotationSource::gold ? gold_ : llm_;
  }
  std::unordered_map<std::string, Sentence> gold_, llm_;
};

inline DatasetRef concat(const std::string& name, const DatasetRef& a,
                         const DatasetRef& b) {
  if (a.annotation_source != b.annotation_source)
    throw InvalidArgument("cannot concatenate datasets with different sources");
  DatasetRef out{name, a.sentence_ids, a.annotation_source};
  out.sentence_ids.insert(out.sentence_ids.end(), b.sentence_ids.begin(),
                          b.sentence_ids.end());
  return out;
}

// Trainer hints recorded in every manifest; the toolkit does not enforce them.
struct TrainerHints {
  int train_batch_size = 4;
  int eval_batch_size = 2;
  int max_seq_length = 128;
};

struct EpochManifest {
  int epoch = 0;
  double w0 = 0;
  double w1 = 0;
  std::vector<std::string> distilled_ids;  // in dataset order
  std::vector<std::string> original_ids;
  // Interleaved presentation order: ("distilled"|"original", id).
  std::vector<std::pair<std::string, std::string>> order;
  double learning_rate = 0;
  // True at epoch 0 and wherever the set of datasets in use changes.
  bool segment_start = false;

  friend bool operator==(const EpochManifest&, const EpochManifest&) = default;
};

inline std::size_t round_half_away(double x) {
  return static_cast<std::size_t>(std::llround(x));
}

inline EpochManifest compose_epoch(const ScheduleSpec& spec, int t,
                                   const DatasetRef& distilled,
                                   const DatasetRef& original, const LrSpec& lr,
                                   std::uint64_t seed) {
  EpochManifest m;
  m.epoch = t;
  m.w0 = w0(spec, t);
  m.w1 = w1(spec, t);
  m.learning_rate = lr_at_epoch(lr, t);
  if (m.w0 > 0 && distilled.sentence_ids.empty())
    throw InvalidArgument("epoch " + std::to_string(t) + " needs distilled data but " +
                          distilled.name + " is empty");
  if (m.w1 > 0 && original.sentence_ids.empty())
    throw InvalidArgument("epoch " + std::to_string(t) + " needs original data but " +
                          original.name + " is empty");
  const bool full = spec.kind == BlendKind::all_blend;
  const std::size_t nd = full ? distilled.size() : round_half_away(m.w0 * distilled.size());
  const std::size_t no = full ? original.size() : round_half_away(m.w1 * original.size());

  const std::uint64_t epoch_seed = rng::derive_seed(seed, static_cast<std::uint64_t>(t));
  for (auto i : rng::sample_indices(distilled.size(), nd, rng::derive_seed(epoch_seed, 0)))
    m.distilled_ids.push_back(distilled.sentence_ids[i]);
  for (auto i : rng::sample_indices(original.size(), no, rng::derive_seed(epoch_seed, 1)))
    m.original_ids.push_back(original.sentence_ids[i]);

  for (const auto& id : m.distilled_ids) m.order.emplace_back("distilled", id);
  for (const auto& id : m.original_ids) m.order.emplace_back("original", id);
  rng::Engine eng(rng::derive_seed(epoch_seed, 2));
  rng::shuffle(m.order, eng);
  return m;
}

inline std::vector<EpochManifest> compose_run(const ScheduleSpec& spec,
                                              const DatasetRef& distilled,
                                              const DatasetRef& original,
                                              const LrSpec& lr, std::uint64_t seed) {
  validate(spec);
  validate(lr);
  std::vector<EpochManifest> out;
  for (int t = 0; t < spec.T; ++t) {
    out.push_back(compose_epoch(spec, t, distilled, original, lr, seed));
    auto& m = out.back();
    m.segment_start = t == 0 || (out[t - 1].distilled_ids.empty() != m.distilled_ids.empty()) ||
                      (out[t - 1].original_ids.empty() != m.original_ids.empty());
  }
  return out;
}

inline nlohmann::json manifest_meta(const EpochManifest& m, const ScheduleSpec& spec,
                                    std::uint64_t seed, const TrainerHints& hints = {}) {
  nlohmann::json order = nlohmann::json::array();
  for (const auto& [src, id] : m.order) order.push_back(src + ":" + id);
  return {{"epoch", m.epoch},
          {"T", spec.T},
          {"seed", seed},
          {"strategy", to_string(spec.kind)},
          {"params", params_string(spec)},
          {"w0", m.w0},
          {"w1", m.w1},
          {"learning_rate", m.learning_rate},
          {"n_distilled", m.distilled_ids.size()},
          {"n_original", m.original_ids.size()},
          {"segment_start", m.segment_start},
          {"trainer_hints",
           {{"train_batch_size", hints.train_batch_size},
            {"eval_batch_size", hints.eval_batch_size},
            {"max_seq_length", hints.max_seq_length}}},
          {"order", order}};
}

// <dir>/run-<seed>/epoch-<t>/{distilled.ids, original.ids, meta.json}.
// Returns the run directory.
inline std::filesystem::path write_manifests(const std::filesystem::path& dir,
                                             const std::vector<EpochManifest>& manifests,
                                             const ScheduleSpec& spec,
                                             std::uint64_t seed,
                                             const TrainerHints& hints = {}) {
  const auto run_dir = dir / ("run-" + std::to_string(seed));
  for (const auto& m : manifests) {
    const auto ep = run_dir / ("epoch-" + std::to_string(m.epoch));
    std::filesystem::create_directories(ep);
    auto write_ids = [&](const char* name, const std::vector<std::string>& ids) {
      std::ofstream out(ep / name, std::ios::binary | std::ios::trunc);
      for (const auto& id : ids) out << id << '\n';
    };
    write_ids("distilled.ids", m.distilled_ids);
    write_ids("original.ids", m.original_ids);
    std::ofstream meta(ep / "meta.json", std::ios::binary | std::ios::trunc);
    meta << manifest_meta(m, spec, seed, hints).dump(2) << '\n';
  }
  return run_dir;
}

// ---------------------------------------------------------------------------
// Presets

enum class Group { A, B, C, D, E };

inline std::string to_string(Group g) { return std::string(1, static_cast<char>('A' + static_cast<int>(g))); }

inline Group group_from_string(std::string_view s) {
  if (s.size() == 1 && s[0] >= 'A' && s[0] <= 'E') return static_cast<Group>(s[0] - 'A');
  throw InvalidArgument("unknown group '" + std::string(s) + "'");
}

struct ExperimentDatasets {
  DatasetRef distilled_conll;  // LLM-annotated corpus sample
  DatasetRef distilled_bbc;    // LLM-annotated out-of-corpus sentences
  DatasetRef original;         // gold-annotated corpus sample
};

struct ExperimentConfig {
  std::string name;
  ScheduleSpec spec;
  DatasetRef distilled;
  DatasetRef original;
  LrSpec lr;
};

inline const LrSpec kNoDecay{1e-5, 1.0};
inline const LrSpec kDecay{1e-5, 0.95};

inline std::string lr_mode_label(const LrSpec& lr) {
  return lr.decay_factor == 1.0 ? "no LR decay" : "LR decay";
}

// A: original only. B: distilled corpus only. C: distilled corpus + extra
// distilled. D/E: the same distilled sets for the first half, then original.
inline ExperimentConfig preset(Group g, const ExperimentDatasets& d,
                               const LrSpec& lr = kNoDecay, int T = 20) {
  const auto both = concat(d.distilled_conll.name + "+" + d.distilled_bbc.name,
                           d.distilled_conll, d.distilled_bbc);
  const std::string name = "Group " + to_string(g);
  switch (g) {
    case Group::A: return {name, {BlendKind::pure_original, 0, 0, T}, d.distilled_conll, d.original, lr};
    case Group::B: return {name, {BlendKind::pure_distilled, 0, 0, T}, d.distilled_conll, d.original, lr};
    case Group::C: return {name, {BlendKind::pure_distilled, 0, 0, T}, both, d.original, lr};
    case Group::D: return {name, {BlendKind::simple_mix, 0, 0, T}, d.distilled_conll, d.original, lr};
    case Group::E: return {name, {BlendKind::simple_mix, 0, 0, T}, both, d.original, lr};
  }
  throw InvalidArgument("bad group");
}

// The 15 blending strategies compared on the full distilled set.
inline std::vector<ScheduleSpec> strategy_family(int T = 20) {
  std::vector<ScheduleSpec> out{{BlendKind::simple_mix, 0, 0, T}, {BlendKind::all_blend, 0, 0, T}};
  for (double k : {2.0, 4.0, 8.0, 16.0, 32.0}) out.push_back({BlendKind::sigmoid, k, 0, T});
  for (double n : {0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0}) out.push_back({BlendKind::power, 0, n, T});
  out.push_back({BlendKind::cosine, 0, 0, T});
  return out;
}

// Five groups and fifteen strategies, each with and without LR decay.
inline std::vector<ExperimentConfig> reference_grid(const ExperimentDatasets& d, int T = 20) {
  std::vector<ExperimentConfig> out;
  for (Group g : {Group::A, Group::B, Group::C, Group::D, Group::E})
    for (const auto& lr : {kNoDecay, kDecay}) out.push_back(preset(g, d, lr, T));
  const auto both = concat(d.distilled_conll.name + "+" + d.distilled_bbc.name,
                           d.distilled_conll, d.distilled_bbc);
  for (const auto& s : strategy_family(T))
    for (const auto& lr : {kNoDecay, kDecay})
      out.push_back({strategy_label(s), s, both, d.original, lr});
  return out;
}

// ---------------------------------------------------------------------------
// Trainers

// Most frequent tag per token string over all manifest epochs; unseen
// tokens get O; ties prefer O, then the lexicographically smallest tag.
class BaselineModel {
 public:
  void observe(const std::string& token, const std::string& tag) { ++counts_[token][tag]; }

  std::string tag_for(const std::string& token) const {
    auto it = counts_.find(token);
    if (it == counts_.end()) return "O";
    std::string best = "O";
    std::int64_t best_n = -1;
    auto o = it->second.find("O");
    if (o != it->second.end()) best_n = o->second;
    for (const auto& [tag, n] : it->second)  // map order = lexicographic
      if (n > best_n) {
        best = tag;
        best_n = n;
      }
    return best;
  }

  std::vector<std::string> predict(const std::vector<std::string>& tokens) const {
    std::vector<std::string> tags;
    for (const auto& t : tokens) tags.push_back(tag_for(t));
    return iob1_to_iob2(tags);
  }

  const std::map<std::string, std::map<std::string, std::int64_t>>& counts() const {
    return counts_;
  }

 private:
  std::map<std::string, std::map<std::string, std::int64_t>> counts_;
};

inline BaselineModel baseline_tagger_train(const std::vector<EpochManifest>& manifests,
                                           const CorpusStore& store) {
  BaselineModel model;
  auto feed = [&](const std::string& id, AnnotationSource src) {
    const auto& s = store.get(id, src);
    for (std::size_t i = 0; i < s.tokens.size(); ++i) model.observe(s.tokens[i], (*s.gold_tags)[i]);
  };
  for (const auto& m : manifests) {
    for (const auto& id : m.distilled_ids) feed(id, AnnotationSource::llm);
    for (const auto& id : m.original_ids) feed(id, AnnotationSource::gold);
  }
  return model;
}

struct TrainingJob {
  const ExperimentConfig* config = nullptr;
  const std::vector<EpochManifest>* manifests = nullptr;
  const CorpusStore* store = nullptr;
  const std::vector<Sentence>* test = nullptr;
  std::uint64_t seed = 0;
  std::filesystem::path work_dir;  // empty: nothing written
};

class Trainer {
 public:
  virtual ~Trainer() = default;
  virtual std::string name() const = 0;
  // One tag sequence per test sentence.
  virtual std::vector<std::vector<std::string>> train_and_predict(const TrainingJob& job) = 0;
};

class BaselineTrainer : public Trainer {
 public:
  std::string name() const override { return "baseline"; }
  std::vector<std::vector<std::string>> train_and_predict(const TrainingJob& job) override {
    auto model = baseline_tagger_train(*job.manifests, *job.store);
    std::vector<std::vector<std::string>> out;
    for (const auto& s : *job.test) out.push_back(model.predict(s.tokens));
    return out;
  }
};

// Returns the test set's own gold tags.
class GoldEchoTrainer : public Trainer {
 public:
  std::string name() const override { return "gold-echo"; }
  std::vector<std::vector<std::string>> train_and_predict(const TrainingJob& job) override {
    std::vector<std::vector<std::string>> out;
    for (const auto& s : *job.test) out.push_back(s.gold_tags.value());
    return out;
  }
};

inline std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out += "'\\''";
    else out += c;
  }
  return out + "'";
}

// Runs `<command> <manifest_dir> <distilled.jsonl> <original.jsonl>
// <test.conll> <predictions.conll>` and reads the predictions back.
class ExternalTrainer : public Trainer {
 public:
  explicit ExternalTrainer(std::string command) : command_(std::move(command)) {}
  std::string name() const override { return "external"; }

  std::vector<std::vector<std::string>> train_and_predict(const TrainingJob& job) override {
    if (job.work_dir.empty()) throw InvalidArgument("external trainer needs a work directory");
    const auto run_dir =
        write_manifests(job.work_dir, *job.manifests, job.config->spec, job.seed);
    auto dump = [&](const char* file, const DatasetRef& ref) {
      std::vector<Sentence> ss;
      for (const auto& id : ref.sentence_ids) ss.push_back(job.store->get(id, ref.annotation_source));
      std::ofstream out(run_dir / file);
      write_jsonl(out, ss);
      return run_dir / file;
    };
    const auto distilled = dump("distilled.jsonl", job.config->distilled);
    const auto original = dump("original.jsonl", job.config->original);
    const auto test = run_dir / "test.conll";
    {
      std::ofstream out(test);
      write_conll(out, *job.test);
    }
    const auto pred = run_dir / "predictions.conll";
    std::filesystem::remove(pred);

    const std::string cmd = command_ + " " + shell_quote(run_dir.string()) + " " +
                            shell_quote(distilled.string()) + " " +
                            shell_quote(original.string()) + " " + shell_quote(test.string()) +
                            " " + shell_quote(pred.string()) + " 2>&1";
    std::string captured;
    FILE* pipe = ::popen(cmd.c_str(), "r");
    if (!pipe) throw Error("cannot start external trainer: " + command_);
    char buf[4096];
    while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) captured.append(buf, n);
    const int status = ::pclose(pipe);
    if (status != 0) {
      const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
      throw Error("external trainer exited with status " + std::to_string(code) +
                  "; output:\n" + captured);
    }
    std::ifstream in(pred);
    if (!in) throw Error("external trainer wrote no predictions at " + pred.string());
    auto predicted = parse_conll(in);
    return check_predictions(predicted, *job.test);
  }

  static std::vector<std::vector<std::string>> check_predictions(
      const std::vector<Sentence>& predicted, const std::vector<Sentence>& test) {
    std::vector<std::vector<std::string>> out;
    for (std::size_t i = 0; i < test.size(); ++i) {
      if (i >= predicted.size())
        throw InvalidArgument("no prediction for test sentence " + test[i].id);
      if (predicted[i].tokens.size() != test[i].tokens.size())
        throw InvalidArgument("prediction length mismatch for test sentence " + test[i].id +
                              ": " + std::to_string(predicted[i].tokens.size()) + " vs " +
                              std::to_string(test[i].tokens.size()));
      out.push_back(*predicted[i].gold_tags);
    }
    if (predicted.size() > test.size())
      throw InvalidArgument("more predicted sentences than test sentences");
    return out;
  }

 private:
  std::string command_;
};

// ---------------------------------------------------------------------------
// Runs

struct RunResult {
  std::string name;
  std::uint64_t run_seed = 0;
  ScheduleSpec strategy;
  LrSpec lr;
  EvalReport report;
  bool dry_run = false;
};

struct RunOptions {
  int iterations = 5;
  std::uint64_t base_seed = 0;
  std::vector<std::uint64_t> seeds;  // overrides base_seed + i when non-empty
  bool dry_run = false;              // compose (and write) manifests only
  std::filesystem::path work_dir;
};

inline EvalReport evaluate_tags(const std::vector<Sentence>& test,
                                const std::vector<std::vector<std::string>>& predicted,
                                const LabelSet& labels = default_labels()) {
  std::vector<AnnotationRecord> gold, pred;
  for (std::size_t i = 0; i < test.size(); ++i) {
    gold.push_back(make_gold_record(test[i]));
    Sentence p = test[i];
    p.gold_tags = iob1_to_iob2(predicted.at(i));
    if (p.gold_tags->size() != p.tokens.size())
      throw InvalidArgument("prediction length mismatch for " + test[i].id);
    auto rec = make_gold_record(p);
    rec.provenance = Provenance::llm_standard;
    pred.push_back(std::move(rec));
  }
  return evaluate_annotations(gold, pred, labels);
}

inline std::vector<RunResult> run_experiment(const ExperimentConfig& cfg, Trainer* trainer,
                                             const CorpusStore& store,
                                             const std::vector<Sentence>& test,
                                             const RunOptions& opts = {}) {
  if (opts.iterations < 1) throw InvalidArgument("iterations must be >= 1");
  if (!opts.seeds.empty() && opts.seeds.size() != static_cast<std::size_t>(opts.iterations))
    throw InvalidArgument("seed list length must equal iterations");
  if (!opts.dry_run && !trainer) throw InvalidArgument("no trainer given");
  store.check(cfg.distilled);
  store.check(cfg.original);
  std::vector<RunResult> out;
  for (int i = 0; i < opts.iterations; ++i) {
    const std::uint64_t seed = opts.seeds.empty() ? opts.base_seed + i : opts.seeds[i];
    const auto manifests = compose_run(cfg.spec, cfg.distilled, cfg.original, cfg.lr, seed);
    RunResult r{cfg.name, seed, cfg.spec, cfg.lr, {}, opts.dry_run};
    if (opts.dry_run) {
      if (!opts.work_dir.empty()) write_manifests(opts.work_dir, manifests, cfg.spec, seed);
    } else {
      TrainingJob job{&cfg, &manifests, &store, &test, seed, opts.work_dir};
      r.report = evaluate_tags(test, trainer->train_and_predict(job));
    }
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Aggregation

struct Dispersion {
  double min = 0, max = 0, stddev = 0;
};

struct RunAggregate {
  std::string name;
  ScheduleSpec strategy;
  LrSpec lr;
  std::size_t runs = 0;
  EvalReport mean;
  std::map<std::string, Dispersion> dispersion;  // "<block>/<metric>"
};

inline std::string column_label(const RunAggregate& a) {
  return a.name + " / " + lr_mode_label(a.lr);
}

// Mean of every scalar metric over the runs. Dispersion uses the sample
// standard deviation (n - 1), 0 for a single run.
inline RunAggregate aggregate_runs(const std::vector<RunResult>& results,
                                   const LabelSet& labels = default_labels()) {
  if (results.empty()) throw InvalidArgument("aggregate_runs: no results");
  const auto& first = results.front();
  for (const auto& r : results)
    if (!(r.strategy == first.strategy) || !(r.lr == first.lr) || r.name != first.name)
      throw InvalidArgument("aggregate_runs: results mix different strategies");

  RunAggregate agg{first.name, first.strategy, first.lr, results.size(), {}, {}};
  const double n = static_cast<double>(results.size());
  auto& m = agg.mean;
  m.total_support = first.report.total_support;
  for (const auto& [l, s] : first.report.per_type) m.per_type[l].support = s.support;
  for (const auto& r : results) {
    auto acc = [&](Prf& dst, const Prf& src) {
      dst.precision += src.precision / n;
      dst.recall += src.recall / n;
      dst.f1 += src.f1 / n;
    };
    acc(m.micro, r.report.micro);
    acc(m.macro, r.report.macro);
    acc(m.weighted, r.report.weighted);
    for (const auto& [l, s] : r.report.per_type) acc(m.per_type[l].prf, s.prf);
  }

  std::map<std::string, std::vector<double>> samples;
  for (const auto& r : results)
    for (const auto& row : metric_rows(r.report, labels))
      samples[row.block + "/" + row.metric].push_back(row.value);
  for (const auto& [key, v] : samples) {
    Dispersion d;
    d.min = *std::min_element(v.begin(), v.end());
    d.max = *std::max_element(v.begin(), v.end());
    double mean = 0;
    for (double x : v) mean += x / static_cast<double>(v.size());
    if (v.size() > 1) {
      double ss = 0;
      for (double x : v) ss += (x - mean) * (x - mean);
      d.stddev = std::sqrt(ss / static_cast<double>(v.size() - 1));
    }
    agg.dispersion[key] = d;
  }
  return agg;
}

inline nlohmann::json to_json(const RunAggregate& a) {
  nlohmann::json disp = nlohmann::json::object();
  for (const auto& [k, d] : a.dispersion)
    disp[k] = {{"min", d.min}, {"max", d.max}, {"stddev", d.stddev}};
  return {{"name", a.name},
          {"strategy", to_string(a.strategy.kind)},
          {"k", a.strategy.k},
          {"n", a.strategy.n},
          {"T", a.strategy.T},
          {"base_lr", a.lr.base_lr},
          {"decay_factor", a.lr.decay_factor},
          {"runs", a.runs},
          {"mean", to_json(a.mean)},
          {"dispersion", disp}};
}

inline RunAggregate aggregate_from_json(const nlohmann::json& j) {
  RunAggregate a;
  a.name = j.at("name").get<std::string>();
  a.strategy = {blend_kind_from_string(j.at("strategy").get<std::string>()),
                j.value("k", 0.0), j.value("n", 0.0), j.value("T", 20)};
  a.lr = {j.value("base_lr", 1e-5), j.value("decay_factor", 1.0)};
  a.runs = j.value("runs", std::size_t{1});
  a.mean = report_from_json(j.at("mean"));
  if (j.contains("dispersion"))
    for (const auto& [k, d] : j["dispersion"].items())
      a.dispersion[k] = {d.at("min").get<double>(), d.at("max").get<double>(),
                         d.at("stddev").get<double>()};
  return a;
}

// ---------------------------------------------------------------------------
// Reports

enum class ReportLayout { phase1, phase2, phase3 };

inline ReportLayout layout_from_string(std::string_view s) {
  if (s == "phase1") return ReportLayout::phase1;
  if (s == "phase2") return ReportLayout::phase2;
  if (s == "phase3") return ReportLayout::phase3;
  throw InvalidArgument("unknown report layout '" + std::string(s) + "'");
}

struct ReportColumn {
  std::string label;
  EvalReport report;
};

struct ReportRow {
  std::string block;
  std::string metric;
  std::int64_t support = 0;
  std::vector<double> values;
  std::vector<bool> best;
};

struct ReportTable {
  std::vector<std::string> columns;
  std::vector<ReportRow> rows;
};

struct RenderedReport {
  std::string markdown;
  std::string csv;
};

namespace detail {

// Sort key placing columns in the published table order.
inline std::tuple<int, double, int> column_rank(const RunAggregate& a, ReportLayout layout) {
  const int lr = a.lr.decay_factor == 1.0 ? 0 : 1;
  if (layout == ReportLayout::phase2) {
    static const std::map<std::string, int> order{
        {"Group B", 0}, {"Group C", 1}, {"Group A", 2}, {"Group D", 3}, {"Group E", 4}};
    auto it = order.find(a.name);
    return {it == order.end() ? 99 : it->second, 0, lr};
  }
  if (layout == ReportLayout::phase3) {
    switch (a.strategy.kind) {
      case BlendKind::simple_mix: return {0, 0, lr};
      case BlendKind::all_blend: return {1, 0, lr};
      case BlendKind::sigmoid: return {2, a.strategy.k, lr};
      case BlendKind::power: return {3, a.strategy.n, lr};
      case BlendKind::cosine: return {4, 0, lr};
      default: return {5, 0, lr};
    }
  }
  return {0, 0, 0};
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

inline std::vector<std::string> csv_split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

inline std::string fmt(const char* spec, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

}  // namespace detail

inline ReportTable build_table(const std::vector<ReportColumn>& cols, ReportLayout layout,
                               const LabelSet& labels = default_labels()) {
  ReportTable t;
  for (const auto& c : cols) t.columns.push_back(c.label);
  if (cols.empty()) return t;

  std::vector<std::vector<MetricRow>> per_col;
  for (const auto& c : cols) per_col.push_back(metric_rows(c.report, labels));
  std::vector<std::size_t> pick;
  if (layout == ReportLayout::phase1) {
    // Overall precision, recall, micro/macro/weighted F1, then per type.
    // Indices refer to metric_rows order (f1, precision, recall per block).
    pick = {1, 2, 0, 3, 6};
    t.rows.reserve(5 + 3 * labels.size());
    for (std::size_t li = 0; li < labels.size(); ++li) {
      const std::size_t base = 9 + 3 * li;
      pick.insert(pick.end(), {base + 1, base + 2, base});
    }
  } else {
    for (std::size_t i = 0; i < per_col[0].size(); ++i) pick.push_back(i);
  }
  for (std::size_t idx : pick) {
    ReportRow row;
    const auto& proto = per_col[0][idx];
    row.block = proto.block;
    row.metric = proto.metric;
    row.support = proto.support;
    if (layout == ReportLayout::phase1 && idx < 9) {
      row.block = "Overall";
      static const char* names[] = {"Micro Average F1", "Precision", "Recall",
                                    "Macro Average F1", "", "",
                                    "Weighted Average F1", "", ""};
      row.metric = names[idx];
    }
    for (const auto& pc : per_col) row.values.push_back(pc[idx].value);
    const double best = *std::max_element(row.values.begin(), row.values.end());
    for (double v : row.values) row.best.push_back(v == best);
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline RenderedReport render_table(const ReportTable& t) {
  RenderedReport out;
  std::ostringstream md, csv;
  md << "| block | metric |";
  for (const auto& c : t.columns) md << ' ' << c << " |";
  md << "\n|---|---|";
  for (std::size_t i = 0; i < t.columns.size(); ++i) md << "---|";
  md << '\n';
  csv << "block,support,metric";
  for (const auto& c : t.columns) csv << ',' << detail::csv_field(c);
  csv << ",best\n";
  for (const auto& r : t.rows) {
    std::string block = r.block;
    if (r.block != "Overall") block += " (support: " + std::to_string(r.support) + ")";
    md << "| " << block << " | " << r.metric << " |";
    std::string best;
    for (std::size_t i = 0; i < r.values.size(); ++i) {
      const auto v = detail::fmt("%.3f", r.values[i]);
      md << ' ' << (r.best[i] ? "**" + v + "**" : v) << " |";
      if (r.best[i]) best += (best.empty() ? "" : "|") + t.columns[i];
    }
    md << '\n';
    csv << detail::csv_field(r.block) << ',' << r.support << ',' << detail::csv_field(r.metric);
    for (double v : r.values) csv << ',' << detail::fmt("%.17g", v);
    csv << ',' << detail::csv_field(best) << '\n';
  }
  out.markdown = md.str();
  out.csv = csv.str();
  return out;
}

// Rows: metric x (micro/macro/weighted avg, each label) with supports.
// Columns: one per aggregate, ordered per the layout. Best value per row
// is bold in markdown and named in the CSV "best" column.
inline RenderedReport emit_report(std::vector<RunAggregate> aggregates, ReportLayout layout,
                                  const LabelSet& labels = default_labels()) {
  std::stable_sort(aggregates.begin(), aggregates.end(), [&](const auto& a, const auto& b) {
    return detail::column_rank(a, layout) < detail::column_rank(b, layout);
  });
  std::vector<ReportColumn> cols;
  for (const auto& a : aggregates) cols.push_back({column_label(a), a.mean});
  return render_table(build_table(cols, layout, labels));
}

inline ReportTable read_report_csv(std::istream& in) {
  ReportTable t;
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty report CSV");
  auto head = detail::csv_split(line);
  if (head.size() < 4 || head[0] != "block" || head.back() != "best")
    throw ParseError("unexpected report CSV header", 1);
  t.columns.assign(head.begin() + 3, head.end() - 1);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto f = detail::csv_split(line);
    if (f.size() != head.size()) throw ParseError("field count mismatch", line_no);
    ReportRow r;
    r.block = f[0];
    r.support = std::stoll(f[1]);
    r.metric = f[2];
    std::set<std::string> best;
    std::stringstream bs(f.back());
    for (std::string b; std::getline(bs, b, '|');) best.insert(b);
    for (std::size_t i = 3; i + 1 < f.size(); ++i) {
      r.values.push_back(std::stod(f[i]));
      r.best.push_back(best.count(t.columns[i - 3]) > 0);
    }
    t.rows.push_back(std::move(r));
  }
  return t;
}

}  // namespace nerkd

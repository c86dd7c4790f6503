// Command-line front end: sample, annotate, align, evaluate, schedule,
// compose, run, report.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include <CLI11.hpp>

#include "nerkd/nerkd.hpp"

namespace fs = std::filesystem;
using namespace nerkd;

namespace {

bool is_jsonl(const std::string& path) {
  auto ext = fs::path(path).extension().string();
  return ext == ".jsonl" || ext == ".json";
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open " + path);
  return in;
}

std::ofstream open_out(const std::string& path) {
  if (auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidArgument("cannot write " + path);
  return out;
}

std::vector<Sentence> load_sentences(const std::string& path, Source source,
                                     const ToolkitConfig& cfg) {
  auto in = open_in(path);
  if (is_jsonl(path)) return read_jsonl(in, cfg.labels);
  std::vector<std::string> warnings;
  auto out = parse_conll(in, {cfg.scheme, source, cfg.labels}, &warnings);
  for (const auto& w : warnings) std::cerr << path << ": " << w << '\n';
  return out;
}

void save_sentences(const std::string& path, const std::vector<Sentence>& ss,
                    const ToolkitConfig& cfg) {
  auto out = open_out(path);
  if (is_jsonl(path)) write_jsonl(out, ss);
  else write_conll(out, ss, cfg.scheme);
}

PromptTemplate pick_template(const ToolkitConfig& cfg) {
  if (!cfg.template_path.empty()) return load_template(cfg.template_path);
  auto [standard, cot] = default_templates();
  return cfg.prompt_mode == PromptMode::cot ? cot : standard;
}

// Evaluation inputs: a CoNLL/JSONL tagged file, or annotation records.
std::vector<AnnotationRecord> load_as_records(const std::string& path, Source source,
                                              const ToolkitConfig& cfg) {
  if (is_jsonl(path)) {
    auto in = open_in(path);
    std::string first;
    std::getline(in, first);
    if (first.find("\"sentence_id\"") != std::string::npos) {
      auto in2 = open_in(path);
      return read_records(in2);
    }
  }
  std::vector<AnnotationRecord> out;
  for (const auto& s : load_sentences(path, source, cfg)) out.push_back(make_gold_record(s));
  return out;
}

void write_report_files(const std::vector<ReportColumn>& cols, ReportLayout layout,
                        const std::string& md_path, const std::string& csv_path,
                        const LabelSet& labels) {
  auto rendered = render_table(build_table(cols, layout, labels));
  if (!md_path.empty()) open_out(md_path) << rendered.markdown;
  else std::cout << rendered.markdown;
  if (!csv_path.empty()) open_out(csv_path) << rendered.csv;
}

std::unique_ptr<Trainer> make_trainer(const ExperimentSettings& e) {
  if (e.trainer == "baseline") return std::make_unique<BaselineTrainer>();
  if (e.trainer == "gold-echo") return std::make_unique<GoldEchoTrainer>();
  if (e.trainer == "external") {
    if (e.command.empty()) throw InvalidArgument("external trainer needs --command");
    return std::make_unique<ExternalTrainer>(e.command);
  }
  throw InvalidArgument("unknown trainer '" + e.trainer + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LLM-distilled NER data toolkit"};
  app.require_subcommand(1);
  std::string config_path;
  std::optional<std::uint64_t> seed_flag;
  app.add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed_flag, "Random seed (overrides config)");

  ToolkitConfig cfg;
  auto load_cfg = [&] {
    if (!config_path.empty()) cfg = load_config(config_path);
    if (seed_flag) cfg.seed = *seed_flag;
  };

  // sample
  auto* sample = app.add_subcommand("sample", "Draw a seeded sentence sample from a corpus");
  std::string s_in, s_out, s_source = "conll-train", s_exclude;
  std::size_t s_n = 0, s_min_len = 1;
  sample->add_option("--input", s_in, "CoNLL or JSONL corpus")->required();
  sample->add_option("--n", s_n, "Sample size")->required();
  sample->add_option("--source", s_source, "conll-train|conll-test|bbc|other");
  sample->add_option("--min-tokens", s_min_len, "Drop shorter sentences first");
  sample->add_option("--exclude", s_exclude, "JSONL/CoNLL whose ids must not be drawn");
  sample->add_option("--out", s_out, "Output .jsonl or .conll")->required();

  // annotate
  auto* annotate = app.add_subcommand("annotate", "Annotate sentences with the LLM");
  std::string a_in, a_out, a_mode, a_template, a_replay, a_export, a_source = "other";
  bool a_offline = false;
  annotate->add_option("--input", a_in, "Sentences (CoNLL or JSONL)")->required();
  annotate->add_option("--source", a_source, "Source for CoNLL input ids");
  annotate->add_option("--mode", a_mode, "standard|cot; with --replay keeps that mode only");
  annotate->add_option("--template", a_template, "Prompt template JSON");
  annotate->add_option("--out", a_out, "Annotation records JSONL")->required();
  annotate->add_option("--replay", a_replay, "Rebuild records from a transcripts JSONL");
  annotate->add_option("--export-transcripts", a_export, "Write transcripts JSONL");
  annotate->add_flag("--offline", a_offline, "Serve from cache only");

  // align
  auto* align = app.add_subcommand("align", "Align surfaces to token spans and emit tags");
  std::string al_records, al_sentences, al_out, al_tagged, al_source = "other";
  align->add_option("--records", al_records, "Annotation records JSONL")->required();
  align->add_option("--sentences", al_sentences, "Sentences (CoNLL or JSONL)")->required();
  align->add_option("--source", al_source, "Source for CoNLL input ids");
  align->add_option("--out", al_out, "Aligned-record JSONL")->required();
  align->add_option("--tagged", al_tagged, "Flattened tags as .jsonl or .conll");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Score predictions against gold");
  std::string e_gold, e_json, e_md, e_csv, e_source = "conll-train";
  std::vector<std::string> e_pred;
  evaluate->add_option("--gold", e_gold, "Gold CoNLL or JSONL")->required();
  evaluate->add_option("--source", e_source, "Source for CoNLL input ids");
  evaluate->add_option("--pred", e_pred, "Predictions: records JSONL, tagged JSONL or CoNLL")
      ->required();
  evaluate->add_option("--json", e_json, "Full-precision JSON report");
  evaluate->add_option("--md", e_md, "Markdown table");
  evaluate->add_option("--csv", e_csv, "CSV table");

  // schedule
  auto* schedule = app.add_subcommand("schedule", "Tabulate blend-schedule weights");
  std::string sc_kind, sc_out, sc_svg;
  double sc_k = 0, sc_n = 0;
  int sc_T = 20;
  bool sc_family = false;
  schedule->add_option("--kind", sc_kind, "Schedule kind");
  schedule->add_option("--k", sc_k, "Sigmoid steepness");
  schedule->add_option("--n", sc_n, "Power exponent");
  schedule->add_option("--epochs", sc_T, "Total epochs T");
  schedule->add_flag("--family", sc_family, "All 14 reference curves");
  schedule->add_option("--out", sc_out, "CSV output (stdout if absent)");
  schedule->add_option("--svg", sc_svg, "SVG plot output");

  // compose
  auto* compose = app.add_subcommand("compose", "Write per-epoch manifests for one run");
  std::string c_distilled, c_original, c_out, c_kind;
  double c_k = 0, c_n = 0, c_decay = 0;
  int c_T = 0;
  compose->add_option("--distilled", c_distilled, "Distilled sentences (JSONL)")->required();
  compose->add_option("--original", c_original, "Original sentences (JSONL)")->required();
  compose->add_option("--kind", c_kind, "Schedule kind");
  compose->add_option("--k", c_k, "Sigmoid steepness");
  compose->add_option("--n", c_n, "Power exponent");
  compose->add_option("--epochs", c_T, "Total epochs T");
  compose->add_option("--decay", c_decay, "LR decay factor");
  compose->add_option("--out", c_out, "Manifest root directory")->required();

  // run
  auto* run = app.add_subcommand("run", "Train, predict and evaluate repeated runs");
  std::string r_distilled, r_bbc, r_original, r_test, r_out, r_group, r_kind, r_trainer,
      r_command, r_work;
  double r_k = 0, r_n = 0, r_decay = 0;
  int r_iterations = 0;
  bool r_grid = false, r_dry = false;
  run->add_option("--distilled", r_distilled, "LLM-tagged corpus sample (JSONL/CoNLL)")
      ->required();
  run->add_option("--extra-distilled", r_bbc, "LLM-tagged out-of-corpus sentences");
  run->add_option("--original", r_original, "Gold-tagged corpus sample")->required();
  run->add_option("--test", r_test, "Gold test set")->required();
  run->add_option("--group", r_group, "Preset A-E");
  run->add_option("--kind", r_kind, "Schedule kind (instead of --group)");
  run->add_option("--k", r_k, "Sigmoid steepness");
  run->add_option("--n", r_n, "Power exponent");
  run->add_option("--decay", r_decay, "LR decay factor");
  run->add_flag("--grid", r_grid, "Every group and strategy with both LR modes");
  run->add_option("--iterations", r_iterations, "Runs per configuration");
  run->add_option("--trainer", r_trainer, "baseline|gold-echo|external");
  run->add_option("--command", r_command, "External trainer executable");
  run->add_option("--work-dir", r_work, "Manifest and trainer directory");
  run->add_flag("--dry-run", r_dry, "Compose manifests only");
  run->add_option("--out", r_out, "Aggregates JSON")->required();

  // report
  auto* report = app.add_subcommand("report", "Render aggregates as markdown and CSV");
  std::vector<std::string> rp_in;
  std::string rp_layout = "phase2", rp_md, rp_csv;
  report->add_option("--input", rp_in, "Aggregates JSON from `run`")->required();
  report->add_option("--layout", rp_layout, "phase1|phase2|phase3");
  report->add_option("--md", rp_md, "Markdown output (stdout if absent)");
  report->add_option("--csv", rp_csv, "CSV output");

  CLI11_PARSE(app, argc, argv);

  try {
    load_cfg();
    if (*sample) {
      auto pool = filter_by_length(load_sentences(s_in, source_from_string(s_source), cfg),
                                   s_min_len);
      std::unordered_set<std::string> exclude;
      if (!s_exclude.empty())
        for (const auto& s : load_sentences(s_exclude, source_from_string(s_source), cfg))
          exclude.insert(s.id);
      save_sentences(s_out, sample_sentences_excluding(pool, s_n, cfg.seed, exclude), cfg);
    } else if (*annotate) {
      if (!a_mode.empty()) cfg.prompt_mode = prompt_mode_from_string(a_mode);
      if (!a_template.empty()) cfg.template_path = a_template;
      if (a_offline) cfg.annotator.cache_mode = CacheMode::read_only;
      const auto sentences = load_sentences(a_in, source_from_string(a_source), cfg);
      std::vector<AnnotationRecord> records;
      if (!a_replay.empty()) {
        auto in = open_in(a_replay);
        auto transcripts = read_transcripts(in);
        if (!a_mode.empty()) {
          const auto keep = cfg.prompt_mode == PromptMode::cot ? Provenance::llm_cot
                                                               : Provenance::llm_standard;
          std::erase_if(transcripts, [&](const Transcript& t) { return t.provenance != keep; });
        }
        records = records_from_transcripts(transcripts, sentences, cfg.labels,
                                           cfg.annotator.case_repair);
      } else {
        const auto tmpl = pick_template(cfg);
        validate(tmpl, cfg.labels);
        ResponseCache cache(cfg.cache_dir);
        std::unique_ptr<Transport> transport;
        if (cfg.annotator.cache_mode != CacheMode::read_only)
          transport = std::make_unique<HttpTransport>(cfg.endpoint);
        Annotator annotator(cfg.annotator, &cache, transport.get());
        records = annotator.annotate_all(sentences, tmpl, cfg.parallelism);
      }
      {
        auto out = open_out(a_out);
        write_records(out, records);
      }
      if (!a_export.empty()) {
        auto out = open_out(a_export);
        write_transcripts(out, records);
      }
      std::size_t rejected = 0, repaired = 0;
      for (const auto& r : records) {
        rejected += r.status == RecordStatus::rejected;
        repaired += r.status == RecordStatus::repaired;
      }
      std::cerr << records.size() << " records, " << repaired << " repaired, " << rejected
                << " rejected\n";
    } else if (*align) {
      validate(cfg.alignment, cfg.labels);
      const auto sentences = load_sentences(al_sentences, source_from_string(al_source), cfg);
      std::unordered_map<std::string, const Sentence*> by_id;
      for (const auto& s : sentences) by_id.emplace(s.id, &s);
      auto in = open_in(al_records);
      auto records = read_records(in);
      auto out = open_out(al_out);
      std::vector<Sentence> tagged;
      for (auto& r : records) {
        auto it = by_id.find(r.sentence_id);
        if (it == by_id.end())
          throw InvalidArgument("record for unknown sentence " + r.sentence_id);
        align_record(r, *it->second, cfg.alignment);
        auto tags = record_to_tags(*it->second, r, cfg.alignment);
        out << aligned_record_json(r, tags.report).dump() << '\n';
        Sentence s = *it->second;
        s.gold_tags = std::move(tags.tags);
        tagged.push_back(std::move(s));
      }
      if (!al_tagged.empty()) save_sentences(al_tagged, tagged, cfg);
    } else if (*evaluate) {
      const auto gold_sentences = load_sentences(e_gold, source_from_string(e_source), cfg);
      std::unordered_map<std::string, const Sentence*> by_id;
      std::vector<AnnotationRecord> gold;
      for (const auto& s : gold_sentences) {
        by_id.emplace(s.id, &s);
        gold.push_back(make_gold_record(s));
      }
      std::vector<ReportColumn> cols;
      nlohmann::json all = nlohmann::json::object();
      for (const auto& p : e_pred) {
        auto pred = load_as_records(p, source_from_string(e_source), cfg);
        // raw LLM records carry surfaces only; resolve them against the gold tokens
        for (auto& r : pred)
          if (auto it = by_id.find(r.sentence_id); it != by_id.end() && r.entities.empty())
            align_record(r, *it->second, cfg.alignment);
        auto rep = evaluate_annotations(gold, pred, cfg.labels, cfg.alignment);
        all[fs::path(p).stem().string()] = to_json(rep);
        cols.push_back({fs::path(p).stem().string(), rep});
      }
      if (!e_json.empty()) open_out(e_json) << all.dump(2) << '\n';
      write_report_files(cols, ReportLayout::phase1, e_md, e_csv, cfg.labels);
    } else if (*schedule) {
      std::vector<ScheduleSpec> specs;
      if (sc_family) {
        specs = curve_family(sc_T);
      } else {
        if (sc_kind.empty()) throw InvalidArgument("schedule needs --kind or --family");
        specs.push_back({blend_kind_from_string(sc_kind), sc_k, sc_n, sc_T});
      }
      for (const auto& s : specs) validate(s);
      if (sc_out.empty()) write_curves_csv(std::cout, specs);
      else {
        auto out = open_out(sc_out);
        write_curves_csv(out, specs);
      }
      if (!sc_svg.empty()) {
        auto out = open_out(sc_svg);
        write_curves_svg(out, specs);
      }
    } else if (*compose) {
      ScheduleSpec spec = cfg.schedule;
      if (!c_kind.empty()) spec = {blend_kind_from_string(c_kind), c_k, c_n, spec.T};
      if (c_T > 0) spec.T = c_T;
      LrSpec lr = cfg.lr;
      if (c_decay > 0) lr.decay_factor = c_decay;
      CorpusStore store;
      auto d = store.add_dataset("distilled", load_sentences(c_distilled, Source::other, cfg),
                                 AnnotationSource::llm);
      auto o = store.add_dataset("original", load_sentences(c_original, Source::other, cfg),
                                 AnnotationSource::gold);
      auto manifests = compose_run(spec, d, o, lr, cfg.seed);
      std::cout << write_manifests(c_out, manifests, spec, cfg.seed).string() << '\n';
    } else if (*run) {
      ExperimentSettings es = cfg.experiment;
      if (r_iterations > 0) es.iterations = r_iterations;
      if (!r_trainer.empty()) es.trainer = r_trainer;
      if (!r_command.empty()) es.command = r_command;
      if (!r_work.empty()) es.work_dir = r_work;

      CorpusStore store;
      ExperimentDatasets ds;
      ds.distilled_conll = store.add_dataset(
          "distilled", load_sentences(r_distilled, Source::conll_train, cfg),
          AnnotationSource::llm);
      ds.distilled_bbc = {"extra", {}, AnnotationSource::llm};
      if (!r_bbc.empty())
        ds.distilled_bbc = store.add_dataset("extra", load_sentences(r_bbc, Source::bbc, cfg),
                                             AnnotationSource::llm);
      ds.original = store.add_dataset(
          "original", load_sentences(r_original, Source::conll_train, cfg),
          AnnotationSource::gold);
      const auto test = load_sentences(r_test, Source::conll_test, cfg);

      LrSpec lr = cfg.lr;
      if (r_decay > 0) lr.decay_factor = r_decay;
      std::vector<ExperimentConfig> configs;
      if (r_grid) {
        configs = reference_grid(ds, cfg.schedule.T);
      } else if (!r_group.empty()) {
        configs.push_back(preset(group_from_string(r_group), ds, lr, cfg.schedule.T));
      } else {
        ScheduleSpec spec = cfg.schedule;
        if (!r_kind.empty()) spec = {blend_kind_from_string(r_kind), r_k, r_n, spec.T};
        configs.push_back({strategy_label(spec), spec,
                           r_bbc.empty() ? ds.distilled_conll
                                         : concat("distilled+extra", ds.distilled_conll,
                                                  ds.distilled_bbc),
                           ds.original, lr});
      }
      auto trainer = r_dry ? nullptr : make_trainer(es);
      nlohmann::json out = nlohmann::json::array();
      for (const auto& c : configs) {
        RunOptions opts;
        opts.iterations = es.iterations;
        opts.base_seed = cfg.seed;
        opts.dry_run = r_dry;
        if (r_dry || es.trainer == "external")
          opts.work_dir = fs::path(es.work_dir) / (c.name + " " + lr_mode_label(c.lr));
        auto results = run_experiment(c, trainer.get(), store, test, opts);
        if (!r_dry) out.push_back(to_json(aggregate_runs(results, cfg.labels)));
        std::cerr << column_label({c.name, c.spec, c.lr, 0, {}, {}}) << ": "
                  << results.size() << " run(s)\n";
      }
      open_out(r_out) << out.dump(2) << '\n';
    } else if (*report) {
      std::vector<RunAggregate> aggs;
      for (const auto& path : rp_in) {
        auto in = open_in(path);
        auto j = nlohmann::json::parse(in);
        if (j.is_array())
          for (const auto& a : j) aggs.push_back(aggregate_from_json(a));
        else
          aggs.push_back(aggregate_from_json(j));
      }
      auto rendered = emit_report(aggs, layout_from_string(rp_layout), cfg.labels);
      if (!rp_md.empty()) open_out(rp_md) << rendered.markdown;
      else std::cout << rendered.markdown;
      if (!rp_csv.empty()) open_out(rp_csv) << rendered.csv;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

// acrodis: command-line driver for corpus preparation, local-model runs,
// scoring and reporting.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <nlohmann/json.hpp>

#include "acrodis/corpus.h"
#include "acrodis/error.h"
#include "acrodis/inference.h"
#include "acrodis/pipeline.h"
#include "acrodis/report.h"
#include "acrodis/textnorm.h"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace acrodis;

namespace {

enum ExitCode : int { kOk = 0, kConfig = 2, kData = 3, kBackend = 4, kInternal = 5 };

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return kConfig;
    case ErrorKind::data: return kData;
    case ErrorKind::backend: return kBackend;
    case ErrorKind::internal: return kInternal;
  }
  return kInternal;
}

struct Options {
  bool json_out = false;
  std::string config_path;
  std::string runs_dir = "runs";

  // prepare
  std::string input;
  std::string out_dir;
  std::size_t rule_min_len = 2;
  std::string annotate = "none";
  std::string overrides_path;

  // stats
  std::vector<std::string> corpora;
  std::string dataset_label;

  // run
  std::string corpus_path;
  std::string mode = "single-pass";
  std::string backend = "mock";
  int iterations = 5;
  bool assume_perfect = false;
  std::string endpoint;
  std::string model;
  std::string detector_model;
  std::string expander_model;
  bool force_remote = false;
  std::size_t parallelism = 0;
  std::string label;
  double mock_error_rate = 0.0;
  std::uint64_t mock_seed = 0;
  std::vector<std::string> mock_block;
  std::string mock_dictionary;

  // evaluate / report
  std::vector<std::string> runs;
  std::string format = "markdown";
  bool summary = false;
  bool calibration = false;
  std::string scores_csv;

  // normalize
  std::string norm_mode = "raw";
};

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("'" + path.string() + "' is not valid JSON");
  return j;
}

// Flag > environment > file.
json load_config(const Options& o) {
  std::string path = o.config_path;
  if (path.empty()) {
    if (const char* env = std::getenv("ACRODIS_CONFIG")) path = env;
  }
  if (path.empty() && fs::exists("acrodis.json")) path = "acrodis.json";
  return path.empty() ? json::object() : read_json_file(path);
}

inference::BackendConfig backend_config(const Options& o, const json& file, const std::string& role,
                                        const std::string& role_model) {
  inference::BackendConfig c;
  if (file.contains("backend")) c = inference::BackendConfig::from_json(file["backend"], c);
  if (!role.empty() && file.contains(role)) c = inference::BackendConfig::from_json(file[role], c);
  if (const char* env = std::getenv("ACRODIS_ENDPOINT")) c.endpoint = env;
  if (const char* env = std::getenv("ACRODIS_MODEL")) c.model_name = env;
  if (!o.endpoint.empty()) c.endpoint = o.endpoint;
  if (!o.model.empty()) c.model_name = o.model;
  if (!role_model.empty()) c.model_name = role_model;
  if (o.force_remote) c.force_remote = true;
  if (o.parallelism > 0) c.parallelism = o.parallelism;
  c.validate();
  return c;
}

inference::MockBehavior mock_behavior(const Options& o, const json& file, const corpus::Corpus& corpus) {
  inference::MockBehavior b = file.contains("mock") ? inference::MockBehavior::from_json(file["mock"])
                                                    : inference::MockBehavior{};
  if (!o.mock_dictionary.empty()) {
    json d = read_json_file(o.mock_dictionary);
    b.dictionary = d.get<std::map<std::string, std::string>>();
  }
  // Without an explicit dictionary the mock answers with the corpus gold.
  if (b.dictionary.empty() && b.instance_answers.empty())
    for (const auto& inst : corpus.instances()) b.instance_answers[inst.id] = {inst.acronym, inst.expansion};
  if (o.mock_error_rate > 0.0) b.error_rate = o.mock_error_rate;
  if (o.mock_seed != 0) b.seed = o.mock_seed;
  for (const auto& id : o.mock_block) b.block_ids.insert(id);
  if (b.population.empty())
    for (const auto& inst : corpus.instances()) b.population.push_back(inst.id);
  return b;
}

corpus::ExtractionRule extraction_rule(const Options& o) {
  corpus::ExtractionRule rule;
  rule.min_length = o.rule_min_len;
  if (!o.overrides_path.empty()) {
    json j = read_json_file(o.overrides_path);
    rule.overrides = j.get<std::map<std::string, std::vector<std::string>>>();
  }
  rule.validate();
  return rule;
}

void print(const Options& o, const json& j, const std::string& human) {
  if (o.json_out) {
    std::cout << j.dump(2) << '\n';
  } else {
    std::cout << human;
  }
}

int cmd_prepare(const Options& o) {
  const json file = load_config(o);
  const corpus::ExtractionRule rule = extraction_rule(o);
  const corpus::Corpus full = corpus::load_corpus(o.input);
  rule.validate_against(full);

  const corpus::FilterResult by_rule = corpus::filter_single_acronym(full, rule);
  std::vector<corpus::AnnotationFlags> flags;
  if (o.annotate != "none") {
    std::unique_ptr<inference::Backend> annotator;
    if (o.annotate == "mock") {
      annotator = std::make_unique<inference::MockBackend>(mock_behavior(o, file, full), "mock-annotator");
    } else if (o.annotate == "http") {
      annotator = std::make_unique<inference::HttpBackend>(backend_config(o, file, "annotator", ""));
    } else {
      throw ConfigError("--annotate expects none, mock or http");
    }
    flags = corpus::annotate_all(by_rule.corpus.instances(), *annotator, rule, annotator->parallelism());
  }
  const corpus::FilterResult final_set = corpus::filter_single_acronym(by_rule.corpus, rule, &flags);

  fs::create_directories(o.out_dir);
  corpus::write_corpus_csv(full, fs::path(o.out_dir) / "cascaded.csv");
  corpus::write_corpus_csv(final_set.corpus, fs::path(o.out_dir) / "single_pass.csv");
  std::ofstream review(fs::path(o.out_dir) / "review.jsonl");
  std::size_t flagged = 0;
  for (const auto& f : flags) {
    if (!f.needs_review) continue;
    ++flagged;
    const auto* inst = full.find(f.id);
    review << json{{"id", f.id},
                   {"text", inst->text},
                   {"rule_items", corpus::candidates_for(*inst, rule)},
                   {"detected_items", f.detected_items}}
                  .dump()
           << '\n';
  }

  json summary{{"input", o.input},
               {"total", full.size()},
               {"single_acronym_by_rule", by_rule.corpus.size()},
               {"flagged_for_review", flagged},
               {"single_pass", final_set.corpus.size()},
               {"outputs",
                {(fs::path(o.out_dir) / "cascaded.csv").string(), (fs::path(o.out_dir) / "single_pass.csv").string(),
                 (fs::path(o.out_dir) / "review.jsonl").string()}}};
  std::ostringstream human;
  human << "instances:              " << full.size() << "\n"
        << "single acronym (rule):  " << by_rule.corpus.size() << "\n"
        << "flagged for review:     " << flagged << "\n"
        << "single-pass subset:     " << final_set.corpus.size() << "\n"
        << "written to " << o.out_dir << "/{cascaded.csv,single_pass.csv,review.jsonl}\n";
  print(o, summary, human.str());
  return kOk;
}

int cmd_stats(const Options& o) {
  corpus::ExtractionRule rule;
  rule.min_length = o.rule_min_len;
  std::vector<std::tuple<std::string, std::string, corpus::CorpusStats>> rows;
  json docs = json::array();
  for (const auto& path : o.corpora) {
    const corpus::Corpus c = corpus::load_corpus(path);
    const corpus::CorpusStats s = corpus::compute_stats(c);
    bool single = true;
    for (const auto& inst : c.instances()) single = single && corpus::candidates_for(inst, rule).size() == 1;
    std::string dataset = o.dataset_label.empty() ? fs::path(path).stem().string() : o.dataset_label;
    std::string mode = single ? "Single-pass" : "Cascaded";
    rows.emplace_back(dataset, mode, s);
    json j = corpus::stats_to_json(s, dataset, mode);
    j["source"] = path;
    docs.push_back(j);
  }
  json out = docs.size() == 1 ? docs[0] : docs;
  if (o.json_out) {
    std::cout << out.dump(2) << '\n';
  } else {
    std::cout << corpus::stats_to_markdown(rows) << '\n' << out.dump(2) << '\n';
  }
  return kOk;
}

int cmd_run(const Options& o) {
  const json file = load_config(o);
  const pipeline::RunMode mode = pipeline::run_mode_from_string(o.mode);
  if (o.backend != "mock" && o.backend != "http") throw ConfigError("--backend expects mock or http");
  corpus::Corpus data = corpus::load_corpus(o.corpus_path);
  corpus::ExtractionRule rule;
  rule.min_length = o.rule_min_len;
  if (mode == pipeline::RunMode::single_pass) {
    corpus::FilterResult kept = corpus::filter_single_acronym(data, rule);
    if (!kept.rejected.empty())
      std::cerr << "note: " << kept.rejected.size() << " of " << data.size()
                << " instances skipped (not exactly one acronym candidate)\n";
    if (kept.corpus.empty()) throw DataError("no single-acronym instances in " + o.corpus_path);
    data = std::move(kept.corpus);
  }

  std::unique_ptr<inference::Backend> detector;
  std::unique_ptr<inference::Backend> expander;
  json snapshot;
  if (o.backend == "mock") {
    auto behavior = mock_behavior(o, file, data);
    snapshot = {{"kind", "mock"}, {"mock", behavior.to_json()}};
    snapshot["mock"].erase("instance_answers");
    snapshot["mock"].erase("population");
    detector = std::make_unique<inference::MockBackend>(behavior, "mock");
    expander = std::make_unique<inference::MockBackend>(behavior, "mock");
  } else if (o.backend == "http") {
    auto det_cfg = backend_config(o, file, "detector", o.detector_model);
    auto exp_cfg = backend_config(o, file, "expander", o.expander_model);
    snapshot = {{"kind", "http"}, {"detector", det_cfg.to_json()}, {"expander", exp_cfg.to_json()}};
    detector = std::make_unique<inference::HttpBackend>(det_cfg);
    expander = std::make_unique<inference::HttpBackend>(exp_cfg);
  } else {
    throw ConfigError("--backend expects mock or http");
  }

  pipeline::RunConfig cfg;
  cfg.mode = mode;
  cfg.iterations = o.iterations;
  cfg.assume_perfect_detection = o.assume_perfect;
  cfg.detector_backend = detector->id();
  cfg.expander_backend = mode == pipeline::RunMode::cascaded ? expander->id() : "";
  cfg.model_label = o.label;
  cfg.corpus_path = fs::absolute(o.corpus_path).string();
  cfg.backend_snapshot = snapshot;
  cfg.backend_snapshot["rule_min_length"] = o.rule_min_len;

  auto progress = [&](int it, std::size_t done, std::size_t total) {
    if (!o.json_out && (done == total || done % 100 == 0))
      std::cerr << "\riteration " << it << "/" << o.iterations << ": " << done << "/" << total << std::flush;
    if (!o.json_out && done == total) std::cerr << '\n';
  };
  pipeline::RunLog log = mode == pipeline::RunMode::single_pass
                             ? pipeline::run_single_pass(data, *expander, cfg, progress)
                             : pipeline::run_cascaded(data, *detector, *expander, cfg, progress);
  const fs::path dir = pipeline::write_run_dir(log, o.runs_dir);

  std::map<std::string, std::size_t> counts;
  for (const auto& e : log.entries) ++counts[std::string(pipeline::to_string(e.status))];
  json summary{{"run_id", log.run_id}, {"dir", dir.string()}, {"entries", log.entries.size()}, {"status", counts}};
  std::ostringstream human;
  human << "run " << log.run_id << ": " << log.entries.size() << " entries -> " << dir.string() << "\n";
  for (const auto& [k, v] : counts) human << "  " << k << ": " << v << "\n";
  print(o, summary, human.str());
  return kOk;
}

struct LoadedRun {
  pipeline::RunLog log;
  fs::path log_path;
  corpus::Corpus corpus;
};

LoadedRun load_run(const Options& o, const std::string& run) {
  fs::path log_path = pipeline::resolve_run(run, o.runs_dir);
  pipeline::RunLog log = pipeline::load_log(log_path);
  std::string corpus_path = o.corpus_path.empty() ? log.config.corpus_path : o.corpus_path;
  corpus::Corpus c = corpus::load_corpus(corpus_path);
  // Single-pass runs cover only the single-acronym rows `run` kept.
  if (log.config.mode == pipeline::RunMode::single_pass) {
    corpus::ExtractionRule rule;
    rule.min_length = log.config.backend_snapshot.value("rule_min_length", rule.min_length);
    c = corpus::filter_single_acronym(c, rule).corpus;
  }
  return {std::move(log), log_path, std::move(c)};
}

int cmd_evaluate(const Options& o) {
  json all = json::array();
  for (const auto& run : o.runs) {
    LoadedRun r = load_run(o, run);
    report::ScoreReport score = report::score_run(r.log, r.corpus);
    json doc = score.to_json();
    doc["calibration"] = report::calibration_report(score).to_json();
    std::ofstream(r.log_path.parent_path() / "score.json") << doc.dump(2) << '\n';
    if (!o.scores_csv.empty()) std::ofstream(o.scores_csv, std::ios::binary) << report::emit_scores_csv(score);
    all.push_back(std::move(doc));
  }
  std::cout << (all.size() == 1 ? all[0] : all).dump(2) << '\n';
  return kOk;
}

int cmd_report(const Options& o) {
  std::vector<report::ScoreReport> reports;
  json docs = json::array();
  std::ostringstream calibration_text;
  for (const auto& run : o.runs) {
    LoadedRun r = load_run(o, run);
    reports.push_back(report::score_run(r.log, r.corpus));
    auto cal = report::calibration_report(reports.back());
    json doc = reports.back().to_json();
    doc["calibration"] = cal.to_json();
    docs.push_back(std::move(doc));
    if (o.calibration) {
      calibration_text << "\ncalibration for " << reports.back().model << " (" << reports.back().run_id << ")"
                       << (cal.overconfident ? ": OVERCONFIDENT" : "") << "\n";
      for (const auto& b : cal.bins)
        if (b.count > 0)
          calibration_text << "  [" << b.lo << ", " << b.hi << (b.hi >= 1.0 ? "]" : ")") << " n=" << b.count
                           << " accuracy=" << b.empirical_accuracy << "\n";
    }
  }
  if (o.json_out) {
    std::cout << docs.dump(2) << '\n';
    return kOk;
  }
  const auto fmt = report::format_from_string(o.format);
  std::cout << (o.summary ? report::emit_summary(reports, fmt) : report::emit_tables(reports, fmt));
  std::cout << calibration_text.str();
  return kOk;
}

int cmd_normalize(const Options& o) {
  const auto mode = textnorm::mode_from_string(o.norm_mode);
  std::string line;
  while (std::getline(std::cin, line)) {
    std::string out = textnorm::normalize(line, mode);
    if (o.json_out) {
      std::cout << json{{"mode", textnorm::to_string(mode)}, {"input", line}, {"output", out}}.dump() << '\n';
    } else {
      std::cout << out << '\n';
    }
  }
  return kOk;
}

int cmd_probe(const Options& o) {
  const json file = load_config(o);
  inference::BackendConfig cfg = backend_config(o, file, "", "");
  inference::HealthReport h = inference::probe(cfg);
  json j{{"endpoint", cfg.endpoint},
         {"model", cfg.model_name},
         {"reachable", h.reachable},
         {"model_available", h.model_available ? json(*h.model_available) : json(nullptr)},
         {"models", h.models},
         {"healthy", h.healthy()},
         {"detail", h.detail}};
  print(o, j, (h.healthy() ? "healthy: " : "unhealthy: ") + h.detail + "\n");
  return h.healthy() ? kOk : kBackend;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Local clinical acronym disambiguation: corpus prep, runs, scoring, reports"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_flag("--json", o.json_out, "Machine-readable JSON output");
    sub->add_option("--config", o.config_path, "Config file (JSON); else $ACRODIS_CONFIG, else ./acrodis.json");
  };
  auto add_backend = [&](CLI::App* sub) {
    sub->add_option("--endpoint", o.endpoint, "Inference server base URL (overrides $ACRODIS_ENDPOINT)");
    sub->add_option("--model", o.model, "Model name (overrides $ACRODIS_MODEL)");
    sub->add_flag("--force-remote", o.force_remote, "Allow a non-private endpoint");
    sub->add_option("--parallelism", o.parallelism, "Max requests in flight");
  };
  auto add_mock = [&](CLI::App* sub) {
    sub->add_option("--mock-error-rate", o.mock_error_rate, "Fraction of instances the mock answers wrongly")
        ->check(CLI::Range(0.0, 1.0));
    sub->add_option("--mock-seed", o.mock_seed, "Seed selecting the corrupted instances");
    sub->add_option("--mock-block", o.mock_block, "Instance ids the mock refuses (empty reply)");
    sub->add_option("--mock-dictionary", o.mock_dictionary, "JSON acronym->expansion map (default: corpus gold)");
  };

  auto* prepare = app.add_subcommand("prepare", "Validate a corpus and split out the single-acronym subset");
  add_common(prepare);
  add_backend(prepare);
  add_mock(prepare);
  prepare->add_option("--input", o.input, "Corpus CSV/JSONL")->required();
  prepare->add_option("--out", o.out_dir, "Output directory")->required();
  prepare->add_option("--rule-min-len", o.rule_min_len, "Minimum uppercase run length")->check(CLI::Range(2, 64));
  prepare->add_option("--annotate", o.annotate, "Annotator backend: none, mock or http");
  prepare->add_option("--overrides", o.overrides_path, "JSON id -> [acronyms] of confirmed candidates");

  auto* stats = app.add_subcommand("stats", "Corpus statistics (counts, uniqueness, overshadowed ratio)");
  add_common(stats);
  stats->add_option("--corpus", o.corpora, "Corpus CSV/JSONL (repeatable)")->required();
  stats->add_option("--label", o.dataset_label, "Dataset label for the table");
  stats->add_option("--rule-min-len", o.rule_min_len, "Minimum uppercase run length")->check(CLI::Range(2, 64));

  auto* run = app.add_subcommand("run", "Run single-pass or cascaded inference over a corpus");
  add_common(run);
  add_backend(run);
  add_mock(run);
  run->add_option("--corpus", o.corpus_path, "Corpus CSV/JSONL")->required();
  run->add_option("--mode", o.mode, "single-pass or cascaded");
  run->add_option("--backend", o.backend, "mock or http");
  run->add_option("--iterations", o.iterations, "Inference iterations per prompt")->check(CLI::PositiveNumber);
  run->add_flag("--assume-perfect-detection", o.assume_perfect, "Cascaded: route the gold acronym, skip detection");
  run->add_option("--detector-model", o.detector_model, "Model for stage-1 detection");
  run->add_option("--expander-model", o.expander_model, "Model for expansion");
  run->add_option("--label", o.label, "Model label used in reports");
  run->add_option("--runs-dir", o.runs_dir, "Directory holding run folders");
  run->add_option("--rule-min-len", o.rule_min_len, "Minimum uppercase run length")->check(CLI::Range(2, 64));

  auto* evaluate = app.add_subcommand("evaluate", "Score a run and write score.json next to its log");
  add_common(evaluate);
  evaluate->add_option("--run", o.runs, "Run id, run directory or log path (repeatable)")->required();
  evaluate->add_option("--runs-dir", o.runs_dir, "Directory holding run folders");
  evaluate->add_option("--corpus", o.corpus_path, "Corpus to score against (default: the run's corpus)");
  evaluate->add_option("--scores-csv", o.scores_csv, "Also write per-row scores as CSV");

  auto* rep = app.add_subcommand("report", "Results tables for one or more runs");
  add_common(rep);
  rep->add_option("--run", o.runs, "Run id, run directory or log path (repeatable)")->required();
  rep->add_option("--runs-dir", o.runs_dir, "Directory holding run folders");
  rep->add_option("--corpus", o.corpus_path, "Corpus to score against (default: the run's corpus)");
  rep->add_option("--format", o.format, "markdown or csv");
  rep->add_flag("--summary", o.summary, "One row per model (expansion comparison across models)");
  rep->add_flag("--calibration", o.calibration, "Append confidence calibration bins");

  auto* normalize = app.add_subcommand("normalize", "Normalize stdin lines with the raw or clean pipeline");
  add_common(normalize);
  normalize->add_option("--mode", o.norm_mode, "raw or clean");

  auto* probe = app.add_subcommand("probe", "Check that the inference endpoint and model are available");
  add_common(probe);
  add_backend(probe);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    if (*prepare) return cmd_prepare(o);
    if (*stats) return cmd_stats(o);
    if (*run) return cmd_run(o);
    if (*evaluate) return cmd_evaluate(o);
    if (*rep) return cmd_report(o);
    if (*normalize) return cmd_normalize(o);
    if (*probe) return cmd_probe(o);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kInternal;
  }
  return kInternal;
}

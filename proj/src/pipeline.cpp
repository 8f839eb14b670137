#include "acrodis/pipeline.h"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>
#include <thread>

#include "acrodis/error.h"

namespace acrodis::pipeline {
namespace {

using json = nlohmann::json;

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const auto t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%S") << '.' << std::setw(3) << std::setfill('0') << ms << 'Z';
  return out.str();
}

EntryStatus from_parse(prompting::ParseStatus s) {
  switch (s) {
    case prompting::ParseStatus::ok: return EntryStatus::ok;
    case prompting::ParseStatus::repaired: return EntryStatus::repaired;
    case prompting::ParseStatus::blocked: return EntryStatus::blocked;
    case prompting::ParseStatus::parse_failure: return EntryStatus::parse_failure;
  }
  return EntryStatus::parse_failure;
}

// One render -> complete -> parse round. Never throws for backend trouble.
LogEntry call(inference::Backend& backend, const corpus::Instance& inst, int iteration, Stage stage,
              const prompting::Prompt& prompt, prompting::Expected expected) {
  LogEntry e;
  e.instance_id = inst.id;
  e.iteration = iteration;
  e.stage = stage;
  if (stage == Stage::expansion) e.routed_acronym = prompt.acronym;
  const std::string wire = prompt.serialize();
  try {
    e.completion = backend.complete({wire, inst.id});
    e.parse = prompting::parse_output(e.completion->response, expected);
    e.status = from_parse(e.parse.status);
  } catch (const std::exception& ex) {
    e.status = EntryStatus::backend_error;
    e.error = ex.what();
    e.parse.status = prompting::ParseStatus::parse_failure;
    e.parse.notes.push_back("no response");
  }
  e.timestamp = utc_now();
  return e;
}

std::vector<LogEntry> cascade_one(inference::Backend& detector, inference::Backend& expander,
                                  const corpus::Instance& inst, int iteration, bool assume_perfect) {
  std::vector<LogEntry> out;
  if (assume_perfect) {
    out.push_back(call(expander, inst, iteration, Stage::expansion,
                       prompting::render_cascaded_expansion(inst.text, inst.acronym), prompting::Expected::expansion));
    return out;
  }
  LogEntry det = call(detector, inst, iteration, Stage::detection, prompting::render_cascaded_detection(inst.text),
                      prompting::Expected::detection);
  auto* found = std::get_if<prompting::DetectionResult>(&det.parse.payload);
  if (found == nullptr) {
    if (det.status != EntryStatus::backend_error) det.status = EntryStatus::detection_failure;
    out.push_back(std::move(det));
    return out;
  }
  // Acronyms the model invented (absent from the text) cannot be routed.
  std::vector<std::string> routable;
  for (const auto& a : found->acronyms) {
    if (corpus::contains_token(inst.text, a)) {
      routable.push_back(a);
    } else {
      det.parse.notes.push_back("not routed: '" + a + "' absent from text");
    }
  }
  out.push_back(std::move(det));
  for (const auto& a : routable)
    out.push_back(call(expander, inst, iteration, Stage::expansion, prompting::render_cascaded_expansion(inst.text, a),
                       prompting::Expected::expansion));
  return out;
}

// Runs `work(instance)` for every instance with at most `parallelism` in
// flight and appends the results to the log in corpus order.
template <typename Work>
void run_iteration(const corpus::Corpus& corpus, std::size_t parallelism, int iteration, RunLog& log,
                   const Progress& progress, Work&& work) {
  const auto& instances = corpus.instances();
  std::vector<std::vector<LogEntry>> results(instances.size());
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> done{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < instances.size(); i = next++) {
      results[i] = work(instances[i]);
      const std::size_t finished = ++done;
      if (progress) progress(iteration, finished, instances.size());
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(parallelism, instances.size()));
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
  }
  for (auto& r : results)
    for (auto& e : r) log.entries.push_back(std::move(e));
}

RunLog start_log(const RunConfig& config) {
  config.validate();
  RunLog log;
  log.run_id = new_run_id(config.mode);
  log.config = config;
  log.created = utc_now();
  return log;
}

json completion_to_json(const inference::CompletionRecord& c) {
  return json{{"prompt", c.prompt},
              {"response", c.response},
              {"latency_ms", c.latency_ms},
              {"attempt", c.attempt},
              {"backend_id", c.backend_id}};
}

}  // namespace

std::string_view to_string(RunMode m) { return m == RunMode::single_pass ? "single_pass" : "cascaded"; }

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::single_pass: return "single_pass";
    case Stage::detection: return "detection";
    case Stage::expansion: return "expansion";
  }
  return "single_pass";
}

std::string_view to_string(EntryStatus s) {
  switch (s) {
    case EntryStatus::ok: return "ok";
    case EntryStatus::repaired: return "repaired";
    case EntryStatus::blocked: return "blocked";
    case EntryStatus::parse_failure: return "parse_failure";
    case EntryStatus::backend_error: return "backend_error";
    case EntryStatus::detection_failure: return "detection_failure";
  }
  return "parse_failure";
}

RunMode run_mode_from_string(std::string_view s) {
  if (s == "single_pass" || s == "single-pass") return RunMode::single_pass;
  if (s == "cascaded") return RunMode::cascaded;
  throw ConfigError("unknown run mode '" + std::string(s) + "'");
}

Stage stage_from_string(std::string_view s) {
  if (s == "single_pass") return Stage::single_pass;
  if (s == "detection") return Stage::detection;
  if (s == "expansion") return Stage::expansion;
  throw DataError("unknown stage '" + std::string(s) + "'");
}

EntryStatus entry_status_from_string(std::string_view s) {
  for (auto st : {EntryStatus::ok, EntryStatus::repaired, EntryStatus::blocked, EntryStatus::parse_failure,
                  EntryStatus::backend_error, EntryStatus::detection_failure})
    if (to_string(st) == s) return st;
  throw DataError("unknown entry status '" + std::string(s) + "'");
}

void RunConfig::validate() const {
  if (iterations < 1) throw ConfigError("iterations must be >= 1");
}

json RunConfig::to_json() const {
  return json{{"mode", to_string(mode)},
              {"iterations", iterations},
              {"detector_backend", detector_backend},
              {"expander_backend", expander_backend},
              {"assume_perfect_detection", assume_perfect_detection},
              {"model_label", model_label},
              {"corpus_path", corpus_path},
              {"normalization", {"raw", "clean"}},
              {"backends", backend_snapshot}};
}

RunConfig RunConfig::from_json(const json& j) {
  try {
    RunConfig c;
    c.mode = run_mode_from_string(j.at("mode").get<std::string>());
    c.iterations = j.at("iterations").get<int>();
    c.detector_backend = j.at("detector_backend").get<std::string>();
    c.expander_backend = j.at("expander_backend").get<std::string>();
    c.assume_perfect_detection = j.at("assume_perfect_detection").get<bool>();
    c.model_label = j.at("model_label").get<std::string>();
    c.corpus_path = j.at("corpus_path").get<std::string>();
    c.backend_snapshot = j.value("backends", json());
    return c;
  } catch (const json::exception& e) {
    throw DataError(std::string("bad run config: ") + e.what());
  }
}

RunLog run_single_pass(const corpus::Corpus& corpus, inference::Backend& backend, const RunConfig& config,
                       const Progress& progress) {
  if (config.mode != RunMode::single_pass) throw ConfigError("run_single_pass needs mode single_pass");
  if (corpus.mode_label() != corpus::ModeLabel::single_pass)
    throw DataError("single-pass runs need a single-acronym corpus (run prepare, or filter first)");
  RunLog log = start_log(config);
  if (log.config.detector_backend.empty()) log.config.detector_backend = backend.id();
  if (log.config.model_label.empty()) log.config.model_label = backend.id();
  for (int it = 1; it <= config.iterations; ++it) {
    run_iteration(corpus, backend.parallelism(), it, log, progress, [&](const corpus::Instance& inst) {
      return std::vector<LogEntry>{call(backend, inst, it, Stage::single_pass, prompting::render_single_pass(inst.text),
                                        prompting::Expected::expansion)};
    });
  }
  return log;
}

RunLog run_cascaded(const corpus::Corpus& corpus, inference::Backend& detector, inference::Backend& expander,
                    const RunConfig& config, const Progress& progress) {
  if (config.mode != RunMode::cascaded) throw ConfigError("run_cascaded needs mode cascaded");
  RunLog log = start_log(config);
  if (log.config.detector_backend.empty() && !config.assume_perfect_detection)
    log.config.detector_backend = detector.id();
  if (log.config.expander_backend.empty()) log.config.expander_backend = expander.id();
  if (log.config.model_label.empty()) log.config.model_label = expander.id();
  const std::size_t parallelism = std::min(detector.parallelism(), expander.parallelism());
  for (int it = 1; it <= config.iterations; ++it) {
    run_iteration(corpus, parallelism, it, log, progress, [&](const corpus::Instance& inst) {
      return cascade_one(detector, expander, inst, it, config.assume_perfect_detection);
    });
  }
  return log;
}

std::string new_run_id(RunMode mode) {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::random_device rd;
  std::ostringstream out;
  out << std::put_time(&tm, "%Y%m%dT%H%M%SZ") << '-' << (mode == RunMode::single_pass ? "sp" : "cas") << '-'
      << std::hex << std::setw(6) << std::setfill('0') << (rd() & 0xFFFFFF);
  return out.str();
}

json entry_to_json(const LogEntry& e) {
  json j;
  j["instance_id"] = e.instance_id;
  j["iteration"] = e.iteration;
  j["stage"] = to_string(e.stage);
  j["routed_acronym"] = e.routed_acronym ? json(*e.routed_acronym) : json(nullptr);
  j["status"] = to_string(e.status);
  j["completion"] = e.completion ? completion_to_json(*e.completion) : json(nullptr);
  j["parse"] = {{"status", prompting::to_string(e.parse.status)},
                {"payload", prompting::payload_to_json(e.parse.payload)},
                {"notes", e.parse.notes}};
  j["error"] = e.error;
  j["timestamp"] = e.timestamp;
  return j;
}

LogEntry entry_from_json(const json& j) {
  LogEntry e;
  e.instance_id = j.at("instance_id").get<std::string>();
  e.iteration = j.at("iteration").get<int>();
  e.stage = stage_from_string(j.at("stage").get<std::string>());
  if (!j.at("routed_acronym").is_null()) e.routed_acronym = j["routed_acronym"].get<std::string>();
  e.status = entry_status_from_string(j.at("status").get<std::string>());
  if (const auto& c = j.at("completion"); !c.is_null()) {
    inference::CompletionRecord rec;
    rec.prompt = c.at("prompt").get<std::string>();
    rec.response = c.at("response").get<std::string>();
    rec.latency_ms = c.at("latency_ms").get<double>();
    rec.attempt = c.at("attempt").get<int>();
    rec.backend_id = c.at("backend_id").get<std::string>();
    e.parse.raw = rec.response;
    e.completion = std::move(rec);
  }
  const auto& p = j.at("parse");
  e.parse.status = prompting::parse_status_from_string(p.at("status").get<std::string>());
  e.parse.payload = prompting::payload_from_json(p.at("payload"));
  e.parse.notes = p.at("notes").get<std::vector<std::string>>();
  e.error = j.at("error").get<std::string>();
  e.timestamp = j.at("timestamp").get<std::string>();
  return e;
}

void persist_log(const RunLog& log, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write run log '" + path.string() + "'");
  json header{{"schema", kRunLogSchema},
              {"version", kRunLogVersion},
              {"run_id", log.run_id},
              {"created", log.created},
              {"config", log.config.to_json()}};
  out << header.dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
  for (const auto& e : log.entries) out << entry_to_json(e).dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
  if (!out) throw DataError("failed writing run log '" + path.string() + "'");
}

RunLog load_log(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open run log '" + path.string() + "'");
  RunLog log;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": truncated or malformed JSON line");
    try {
      if (!have_header) {
        if (j.value("schema", "") != kRunLogSchema)
          throw DataError(path.string() + ":1: not a run log (schema '" + j.value("schema", "") + "')");
        if (j.value("version", -1) != kRunLogVersion)
          throw DataError(path.string() + ":1: run log schema version " + std::to_string(j.value("version", -1)) +
                          " is not supported (expected " + std::to_string(kRunLogVersion) + ")");
        log.run_id = j.at("run_id").get<std::string>();
        log.created = j.at("created").get<std::string>();
        log.config = RunConfig::from_json(j.at("config"));
        have_header = true;
      } else {
        log.entries.push_back(entry_from_json(j));
      }
    } catch (const json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const DataError& e) {
      if (!have_header) throw;
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!have_header) throw DataError("run log '" + path.string() + "' is empty");
  return log;
}

std::filesystem::path write_run_dir(RunLog& log, const std::filesystem::path& runs_root) {
  std::filesystem::create_directories(runs_root);
  std::filesystem::path dir = runs_root / log.run_id;
  // create_directory returns false when the directory already exists.
  while (!std::filesystem::create_directory(dir)) {
    log.run_id = new_run_id(log.config.mode);
    dir = runs_root / log.run_id;
  }
  json cfg = log.config.to_json();
  cfg["run_id"] = log.run_id;
  std::ofstream(dir / "config.json") << cfg.dump(2) << '\n';
  persist_log(log, dir / "log.jsonl");
  return dir;
}

std::filesystem::path resolve_run(const std::string& run, const std::filesystem::path& runs_root) {
  std::filesystem::path p(run);
  if (std::filesystem::is_regular_file(p)) return p;
  if (std::filesystem::is_directory(p) && std::filesystem::exists(p / "log.jsonl")) return p / "log.jsonl";
  if (std::filesystem::exists(runs_root / run / "log.jsonl")) return runs_root / run / "log.jsonl";
  throw DataError("no run '" + run + "' (looked for a log file, a run directory, and " +
                  (runs_root / run / "log.jsonl").string() + ")");
}

std::string canonical_payload(const RunLog& log) {
  std::string out = log.config.to_json().dump() + '\n';
  for (const auto& e : log.entries) {
    json j = entry_to_json(e);
    j.erase("timestamp");
    if (j["completion"].is_object()) j["completion"].erase("latency_ms");
    out += j.dump() + '\n';
  }
  return out;
}

}  // namespace acrodis::pipeline

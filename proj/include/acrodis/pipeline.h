#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "acrodis/corpus.h"
#include "acrodis/inference.h"
#include "acrodis/prompting.h"

namespace acrodis::pipeline {

enum class RunMode { single_pass, cascaded };
enum class Stage { single_pass, detection, expansion };

/// Log-level outcome of one inference call. Mirrors the parse status and adds
/// the two failure kinds that happen outside parsing.
enum class EntryStatus { ok, repaired, blocked, parse_failure, backend_error, detection_failure };

std::string_view to_string(RunMode m);
std::string_view to_string(Stage s);
std::string_view to_string(EntryStatus s);
RunMode run_mode_from_string(std::string_view s);
Stage stage_from_string(std::string_view s);
EntryStatus entry_status_from_string(std::string_view s);

struct RunConfig {
  RunMode mode = RunMode::single_pass;
  int iterations = 5;
  std::string detector_backend;
  std::string expander_backend;  // cascaded only
  bool assume_perfect_detection = false;
  std::string model_label;  // row label in reports; defaults to the expander (or only) backend id
  std::string corpus_path;
  nlohmann::json backend_snapshot;  // backend settings at run time, for the record

  void validate() const;
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  bool operator==(const RunConfig&) const = default;
};

struct LogEntry {
  std::string instance_id;
  int iteration = 0;
  Stage stage = Stage::single_pass;
  std::optional<std::string> routed_acronym;  // expansion stage only
  EntryStatus status = EntryStatus::ok;
  std::optional<inference::CompletionRecord> completion;  // absent on backend_error
  prompting::ParseOutcome parse;
  std::string error;
  std::string timestamp;  // UTC, ISO 8601
};

inline constexpr std::string_view kRunLogSchema = "acrodis.runlog";
inline constexpr int kRunLogVersion = 1;

struct RunLog {
  std::string run_id;
  RunConfig config;
  std::string created;
  std::vector<LogEntry> entries;
};

/// Optional progress callback: (iteration, finished instances, total instances).
using Progress = std::function<void(int, std::size_t, std::size_t)>;

/// One render/complete/parse round per instance per iteration. Backend
/// failures become backend_error entries; only corpus or config problems
/// throw.
RunLog run_single_pass(const corpus::Corpus& corpus, inference::Backend& backend, const RunConfig& config,
                       const Progress& progress = {});

/// Detection then per-acronym expansion, or expansion of the gold acronym when
/// assume_perfect_detection is set.
RunLog run_cascaded(const corpus::Corpus& corpus, inference::Backend& detector, inference::Backend& expander,
                    const RunConfig& config, const Progress& progress = {});

std::string new_run_id(RunMode mode);

nlohmann::json entry_to_json(const LogEntry& e);
LogEntry entry_from_json(const nlohmann::json& j);

/// JSONL: a header line {schema, version, run_id, created, config}, then one
/// entry per line.
void persist_log(const RunLog& log, const std::filesystem::path& path);
/// Throws DataError naming the offending line on truncation, bad JSON or a
/// schema/version mismatch.
RunLog load_log(const std::filesystem::path& path);

/// Creates runs/<run-id>/ (picking a fresh id on collision) and writes
/// config.json and log.jsonl. Updates log.run_id and returns the directory.
std::filesystem::path write_run_dir(RunLog& log, const std::filesystem::path& runs_root);
/// Accepts a run directory, a log.jsonl path, or a run id under `runs_root`.
std::filesystem::path resolve_run(const std::string& run, const std::filesystem::path& runs_root);

/// The log serialized without run id, timestamps or latencies. Two runs over
/// a deterministic backend produce identical strings.
std::string canonical_payload(const RunLog& log);

}  // namespace acrodis::pipeline

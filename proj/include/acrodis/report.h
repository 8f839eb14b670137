#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "acrodis/corpus.h"
#include "acrodis/metrics.h"
#include "acrodis/pipeline.h"

namespace acrodis::report {

/// One scored (instance, iteration) pair.
struct ScoredRow {
  std::string instance_id;
  int iteration = 0;
  std::optional<int> detection;  // absent when detection was not evaluated
  metrics::MetricScore raw{0, 0, 0, textnorm::Mode::raw};
  metrics::MetricScore clean{0, 0, 0, textnorm::Mode::clean};
  std::optional<double> confidence;
  pipeline::EntryStatus status = pipeline::EntryStatus::ok;
  std::string candidate;  // scored expansion text, empty when none
};

struct ModeAggregates {
  metrics::AggregateReport bleu;
  metrics::AggregateReport meteor;
  metrics::AggregateReport rouge_l;
};

inline constexpr std::string_view kScoreReportSchema = "acrodis.score";
inline constexpr int kScoreReportVersion = 1;

struct ScoreReport {
  std::string run_id;
  std::string model;
  pipeline::RunMode mode = pipeline::RunMode::single_pass;
  bool assume_perfect_detection = false;
  int iterations = 0;
  std::vector<std::string> instance_ids;  // row order of the aggregates
  std::vector<ScoredRow> rows;            // instance-major, then iteration
  std::optional<metrics::AggregateReport> detection;
  ModeAggregates raw;
  ModeAggregates clean;
  metrics::BandConfig bands;

  const ModeAggregates& for_mode(textnorm::Mode m) const { return m == textnorm::Mode::raw ? raw : clean; }
  nlohmann::json to_json() const;
};

/// Scores every (instance, iteration) of the log against the corpus gold.
/// Blocked, failed or missing outputs score 0 on every metric. Throws
/// DataError when the log names an id outside the corpus or lacks entries for
/// some (instance, iteration).
ScoreReport score_run(const pipeline::RunLog& log, const corpus::Corpus& corpus, const metrics::BandConfig& bands = {},
                      const metrics::MeteorParams& meteor = {});

struct CalibrationBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
  double empirical_accuracy = 0.0;  // share of rows whose clean ROUGE-L band is high
};

struct CalibrationReport {
  std::vector<CalibrationBin> bins;  // empty when no row carries a confidence
  bool overconfident = false;

  nlohmann::json to_json() const;
};

/// Ten equal-width bins over [0,1] (last bin closed). The overconfidence flag
/// is set when a populated bin with lo >= 0.9 has empirical accuracy < 0.5.
CalibrationReport calibration_report(const ScoreReport& report);

enum class Format { markdown, csv };
Format format_from_string(std::string_view s);

/// Results table: a raw and a clean row per report with Det. Acc. +/- std,
/// BLEU, METEOR, ROUGE-L and H/M/L band counts per metric.
std::string emit_tables(const std::vector<ScoreReport>& reports, Format format);

/// One row per model with mean expansion scores under each mode, ready for a
/// bar chart comparing models.
std::string emit_summary(const std::vector<ScoreReport>& reports, Format format);

/// One line per instance, iteration and normalization mode.
std::string emit_scores_csv(const ScoreReport& report);

}  // namespace acrodis::report

#include "acrodis/report.h"

#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "acrodis/error.h"

namespace acrodis::report {
namespace {

using json = nlohmann::json;
using metrics::AggregateReport;
using pipeline::EntryStatus;
using pipeline::LogEntry;
using pipeline::Stage;

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  return out + "\"";
}

std::string md_cell(std::string s) {
  std::string out;
  for (char c : s) {
    if (c == '|') out += "\\|";
    else if (c == '\n' || c == '\r') out += ' ';
    else out.push_back(c);
  }
  return out;
}

std::string trim(std::string_view s) {
  const char* ws = " \t\r\n\f\v";
  auto first = s.find_first_not_of(ws);
  if (first == std::string_view::npos) return {};
  auto last = s.find_last_not_of(ws);
  return std::string(s.substr(first, last - first + 1));
}

json aggregate_json(const AggregateReport& a) {
  return json{{"mean", a.overall_mean},
              {"std", a.overall_std},
              {"iterations", a.iterations},
              {"bands", {{"high", a.band_counts.high}, {"medium", a.band_counts.medium}, {"low", a.band_counts.low}}},
              {"per_row_means", a.per_row_means}};
}

std::string bands_cell(const AggregateReport& a, char sep) {
  std::string s;
  s += std::to_string(a.band_counts.high);
  s += sep;
  s += std::to_string(a.band_counts.medium);
  s += sep;
  s += std::to_string(a.band_counts.low);
  return s;
}

std::string mode_label(const ScoreReport& r) {
  if (r.mode == pipeline::RunMode::single_pass) return "single-pass";
  return r.assume_perfect_detection ? "cascaded (expansion only)" : "cascaded";
}

struct Scored {
  metrics::MetricScore raw;
  metrics::MetricScore clean;
  std::optional<double> confidence;
  std::string candidate;
};

Scored score_expansion_entry(const LogEntry* e, const std::string& gold, const metrics::MeteorParams& meteor) {
  Scored s{metrics::zero_score(textnorm::Mode::raw), metrics::zero_score(textnorm::Mode::clean), std::nullopt, {}};
  if (e == nullptr) return s;
  const auto* exp = e->parse.expansion();
  if (exp == nullptr) return s;
  s.raw = metrics::score_expansion(exp->expansion, gold, textnorm::Mode::raw, meteor);
  s.clean = metrics::score_expansion(exp->expansion, gold, textnorm::Mode::clean, meteor);
  s.confidence = exp->confidence;
  s.candidate = exp->expansion;
  return s;
}

}  // namespace

ScoreReport score_run(const pipeline::RunLog& log, const corpus::Corpus& corpus, const metrics::BandConfig& bands,
                      const metrics::MeteorParams& meteor) {
  bands.validate();
  if (corpus.empty()) throw DataError("cannot score against an empty corpus");
  const int iterations = log.config.iterations;
  if (iterations < 1) throw DataError("run log declares no iterations");

  std::map<std::pair<std::string, int>, std::vector<const LogEntry*>> by_key;
  for (const auto& e : log.entries) {
    if (corpus.find(e.instance_id) == nullptr)
      throw DataError("run log references unknown instance id '" + e.instance_id + "'");
    if (e.iteration < 1 || e.iteration > iterations)
      throw DataError("run log entry for '" + e.instance_id + "' has iteration " + std::to_string(e.iteration) +
                      " outside 1.." + std::to_string(iterations));
    by_key[{e.instance_id, e.iteration}].push_back(&e);
  }

  ScoreReport report;
  report.run_id = log.run_id;
  report.model = log.config.model_label;
  report.mode = log.config.mode;
  report.assume_perfect_detection = log.config.assume_perfect_detection;
  report.iterations = iterations;
  report.bands = bands;
  const bool detection_evaluated = !(report.mode == pipeline::RunMode::cascaded && report.assume_perfect_detection);

  std::vector<std::vector<double>> det, bleu[2], meteor_m[2], rouge[2];
  for (const auto& inst : corpus.instances()) {
    report.instance_ids.push_back(inst.id);
    std::vector<double> det_row, b[2], m[2], r[2];
    for (int it = 1; it <= iterations; ++it) {
      auto found = by_key.find({inst.id, it});
      if (found == by_key.end())
        throw DataError("run log has no entry for instance '" + inst.id + "' iteration " + std::to_string(it));
      const auto& entries = found->second;

      ScoredRow row;
      row.instance_id = inst.id;
      row.iteration = it;
      const LogEntry* scored = nullptr;
      if (report.mode == pipeline::RunMode::single_pass) {
        scored = entries.front();
        row.status = scored->status;
        const auto* exp = scored->parse.expansion();
        row.detection = metrics::detection_match(
            exp ? std::optional<std::string_view>(exp->acronym) : std::nullopt, inst.acronym);
      } else {
        const LogEntry* detection_entry = nullptr;
        for (const auto* e : entries) {
          if (e->stage == Stage::detection) detection_entry = e;
          if (e->stage == Stage::expansion && e->routed_acronym && *e->routed_acronym == inst.acronym && !scored)
            scored = e;
        }
        row.status = scored ? scored->status : (detection_entry ? detection_entry->status : entries.front()->status);
        if (detection_evaluated) {
          int hit = 0;
          if (detection_entry != nullptr)
            if (const auto* d = detection_entry->parse.detection())
              for (const auto& a : d->acronyms)
                if (metrics::detection_match(a, inst.acronym) == 1) hit = 1;
          row.detection = hit;
        }
      }
      Scored s = score_expansion_entry(scored, inst.expansion, meteor);
      row.raw = s.raw;
      row.clean = s.clean;
      row.confidence = s.confidence;
      row.candidate = s.candidate;

      if (row.detection) det_row.push_back(*row.detection);
      for (int mode = 0; mode < 2; ++mode) {
        const auto& sc = mode == 0 ? row.raw : row.clean;
        b[mode].push_back(sc.bleu);
        m[mode].push_back(sc.meteor);
        r[mode].push_back(sc.rouge_l);
      }
      report.rows.push_back(std::move(row));
    }
    if (detection_evaluated) det.push_back(std::move(det_row));
    for (int mode = 0; mode < 2; ++mode) {
      bleu[mode].push_back(std::move(b[mode]));
      meteor_m[mode].push_back(std::move(m[mode]));
      rouge[mode].push_back(std::move(r[mode]));
    }
  }
  if (detection_evaluated) report.detection = metrics::aggregate(det, bands);
  for (int mode = 0; mode < 2; ++mode) {
    ModeAggregates& agg = mode == 0 ? report.raw : report.clean;
    agg.bleu = metrics::aggregate(bleu[mode], bands);
    agg.meteor = metrics::aggregate(meteor_m[mode], bands);
    agg.rouge_l = metrics::aggregate(rouge[mode], bands);
  }
  return report;
}

json ScoreReport::to_json() const {
  json j;
  j["schema"] = kScoreReportSchema;
  j["version"] = kScoreReportVersion;
  j["run_id"] = run_id;
  j["model"] = model;
  j["mode"] = pipeline::to_string(mode);
  j["assume_perfect_detection"] = assume_perfect_detection;
  j["iterations"] = iterations;
  j["band_thresholds"] = {{"high", bands.high_threshold}, {"low", bands.low_threshold}};
  j["instance_ids"] = instance_ids;
  j["detection"] = detection ? aggregate_json(*detection) : json(nullptr);
  for (auto m : {textnorm::Mode::raw, textnorm::Mode::clean}) {
    const auto& a = for_mode(m);
    j["expansion"][std::string(textnorm::to_string(m))] = {
        {"bleu", aggregate_json(a.bleu)}, {"meteor", aggregate_json(a.meteor)}, {"rouge_l", aggregate_json(a.rouge_l)}};
  }
  json rows_json = json::array();
  for (const auto& r : rows) {
    rows_json.push_back({{"instance_id", r.instance_id},
                         {"iteration", r.iteration},
                         {"status", pipeline::to_string(r.status)},
                         {"detection", r.detection ? json(*r.detection) : json(nullptr)},
                         {"confidence", r.confidence ? json(*r.confidence) : json(nullptr)},
                         {"candidate", r.candidate},
                         {"raw", {{"bleu", r.raw.bleu}, {"meteor", r.raw.meteor}, {"rouge_l", r.raw.rouge_l}}},
                         {"clean", {{"bleu", r.clean.bleu}, {"meteor", r.clean.meteor}, {"rouge_l", r.clean.rouge_l}}}});
  }
  j["rows"] = std::move(rows_json);
  return j;
}

json CalibrationReport::to_json() const {
  json bins_json = json::array();
  for (const auto& b : bins)
    bins_json.push_back({{"lo", b.lo}, {"hi", b.hi}, {"count", b.count}, {"empirical_accuracy", b.empirical_accuracy}});
  return json{{"bins", bins_json}, {"overconfident", overconfident}};
}

CalibrationReport calibration_report(const ScoreReport& report) {
  constexpr int kBins = 10;
  CalibrationReport out;
  std::vector<std::size_t> count(kBins, 0), high(kBins, 0);
  bool any = false;
  for (const auto& row : report.rows) {
    if (!row.confidence) continue;
    any = true;
    const double c = std::clamp(*row.confidence, 0.0, 1.0);
    const int bin = std::min(kBins - 1, static_cast<int>(std::floor(c * kBins)));
    ++count[static_cast<std::size_t>(bin)];
    if (metrics::stratify_band(row.clean.rouge_l, report.bands) == metrics::Band::high)
      ++high[static_cast<std::size_t>(bin)];
  }
  if (!any) return out;
  for (int i = 0; i < kBins; ++i) {
    CalibrationBin b;
    b.lo = i / static_cast<double>(kBins);
    b.hi = (i + 1) / static_cast<double>(kBins);
    b.count = count[static_cast<std::size_t>(i)];
    b.empirical_accuracy = b.count ? static_cast<double>(high[static_cast<std::size_t>(i)]) / static_cast<double>(b.count) : 0.0;
    if (b.count > 0 && b.lo >= 0.9 && b.empirical_accuracy < 0.5) out.overconfident = true;
    out.bins.push_back(b);
  }
  return out;
}

Format format_from_string(std::string_view s) {
  if (s == "markdown" || s == "md") return Format::markdown;
  if (s == "csv") return Format::csv;
  throw ConfigError("unknown report format '" + std::string(s) + "'");
}

std::string emit_tables(const std::vector<ScoreReport>& reports, Format format) {
  std::ostringstream out;
  if (format == Format::markdown) {
    out << "| Model | Text | Det. Acc. | BLEU | METEOR | ROUGE-L | BLEU H/M/L | METEOR H/M/L | ROUGE-L H/M/L |\n";
    out << "|---|---|---|---|---|---|---|---|---|\n";
  } else {
    out << "model,text,det_acc_mean,det_acc_std,bleu,meteor,rouge_l,bleu_high,bleu_medium,bleu_low,meteor_high,"
           "meteor_medium,meteor_low,rouge_l_high,rouge_l_medium,rouge_l_low\r\n";
  }
  for (const auto& r : reports) {
    for (auto m : {textnorm::Mode::raw, textnorm::Mode::clean}) {
      const auto& a = r.for_mode(m);
      const std::string text = m == textnorm::Mode::raw ? "Raw" : "Clean";
      if (format == Format::markdown) {
        std::string det = r.detection ? fixed(r.detection->overall_mean, 3) + " ± " + fixed(r.detection->overall_std, 3)
                                      : "n/a";
        out << "| " << md_cell(r.model) << " | " << text << " | " << det << " | " << fixed(a.bleu.overall_mean, 3)
            << " | " << fixed(a.meteor.overall_mean, 3) << " | " << fixed(a.rouge_l.overall_mean, 3) << " | "
            << bands_cell(a.bleu, '/') << " | " << bands_cell(a.meteor, '/') << " | " << bands_cell(a.rouge_l, '/')
            << " |\n";
      } else {
        out << csv_field(r.model) << ',' << text << ',' << (r.detection ? fixed(r.detection->overall_mean, 6) : "")
            << ',' << (r.detection ? fixed(r.detection->overall_std, 6) : "") << ',' << fixed(a.bleu.overall_mean, 6)
            << ',' << fixed(a.meteor.overall_mean, 6) << ',' << fixed(a.rouge_l.overall_mean, 6) << ','
            << bands_cell(a.bleu, ',') << ',' << bands_cell(a.meteor, ',') << ',' << bands_cell(a.rouge_l, ',')
            << "\r\n";
      }
    }
  }
  return out.str();
}

std::string emit_summary(const std::vector<ScoreReport>& reports, Format format) {
  std::ostringstream out;
  if (format == Format::markdown) {
    out << "| Model | Mode | Det. Acc. | BLEU (raw) | METEOR (raw) | ROUGE-L (raw) | BLEU (clean) | METEOR (clean) | "
           "ROUGE-L (clean) |\n";
    out << "|---|---|---|---|---|---|---|---|---|\n";
  } else {
    out << "model,mode,det_acc,bleu_raw,meteor_raw,rouge_l_raw,bleu_clean,meteor_clean,rouge_l_clean\r\n";
  }
  for (const auto& r : reports) {
    const int digits = format == Format::markdown ? 3 : 6;
    std::string det = r.detection ? fixed(r.detection->overall_mean, digits) : (format == Format::markdown ? "n/a" : "");
    std::vector<std::string> cells = {fixed(r.raw.bleu.overall_mean, digits),   fixed(r.raw.meteor.overall_mean, digits),
                                      fixed(r.raw.rouge_l.overall_mean, digits), fixed(r.clean.bleu.overall_mean, digits),
                                      fixed(r.clean.meteor.overall_mean, digits), fixed(r.clean.rouge_l.overall_mean, digits)};
    if (format == Format::markdown) {
      out << "| " << md_cell(r.model) << " | " << mode_label(r) << " | " << det;
      for (const auto& c : cells) out << " | " << c;
      out << " |\n";
    } else {
      out << csv_field(r.model) << ',' << csv_field(mode_label(r)) << ',' << det;
      for (const auto& c : cells) out << ',' << c;
      out << "\r\n";
    }
  }
  return out.str();
}

std::string emit_scores_csv(const ScoreReport& report) {
  std::ostringstream out;
  out << "instance_id,iteration,mode,status,detection,bleu,meteor,rouge_l,confidence,candidate\r\n";
  for (const auto& row : report.rows) {
    for (auto m : {textnorm::Mode::raw, textnorm::Mode::clean}) {
      const auto& s = m == textnorm::Mode::raw ? row.raw : row.clean;
      out << csv_field(row.instance_id) << ',' << row.iteration << ',' << textnorm::to_string(m) << ','
          << pipeline::to_string(row.status) << ',' << (row.detection ? std::to_string(*row.detection) : "") << ','
          << fixed(s.bleu, 6) << ',' << fixed(s.meteor, 6) << ',' << fixed(s.rouge_l, 6) << ','
          << (row.confidence ? fixed(*row.confidence, 6) : "") << ',' << csv_field(trim(row.candidate)) << "\r\n";
    }
  }
  return out.str();
}

}  // namespace acrodis::report

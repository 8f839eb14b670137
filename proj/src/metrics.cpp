#include "acrodis/metrics.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "acrodis/error.h"
#include "acrodis/stemmer.h"

namespace acrodis::metrics {
namespace {

std::string_view trim(std::string_view s) {
  const char* ws = " \t\r\n\f\v";
  auto first = s.find_first_not_of(ws);
  if (first == std::string_view::npos) return {};
  auto last = s.find_last_not_of(ws);
  return s.substr(first, last - first + 1);
}

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts count_ngrams(TokenSpan tokens, std::size_t n) {
  NgramCounts counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i)
    ++counts[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                      tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return counts;
}

}  // namespace

int detection_match(std::optional<std::string_view> detected, std::string_view gold) {
  if (!detected) return 0;
  auto d = trim(*detected);
  auto g = trim(gold);
  return (!d.empty() && d == g) ? 1 : 0;
}

double bleu(TokenSpan candidate, TokenSpan reference) {
  if (candidate.empty() || reference.empty()) return 0.0;
  const std::size_t order = std::min<std::size_t>({4, candidate.size(), reference.size()});
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= order; ++n) {
    auto cand = count_ngrams(candidate, n);
    auto ref = count_ngrams(reference, n);
    std::size_t matched = 0;
    for (const auto& [gram, count] : cand) {
      auto it = ref.find(gram);
      if (it != ref.end()) matched += std::min(count, it->second);
    }
    const std::size_t total = candidate.size() - n + 1;
    double precision;
    if (n == 1) {
      if (matched == 0) return 0.0;
      precision = static_cast<double>(matched) / static_cast<double>(total);
    } else {
      precision = static_cast<double>(matched + 1) / static_cast<double>(total + 1);
    }
    log_sum += std::log(precision) / static_cast<double>(order);
  }
  double bp = 1.0;
  if (candidate.size() < reference.size())
    bp = std::exp(1.0 - static_cast<double>(reference.size()) / static_cast<double>(candidate.size()));
  return std::clamp(bp * std::exp(log_sum), 0.0, 1.0);
}

std::size_t lcs_length(TokenSpan a, TokenSpan b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(TokenSpan candidate, TokenSpan reference) {
  if (candidate.empty() || reference.empty()) return 0.0;
  const std::size_t lcs = lcs_length(candidate, reference);
  if (lcs == 0) return 0.0;
  const double p = static_cast<double>(lcs) / static_cast<double>(candidate.size());
  const double r = static_cast<double>(lcs) / static_cast<double>(reference.size());
  return 2.0 * p * r / (p + r);
}

void SynonymTable::add(const std::string& a, const std::string& b) {
  table_[a].insert(b);
  table_[b].insert(a);
}

bool SynonymTable::related(const std::string& a, const std::string& b) const {
  auto it = table_.find(a);
  return it != table_.end() && it->second.count(b) > 0;
}

double meteor(TokenSpan candidate, TokenSpan reference, const MeteorParams& params) {
  if (candidate.empty() || reference.empty()) return 0.0;
  constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  std::vector<std::size_t> cand_to_ref(candidate.size(), kNone);
  std::vector<bool> ref_used(reference.size(), false);

  std::vector<std::string> cand_stems, ref_stems;
  for (const auto& t : candidate) cand_stems.push_back(porter_stem(t));
  for (const auto& t : reference) ref_stems.push_back(porter_stem(t));

  // Each stage aligns still-unmatched tokens left to right. Among eligible
  // reference positions, the one continuing the previous alignment is
  // preferred so contiguous spans stay in one chunk.
  auto run_stage = [&](auto&& matches) {
    for (std::size_t i = 0; i < candidate.size(); ++i) {
      if (cand_to_ref[i] != kNone) continue;
      std::size_t preferred = kNone;
      if (i > 0 && cand_to_ref[i - 1] != kNone) preferred = cand_to_ref[i - 1] + 1;
      std::size_t chosen = kNone;
      if (preferred < reference.size() && !ref_used[preferred] && matches(i, preferred)) {
        chosen = preferred;
      } else {
        for (std::size_t j = 0; j < reference.size(); ++j) {
          if (!ref_used[j] && matches(i, j)) {
            chosen = j;
            break;
          }
        }
      }
      if (chosen != kNone) {
        cand_to_ref[i] = chosen;
        ref_used[chosen] = true;
      }
    }
  };

  run_stage([&](std::size_t i, std::size_t j) { return candidate[i] == reference[j]; });
  run_stage([&](std::size_t i, std::size_t j) { return cand_stems[i] == ref_stems[j]; });
  if (params.synonyms != nullptr && !params.synonyms->empty())
    run_stage([&](std::size_t i, std::size_t j) { return params.synonyms->related(candidate[i], reference[j]); });

  std::size_t matches = 0;
  std::size_t chunks = 0;
  std::size_t last_ref = kNone;
  bool in_chunk = false;
  for (std::size_t i = 0; i < candidate.size(); ++i) {
    if (cand_to_ref[i] == kNone) {
      in_chunk = false;
      continue;
    }
    ++matches;
    if (!in_chunk || cand_to_ref[i] != last_ref + 1) ++chunks;
    in_chunk = true;
    last_ref = cand_to_ref[i];
  }
  if (matches == 0) return 0.0;

  const double m = static_cast<double>(matches);
  const double p = m / static_cast<double>(candidate.size());
  const double r = m / static_cast<double>(reference.size());
  const double fmean = p * r / (params.alpha * p + (1.0 - params.alpha) * r);
  const double penalty = params.gamma * std::pow(static_cast<double>(chunks) / m, params.beta);
  return std::clamp(fmean * (1.0 - penalty), 0.0, 1.0);
}

MetricScore score_expansion(std::string_view candidate, std::string_view gold, textnorm::Mode mode,
                            const MeteorParams& params) {
  auto cand = textnorm::tokenize(textnorm::normalize(candidate, mode));
  auto ref = textnorm::tokenize(textnorm::normalize(gold, mode));
  return MetricScore{bleu(cand, ref), meteor(cand, ref, params), rouge_l(cand, ref), mode};
}

MetricScore zero_score(textnorm::Mode mode) { return MetricScore{0.0, 0.0, 0.0, mode}; }

std::string_view to_string(Band band) {
  switch (band) {
    case Band::high: return "high";
    case Band::medium: return "medium";
    case Band::low: return "low";
  }
  return "unknown";
}

void BandConfig::validate() const {
  if (!(low_threshold >= 0.0 && low_threshold < high_threshold && high_threshold <= 1.0))
    throw ConfigError("band thresholds must satisfy 0 <= low < high <= 1");
}

Band stratify_band(double score, const BandConfig& config) {
  if (score >= config.high_threshold) return Band::high;
  if (score <= config.low_threshold) return Band::low;
  return Band::medium;
}

void BandCounts::add(Band band) {
  switch (band) {
    case Band::high: ++high; break;
    case Band::medium: ++medium; break;
    case Band::low: ++low; break;
  }
}

AggregateReport aggregate(const std::vector<std::vector<double>>& run_scores, const BandConfig& config) {
  if (run_scores.empty()) throw DataError("aggregate: no rows to aggregate");
  const std::size_t iterations = run_scores.front().size();
  if (iterations == 0) throw DataError("aggregate: rows need at least one iteration");

  AggregateReport report;
  report.iterations = iterations;
  double sum = 0.0;
  for (std::size_t row = 0; row < run_scores.size(); ++row) {
    const auto& values = run_scores[row];
    if (values.size() != iterations)
      throw DataError("aggregate: row " + std::to_string(row) + " has " + std::to_string(values.size()) +
                      " iterations, expected " + std::to_string(iterations));
    const double row_sum = std::accumulate(values.begin(), values.end(), 0.0);
    sum += row_sum;
    const double row_mean = row_sum / static_cast<double>(iterations);
    report.per_row_means.push_back(row_mean);
    report.band_counts.add(stratify_band(row_mean, config));
  }
  const double n = static_cast<double>(run_scores.size() * iterations);
  report.overall_mean = sum / n;
  double sq = 0.0;
  for (const auto& values : run_scores)
    for (double v : values) sq += (v - report.overall_mean) * (v - report.overall_mean);
  report.overall_std = std::sqrt(sq / n);
  return report;
}

}  // namespace acrodis::metrics

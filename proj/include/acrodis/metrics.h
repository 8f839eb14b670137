#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "acrodis/textnorm.h"

namespace acrodis::metrics {

using TokenSpan = std::span<const std::string>;

/// Exact-match detection: 1 iff both strings are byte-equal after trimming
/// surrounding whitespace. A missing (null, blocked) detection scores 0.
int detection_match(std::optional<std::string_view> detected, std::string_view gold);

/// Smoothed sentence-level BLEU. Order N = min(4, |cand|, |ref|), uniform
/// weights, add-one smoothing on orders above 1, standard brevity penalty.
double bleu(TokenSpan candidate, TokenSpan reference);

/// LCS-based F1 over tokens.
double rouge_l(TokenSpan candidate, TokenSpan reference);

std::size_t lcs_length(TokenSpan a, TokenSpan b);

/// Word -> synonyms. Lookups are symmetric: a pair matches if either word lists
/// the other.
class SynonymTable {
 public:
  void add(const std::string& a, const std::string& b);
  bool related(const std::string& a, const std::string& b) const;
  bool empty() const { return table_.empty(); }

 private:
  std::unordered_map<std::string, std::unordered_set<std::string>> table_;
};

struct MeteorParams {
  double alpha = 0.9;
  double beta = 3.0;
  double gamma = 0.5;
  const SynonymTable* synonyms = nullptr;  // stage 3 disabled when null
};

/// Unigram alignment in three stages (exact, Porter stem, synonym), then
/// Fmean * (1 - gamma * (chunks / m)^beta).
double meteor(TokenSpan candidate, TokenSpan reference, const MeteorParams& params = {});

struct MetricScore {
  double bleu = 0.0;
  double meteor = 0.0;
  double rouge_l = 0.0;
  textnorm::Mode mode = textnorm::Mode::raw;
};

/// Normalizes both strings with `mode`, tokenizes, and runs all three metrics.
MetricScore score_expansion(std::string_view candidate, std::string_view gold, textnorm::Mode mode,
                            const MeteorParams& params = {});

/// The all-zero score assigned to blocked, failed or missing outputs.
MetricScore zero_score(textnorm::Mode mode);

enum class Band { high, medium, low };

std::string_view to_string(Band band);

struct BandConfig {
  double high_threshold = 0.7;
  double low_threshold = 0.3;

  /// Throws ConfigError unless 0 <= low < high <= 1.
  void validate() const;
};

Band stratify_band(double score, const BandConfig& config = {});

struct BandCounts {
  std::size_t high = 0;
  std::size_t medium = 0;
  std::size_t low = 0;

  void add(Band band);
  std::size_t total() const { return high + medium + low; }
};

struct AggregateReport {
  std::vector<double> per_row_means;
  double overall_mean = 0.0;
  double overall_std = 0.0;  // population std over every (row, iteration) value
  BandCounts band_counts;    // over per-row means
  std::size_t iterations = 0;
};

/// `run_scores[row][iteration]`. Every row must carry the same number (>= 1) of
/// iterations; ragged or empty input throws DataError.
AggregateReport aggregate(const std::vector<std::vector<double>>& run_scores, const BandConfig& config = {});

}  // namespace acrodis::metrics

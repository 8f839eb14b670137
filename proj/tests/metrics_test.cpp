#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "acrodis/error.h"
#include "acrodis/metrics.h"
#include "acrodis/stemmer.h"

using namespace acrodis::metrics;
using Tokens = std::vector<std::string>;

namespace {

// Brute force: longest subsequence of `a` (by bitmask) that is also a
// subsequence of `b`.
std::size_t lcs_by_enumeration(const Tokens& a, const Tokens& b) {
  std::size_t best = 0;
  for (unsigned mask = 0; mask < (1u << a.size()); ++mask) {
    std::size_t pos = 0, len = 0;
    bool ok = true;
    for (std::size_t i = 0; i < a.size() && ok; ++i) {
      if (!(mask & (1u << i))) continue;
      while (pos < b.size() && b[pos] != a[i]) ++pos;
      if (pos == b.size()) ok = false;
      else ++pos, ++len;
    }
    if (ok) best = std::max(best, len);
  }
  return best;
}

std::vector<Tokens> all_lists(std::size_t max_len, const Tokens& alphabet) {
  std::vector<Tokens> out{{}};
  std::vector<Tokens> frontier{{}};
  for (std::size_t len = 1; len <= max_len; ++len) {
    std::vector<Tokens> next;
    for (const auto& t : frontier)
      for (const auto& s : alphabet) {
        Tokens u = t;
        u.push_back(s);
        next.push_back(u);
      }
    out.insert(out.end(), next.begin(), next.end());
    frontier = std::move(next);
  }
  return out;
}

}  // namespace

TEST(Detection, ExactMatchAfterTrim) {
  EXPECT_EQ(detection_match(std::string_view("PT"), "PT"), 1);
  EXPECT_EQ(detection_match(std::string_view(" PT \n"), "PT"), 1);
  EXPECT_EQ(detection_match(std::string_view("pt"), "PT"), 0);
  EXPECT_EQ(detection_match(std::nullopt, "PT"), 0);
  EXPECT_EQ(detection_match(std::string_view(""), "PT"), 0);
}

TEST(Bleu, HandCases) {
  EXPECT_NEAR(bleu(Tokens{"a", "b", "c", "d"}, Tokens{"a", "b", "c", "d"}), 1.0, 1e-9);
  EXPECT_NEAR(bleu(Tokens{"a"}, Tokens{"a"}), 1.0, 1e-9);
  EXPECT_NEAR(bleu(Tokens{"a", "b"}, Tokens{"a", "c"}), 0.5, 1e-9);
  EXPECT_EQ(bleu(Tokens{}, Tokens{"a"}), 0.0);
  EXPECT_EQ(bleu(Tokens{"a"}, Tokens{}), 0.0);
  EXPECT_EQ(bleu(Tokens{"x", "y"}, Tokens{"a", "b"}), 0.0);
}

TEST(Bleu, BrevityPenalty) {
  // Order 1 (candidate length 1); precision 1; BP = exp(1 - 3/1).
  EXPECT_NEAR(bleu(Tokens{"a"}, Tokens{"a", "b", "c"}), std::exp(-2.0), 1e-12);
}

TEST(Bleu, SmoothedHigherOrders) {
  // Order 3: p1 = 2/3, p2 = (1+1)/(2+1), p3 = (0+1)/(1+1).
  const double expected = std::cbrt((2.0 / 3.0) * (2.0 / 3.0) * 0.5);
  EXPECT_NEAR(bleu(Tokens{"a", "b", "x"}, Tokens{"a", "b", "c"}), expected, 1e-12);
}

TEST(RougeL, HandCases) {
  EXPECT_NEAR(rouge_l(Tokens{"b", "cell", "receptor"}, Tokens{"b", "cell", "receptor"}), 1.0, 1e-12);
  // LCS 2, P = 2/3, R = 2/2.
  EXPECT_NEAR(rouge_l(Tokens{"b", "cell", "receptor"}, Tokens{"b-cell", "receptor"}), 0.4, 1e-12);
  EXPECT_EQ(rouge_l(Tokens{}, Tokens{"a"}), 0.0);
  EXPECT_EQ(rouge_l(Tokens{"a"}, Tokens{"b"}), 0.0);
}

TEST(RougeL, MatchesEnumerationOracleOnSmallAlphabet) {
  const auto lists = all_lists(4, {"a", "b", "c"});
  for (const auto& a : lists)
    for (const auto& b : lists) {
      const std::size_t lcs = lcs_by_enumeration(a, b);
      ASSERT_EQ(lcs_length(a, b), lcs);
      double expected = 0.0;
      if (lcs > 0) {
        const double p = double(lcs) / double(a.size()), r = double(lcs) / double(b.size());
        expected = 2 * p * r / (p + r);
      }
      ASSERT_NEAR(rouge_l(a, b), expected, 1e-12);
    }
}

TEST(Meteor, IdentityScore) {
  for (std::size_t n = 1; n <= 12; ++n) {
    Tokens t;
    for (std::size_t i = 0; i < n; ++i) t.push_back("w" + std::to_string(i));
    EXPECT_NEAR(meteor(t, t), 1.0 - 0.5 / double(n * n * n), 1e-9) << n;
  }
}

TEST(Meteor, StemStageMatchesInflections) {
  const double exact = meteor(Tokens{"receptor"}, Tokens{"receptors"});
  EXPECT_NEAR(exact, 0.5, 1e-9);  // one unigram, one chunk
  EXPECT_EQ(meteor(Tokens{"x"}, Tokens{"y"}), 0.0);
}

TEST(Meteor, SynonymStageIsOptional) {
  SynonymTable syn;
  syn.add("heart", "cardiac");
  EXPECT_EQ(meteor(Tokens{"heart"}, Tokens{"cardiac"}), 0.0);
  MeteorParams p;
  p.synonyms = &syn;
  EXPECT_NEAR(meteor(Tokens{"heart"}, Tokens{"cardiac"}, p), 0.5, 1e-9);
}

TEST(Meteor, FragmentationPenalty) {
  // All four unigrams match in two chunks: Fmean = 1, penalty 0.5 * (2/4)^3.
  EXPECT_NEAR(meteor(Tokens{"c", "d", "a", "b"}, Tokens{"a", "b", "c", "d"}), 1.0 - 0.5 * 0.125, 1e-9);
}

TEST(Stemmer, ReferenceVocabulary) {
  const std::pair<const char*, const char*> cases[] = {
      {"caresses", "caress"}, {"ponies", "poni"},         {"ties", "ti"},         {"caress", "caress"},
      {"cats", "cat"},        {"feed", "feed"},           {"agreed", "agre"},     {"plastered", "plaster"},
      {"motoring", "motor"},  {"sing", "sing"},           {"conflated", "conflat"}, {"troubled", "troubl"},
      {"sized", "size"},      {"hopping", "hop"},         {"tanned", "tan"},      {"falling", "fall"},
      {"hissing", "hiss"},    {"fizzed", "fizz"},         {"failing", "fail"},    {"filing", "file"},
      {"happy", "happi"},     {"sky", "sky"},             {"relational", "relat"}, {"conditional", "condit"},
      {"rational", "ration"}, {"valenci", "valenc"},      {"digitizer", "digit"}, {"operator", "oper"},
      {"feudalism", "feudal"}, {"decisiveness", "decis"}, {"hopefulness", "hope"}, {"formality", "formal"},
      {"sensitivity", "sensit"}, {"triplicate", "triplic"}, {"electrical", "electr"}, {"revival", "reviv"},
      {"adjustable", "adjust"}, {"irritant", "irrit"},    {"adoption", "adopt"},  {"activate", "activ"},
      {"probate", "probat"},  {"rate", "rate"},           {"controll", "control"}, {"roll", "roll"},
      {"generalizations", "gener"}, {"oscillators", "oscil"}, {"sclerosis", "sclerosi"},
  };
  for (const auto& [in, out] : cases) EXPECT_EQ(porter_stem(in), out) << in;
  EXPECT_EQ(porter_stem("is"), "is");
  EXPECT_EQ(porter_stem("MS"), "MS");
}

TEST(ScoreExpansion, RawAndCleanDiffer) {
  const auto raw = score_expansion("B-cell receptor", "B cell receptor", acrodis::textnorm::Mode::raw);
  const auto clean = score_expansion("B-cell receptor", "B cell receptor", acrodis::textnorm::Mode::clean);
  EXPECT_LT(raw.rouge_l, 1.0);
  EXPECT_NEAR(clean.rouge_l, 1.0, 1e-12);
  EXPECT_EQ(raw.mode, acrodis::textnorm::Mode::raw);
  const auto zero = zero_score(acrodis::textnorm::Mode::clean);
  EXPECT_EQ(zero.bleu + zero.meteor + zero.rouge_l, 0.0);
}

TEST(MetricProperty, RandomPairsStayInUnitInterval) {
  std::mt19937 rng(2024);
  std::uniform_int_distribution<int> len(0, 8), sym(0, 4);
  for (int i = 0; i < 5000; ++i) {
    Tokens a, b;
    for (int k = len(rng); k > 0; --k) a.push_back(std::string(1, char('a' + sym(rng))));
    for (int k = len(rng); k > 0; --k) b.push_back(std::string(1, char('a' + sym(rng))));
    for (double v : {bleu(a, b), rouge_l(a, b), meteor(a, b)}) {
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
    }
    ASSERT_NEAR(rouge_l(a, b), rouge_l(b, a), 1e-12);
  }
}

TEST(Bands, Thresholds) {
  EXPECT_EQ(stratify_band(0.70), Band::high);
  EXPECT_EQ(stratify_band(0.30), Band::low);
  EXPECT_EQ(stratify_band(0.50), Band::medium);
  EXPECT_EQ(stratify_band(0.0), Band::low);
  EXPECT_EQ(stratify_band(1.0), Band::high);
  EXPECT_EQ(to_string(Band::medium), "medium");
  EXPECT_THROW((BandConfig{0.2, 0.3}.validate()), acrodis::ConfigError);
  EXPECT_NO_THROW((BandConfig{}.validate()));
}

TEST(Aggregate, PopulationStdAndBands) {
  const auto r = aggregate({{1, 1}, {0, 0}, {1, 0}});
  EXPECT_NEAR(r.overall_mean, 0.5, 1e-12);
  EXPECT_NEAR(r.overall_std, 0.5, 1e-12);
  EXPECT_EQ(r.iterations, 2u);
  EXPECT_EQ(r.per_row_means, (std::vector<double>{1.0, 0.0, 0.5}));
  EXPECT_EQ(r.band_counts.high, 1u);
  EXPECT_EQ(r.band_counts.medium, 1u);
  EXPECT_EQ(r.band_counts.low, 1u);
}

TEST(Aggregate, RejectsEmptyOrRagged) {
  EXPECT_THROW(aggregate({}), acrodis::DataError);
  EXPECT_THROW(aggregate({{1.0}, {1.0, 0.0}}), acrodis::DataError);
  EXPECT_THROW(aggregate({{}}), acrodis::DataError);
}

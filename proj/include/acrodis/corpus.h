#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace acrodis::inference {
class Backend;
}

namespace acrodis::corpus {

enum class Domain { biomedical, general };
enum class ModeLabel { single_pass, cascaded };
enum class Format { csv, jsonl };

std::string_view to_string(Domain d);
std::string_view to_string(ModeLabel m);
Domain domain_from_string(std::string_view s);

struct Instance {
  std::string id;
  std::string text;
  std::string acronym;
  std::string expansion;
  Domain domain = Domain::biomedical;

  bool operator==(const Instance&) const = default;
};

inline constexpr int kCorpusSchemaVersion = 1;

struct Provenance {
  std::string source;
  int schema_version = kCorpusSchemaVersion;
};

/// Validated, immutable collection of instances. Construct through
/// load_corpus or Corpus::make, both of which enforce every instance
/// invariant and id uniqueness.
class Corpus {
 public:
  static Corpus make(std::vector<Instance> instances, ModeLabel mode = ModeLabel::cascaded, Provenance provenance = {});

  const std::vector<Instance>& instances() const { return instances_; }
  ModeLabel mode_label() const { return mode_; }
  const Provenance& provenance() const { return provenance_; }
  std::size_t size() const { return instances_.size(); }
  bool empty() const { return instances_.empty(); }

  /// nullptr when no instance carries `id`.
  const Instance* find(std::string_view id) const;

 private:
  Corpus() = default;
  std::vector<Instance> instances_;
  std::map<std::string, std::size_t, std::less<>> index_;
  ModeLabel mode_ = ModeLabel::cascaded;
  Provenance provenance_;
};

/// Token-bounded uppercase-run rule plus optional per-id manual overrides.
struct ExtractionRule {
  std::size_t min_length = 2;
  std::map<std::string, std::vector<std::string>> overrides;

  void validate() const;
  /// Throws DataError when an override names an id missing from `corpus`.
  void validate_against(const Corpus& corpus) const;
};

struct AnnotationFlags {
  std::string id;
  std::vector<std::string> detected_items;
  bool needs_review = true;
};

struct Rejection {
  std::string id;
  std::string reason;
};

struct FilterResult {
  Corpus corpus;
  std::vector<Rejection> rejected;
};

struct CorpusStats {
  std::size_t total_instances = 0;
  double average_tokens = 0.0;
  std::size_t unique_acronyms = 0;
  std::size_t unique_expansions = 0;
  std::size_t overshadowed_instances = 0;
  double overshadowed_ratio = 0.0;
};

/// Format inferred from the extension (.jsonl / .ndjson -> jsonl, else csv)
/// when not given. Throws LoadError (row-numbered where applicable).
Corpus load_corpus(const std::filesystem::path& path, std::optional<Format> format = std::nullopt);
Corpus parse_corpus_csv(std::string_view content, const std::string& source = "<memory>");
Corpus parse_corpus_jsonl(std::string_view content, const std::string& source = "<memory>");

/// RFC 4180 output with the canonical header.
std::string to_csv(const Corpus& corpus);
void write_corpus_csv(const Corpus& corpus, const std::filesystem::path& path);

/// True when `needle` occurs in `text` delimited by non-word characters or
/// string ends. Word characters are Unicode letters, digits and '_'.
bool contains_token(std::string_view text, std::string_view needle);

/// Every maximal run of uppercase ASCII letters (length >= min_length) that
/// forms a whole word, in order of appearance, duplicates kept.
std::vector<std::string> extract_acronyms(std::string_view text, const ExtractionRule& rule = {});

/// Acronym candidates for one instance: the manual override when present,
/// otherwise the rule output.
std::vector<std::string> candidates_for(const Instance& instance, const ExtractionRule& rule);

/// Keeps instances with exactly one candidate. An instance flagged for review
/// by the annotator is rejected unless a manual override settles it.
FilterResult filter_single_acronym(const Corpus& corpus, const ExtractionRule& rule = {},
                                   const std::vector<AnnotationFlags>* flags = nullptr);

/// Relabels a corpus as single-pass, throwing DataError listing offending ids
/// when any instance does not have exactly one candidate.
Corpus require_single_pass(const Corpus& corpus, const ExtractionRule& rule = {});

bool is_overshadowed(const Instance& instance, const Corpus& corpus);

/// Throws DataError on an empty corpus.
CorpusStats compute_stats(const Corpus& corpus);

nlohmann::json stats_to_json(const CorpusStats& stats, std::string_view dataset = "", std::string_view mode = "");
std::string stats_to_markdown(const std::vector<std::tuple<std::string, std::string, CorpusStats>>& rows);

/// Asks the annotator to list acronyms, equations and alphanumerics, then
/// compares the answer with the rule. Backend or parse failures yield an empty
/// item list with needs_review set. The corpus is never modified.
AnnotationFlags annotate_candidates(const Instance& instance, inference::Backend& annotator,
                                    const ExtractionRule& rule = {});

/// Runs annotate_candidates over `instances` with at most `parallelism`
/// requests in flight. Output order matches input order.
std::vector<AnnotationFlags> annotate_all(const std::vector<Instance>& instances, inference::Backend& annotator,
                                          const ExtractionRule& rule, std::size_t parallelism);

}  // namespace acrodis::corpus

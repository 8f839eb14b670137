#include "acrodis/corpus.h"

#include <unicode/uchar.h>
#include <unicode/utf8.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <thread>

#include "acrodis/error.h"
#include "acrodis/inference.h"
#include "acrodis/prompting.h"
#include "acrodis/textnorm.h"

namespace acrodis::corpus {
namespace {

using json = nlohmann::json;

constexpr std::array<std::string_view, 5> kColumns = {"id", "text", "acronym", "expansion", "domain"};

bool is_word_cp(UChar32 c) { return c == '_' || u_isalnum(c); }

// Code point ending just before byte offset `pos`, or -1 at the start.
UChar32 cp_before(std::string_view s, std::size_t pos) {
  if (pos == 0) return -1;
  int32_t i = static_cast<int32_t>(pos);
  UChar32 c;
  U8_PREV(reinterpret_cast<const uint8_t*>(s.data()), 0, i, c);
  return c;
}

UChar32 cp_at(std::string_view s, std::size_t pos) {
  if (pos >= s.size()) return -1;
  int32_t i = static_cast<int32_t>(pos);
  UChar32 c;
  U8_NEXT(reinterpret_cast<const uint8_t*>(s.data()), i, static_cast<int32_t>(s.size()), c);
  return c;
}

bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

std::string trim(std::string_view s) {
  const char* ws = " \t\r\n\f\v";
  auto first = s.find_first_not_of(ws);
  if (first == std::string_view::npos) return {};
  auto last = s.find_last_not_of(ws);
  return std::string(s.substr(first, last - first + 1));
}

struct CsvRecord {
  std::vector<std::string> fields;
  std::size_t line = 0;
};

// RFC 4180 reader: quoted fields may hold commas, doubled quotes and newlines.
std::vector<CsvRecord> read_csv(std::string_view in) {
  std::vector<CsvRecord> records;
  CsvRecord cur;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t line = 1;
  cur.line = 1;
  auto end_record = [&] {
    cur.fields.push_back(std::move(field));
    field.clear();
    if (!(cur.fields.size() == 1 && cur.fields[0].empty())) records.push_back(std::move(cur));
    cur = CsvRecord{};
    cur.line = line;
    field_started = false;
  };
  for (std::size_t i = 0; i < in.size(); ++i) {
    char c = in[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < in.size() && in[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (field_started && !field.empty()) throw LoadError(records.size() + 1, "stray quote inside unquoted field");
        in_quotes = true;
        field_started = true;
        break;
      case ',':
        cur.fields.push_back(std::move(field));
        field.clear();
        field_started = false;
        break;
      case '\r':
        break;
      case '\n':
        ++line;
        end_record();
        break;
      default:
        field.push_back(c);
        field_started = true;
    }
  }
  if (in_quotes) throw LoadError(records.size(), "unterminated quoted field");
  if (!field.empty() || !cur.fields.empty()) end_record();
  return records;
}

std::string csv_quote(std::string_view s) {
  bool needs = s.find_first_of(",\"\r\n") != std::string_view::npos || (!s.empty() && (s.front() == ' ' || s.back() == ' '));
  if (!needs) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(0, "cannot open corpus file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string strip_bom(std::string s) {
  if (s.rfind("\xEF\xBB\xBF", 0) == 0) s.erase(0, 3);
  return s;
}

Domain parse_domain(std::size_t row, std::string_view s) {
  try {
    return domain_from_string(s);
  } catch (const DataError& e) {
    throw LoadError(row, e.what());
  }
}

}  // namespace

std::string_view to_string(Domain d) { return d == Domain::biomedical ? "biomedical" : "general"; }

std::string_view to_string(ModeLabel m) { return m == ModeLabel::single_pass ? "single_pass" : "cascaded"; }

Domain domain_from_string(std::string_view s) {
  std::string v = trim(s);
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (v == "biomedical") return Domain::biomedical;
  if (v == "general") return Domain::general;
  throw DataError("unknown domain '" + std::string(s) + "' (expected biomedical or general)");
}

Corpus Corpus::make(std::vector<Instance> instances, ModeLabel mode, Provenance provenance) {
  Corpus c;
  c.mode_ = mode;
  c.provenance_ = std::move(provenance);
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const Instance& inst = instances[i];
    const std::size_t row = i + 1;
    if (blank(inst.id)) throw LoadError(row, "empty id");
    if (blank(inst.text)) throw LoadError(row, "empty text (id " + inst.id + ")");
    if (blank(inst.acronym)) throw LoadError(row, "empty acronym (id " + inst.id + ")");
    if (blank(inst.expansion)) throw LoadError(row, "empty expansion (id " + inst.id + ")");
    if (!contains_token(inst.text, inst.acronym))
      throw LoadError(row, "acronym '" + inst.acronym + "' absent from its text (id " + inst.id + ")");
    if (!c.index_.emplace(inst.id, i).second) throw LoadError(row, "duplicate id '" + inst.id + "'");
  }
  c.instances_ = std::move(instances);
  return c;
}

const Instance* Corpus::find(std::string_view id) const {
  auto it = index_.find(id);
  return it == index_.end() ? nullptr : &instances_[it->second];
}

void ExtractionRule::validate() const {
  if (min_length < 2) throw ConfigError("extraction rule minimum length must be >= 2");
}

void ExtractionRule::validate_against(const Corpus& corpus) const {
  validate();
  for (const auto& [id, _] : overrides)
    if (corpus.find(id) == nullptr) throw DataError("override references unknown id '" + id + "'");
}

Corpus parse_corpus_csv(std::string_view content, const std::string& source) {
  if (blank(content)) throw LoadError(0, "empty corpus file '" + source + "'");
  auto records = read_csv(strip_bom(std::string(content)));
  const auto& header = records.front().fields;
  std::vector<std::size_t> col(kColumns.size());
  for (std::size_t k = 0; k < kColumns.size(); ++k) {
    auto it = std::find_if(header.begin(), header.end(), [&](const std::string& h) { return trim(h) == kColumns[k]; });
    if (it == header.end()) throw LoadError(0, "missing column '" + std::string(kColumns[k]) + "' in " + source);
    col[k] = static_cast<std::size_t>(it - header.begin());
  }
  std::vector<Instance> instances;
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& f = records[r].fields;
    if (f.size() != header.size())
      throw LoadError(r, "expected " + std::to_string(header.size()) + " fields, found " + std::to_string(f.size()) +
                             " (line " + std::to_string(records[r].line) + ")");
    instances.push_back(Instance{trim(f[col[0]]), f[col[1]], trim(f[col[2]]), trim(f[col[3]]), parse_domain(r, f[col[4]])});
  }
  return Corpus::make(std::move(instances), ModeLabel::cascaded, Provenance{source, kCorpusSchemaVersion});
}

Corpus parse_corpus_jsonl(std::string_view content, const std::string& source) {
  if (blank(content)) throw LoadError(0, "empty corpus file '" + source + "'");
  std::vector<Instance> instances;
  std::istringstream in{strip_bom(std::string(content))};
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (blank(line)) continue;
    ++row;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw LoadError(row, "not a JSON object");
    Instance inst;
    std::array<std::string*, 4> targets = {&inst.id, &inst.text, &inst.acronym, &inst.expansion};
    for (std::size_t k = 0; k < kColumns.size(); ++k) {
      const std::string key(kColumns[k]);
      if (!j.contains(key)) throw LoadError(row, "missing key '" + key + "'");
      if (!j[key].is_string()) throw LoadError(row, "key '" + key + "' is not a string");
      if (k < targets.size()) *targets[k] = j[key].get<std::string>();
    }
    inst.id = trim(inst.id);
    inst.acronym = trim(inst.acronym);
    inst.expansion = trim(inst.expansion);
    inst.domain = parse_domain(row, j["domain"].get<std::string>());
    instances.push_back(std::move(inst));
  }
  return Corpus::make(std::move(instances), ModeLabel::cascaded, Provenance{source, kCorpusSchemaVersion});
}

Corpus load_corpus(const std::filesystem::path& path, std::optional<Format> format) {
  if (!format) {
    auto ext = path.extension().string();
    format = (ext == ".jsonl" || ext == ".ndjson") ? Format::jsonl : Format::csv;
  }
  std::string content = read_file(path);
  return *format == Format::jsonl ? parse_corpus_jsonl(content, path.string()) : parse_corpus_csv(content, path.string());
}

std::string to_csv(const Corpus& corpus) {
  std::string out = "id,text,acronym,expansion,domain\r\n";
  for (const auto& i : corpus.instances()) {
    out += csv_quote(i.id) + ',' + csv_quote(i.text) + ',' + csv_quote(i.acronym) + ',' + csv_quote(i.expansion) + ',' +
           std::string(to_string(i.domain)) + "\r\n";
  }
  return out;
}

void write_corpus_csv(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << to_csv(corpus);
}

bool contains_token(std::string_view text, std::string_view needle) {
  if (needle.empty()) return false;
  for (std::size_t pos = text.find(needle); pos != std::string_view::npos; pos = text.find(needle, pos + 1)) {
    UChar32 before = cp_before(text, pos);
    UChar32 after = cp_at(text, pos + needle.size());
    // Boundaries only matter on sides where the needle itself is a word char.
    bool left_ok = !is_word_cp(cp_at(needle, 0)) || before < 0 || !is_word_cp(before);
    bool right_ok = !is_word_cp(cp_before(needle, needle.size())) || after < 0 || !is_word_cp(after);
    if (left_ok && right_ok) return true;
  }
  return false;
}

std::vector<std::string> extract_acronyms(std::string_view text, const ExtractionRule& rule) {
  std::vector<std::string> out;
  const auto* bytes = reinterpret_cast<const uint8_t*>(text.data());
  const auto n = static_cast<int32_t>(text.size());
  int32_t i = 0;
  while (i < n) {
    int32_t start = i;
    UChar32 c;
    U8_NEXT(bytes, i, n, c);
    if (!is_word_cp(c)) continue;
    bool all_upper = true;
    std::size_t len = 0;
    int32_t end = i;
    for (UChar32 w = c;;) {
      all_upper = all_upper && w >= 'A' && w <= 'Z';
      ++len;
      end = i;
      if (i >= n) break;
      int32_t peek = i;
      U8_NEXT(bytes, peek, n, w);
      if (!is_word_cp(w)) break;
      i = peek;
    }
    if (all_upper && len >= rule.min_length)
      out.emplace_back(text.substr(static_cast<std::size_t>(start), static_cast<std::size_t>(end - start)));
  }
  return out;
}

std::vector<std::string> candidates_for(const Instance& instance, const ExtractionRule& rule) {
  if (auto it = rule.overrides.find(instance.id); it != rule.overrides.end()) return it->second;
  return extract_acronyms(instance.text, rule);
}

FilterResult filter_single_acronym(const Corpus& corpus, const ExtractionRule& rule,
                                   const std::vector<AnnotationFlags>* flags) {
  std::map<std::string, const AnnotationFlags*, std::less<>> flag_by_id;
  if (flags != nullptr)
    for (const auto& f : *flags) flag_by_id[f.id] = &f;

  std::vector<Instance> kept;
  std::vector<Rejection> rejected;
  for (const auto& inst : corpus.instances()) {
    const bool overridden = rule.overrides.count(inst.id) > 0;
    auto found = candidates_for(inst, rule);
    if (found.size() != 1) {
      rejected.push_back({inst.id, std::to_string(found.size()) + " acronym candidates"});
      continue;
    }
    if (!overridden) {
      auto it = flag_by_id.find(inst.id);
      if (it != flag_by_id.end() && it->second->needs_review) {
        rejected.push_back({inst.id, "annotator flagged for review"});
        continue;
      }
    }
    kept.push_back(inst);
  }
  return FilterResult{Corpus::make(std::move(kept), ModeLabel::single_pass, corpus.provenance()), std::move(rejected)};
}

Corpus require_single_pass(const Corpus& corpus, const ExtractionRule& rule) {
  std::vector<std::string> bad;
  for (const auto& inst : corpus.instances())
    if (candidates_for(inst, rule).size() != 1) bad.push_back(inst.id);
  if (!bad.empty()) {
    std::string list;
    for (std::size_t i = 0; i < bad.size() && i < 10; ++i) list += (i ? ", " : "") + bad[i];
    if (bad.size() > 10) list += ", ...";
    throw DataError(std::to_string(bad.size()) + " instance(s) do not hold exactly one acronym: " + list);
  }
  return Corpus::make(corpus.instances(), ModeLabel::single_pass, corpus.provenance());
}

namespace {

// acronym -> (clean expansion -> count)
using SenseCounts = std::map<std::string, std::map<std::string, std::size_t>>;

SenseCounts sense_counts(const Corpus& corpus) {
  SenseCounts counts;
  for (const auto& inst : corpus.instances()) ++counts[inst.acronym][textnorm::normalize_clean(inst.expansion)];
  return counts;
}

bool overshadowed_in(const Instance& instance, const SenseCounts& counts) {
  auto it = counts.find(instance.acronym);
  if (it == counts.end()) return false;
  std::size_t best = 0;
  for (const auto& [_, n] : it->second) best = std::max(best, n);
  auto own = it->second.find(textnorm::normalize_clean(instance.expansion));
  return own != it->second.end() && own->second < best;
}

}  // namespace

bool is_overshadowed(const Instance& instance, const Corpus& corpus) {
  return overshadowed_in(instance, sense_counts(corpus));
}

CorpusStats compute_stats(const Corpus& corpus) {
  if (corpus.empty()) throw DataError("cannot compute statistics of an empty corpus");
  const SenseCounts counts = sense_counts(corpus);
  CorpusStats s;
  s.total_instances = corpus.size();
  std::size_t tokens = 0;
  std::set<std::string> expansions;
  for (const auto& inst : corpus.instances()) {
    std::istringstream words(inst.text);
    std::string w;
    while (words >> w) ++tokens;
    expansions.insert(textnorm::normalize_clean(inst.expansion));
    if (overshadowed_in(inst, counts)) ++s.overshadowed_instances;
  }
  s.average_tokens = static_cast<double>(tokens) / static_cast<double>(s.total_instances);
  s.unique_acronyms = counts.size();
  s.unique_expansions = expansions.size();
  s.overshadowed_ratio = static_cast<double>(s.overshadowed_instances) / static_cast<double>(s.total_instances);
  return s;
}

nlohmann::json stats_to_json(const CorpusStats& s, std::string_view dataset, std::string_view mode) {
  json j;
  if (!dataset.empty()) j["dataset"] = dataset;
  if (!mode.empty()) j["mode"] = mode;
  j["total_instances"] = s.total_instances;
  j["average_tokens"] = s.average_tokens;
  j["unique_acronyms"] = s.unique_acronyms;
  j["unique_expansions"] = s.unique_expansions;
  j["overshadowed_instances"] = s.overshadowed_instances;
  j["overshadowed_ratio"] = s.overshadowed_ratio;
  return j;
}

std::string stats_to_markdown(const std::vector<std::tuple<std::string, std::string, CorpusStats>>& rows) {
  std::ostringstream out;
  out << "| Dataset | Mode | Total Instances | Average Tokens | Unique Acronym | Unique Expansion | "
         "Overshadowed Instances | Overshadowed Ratio (%) |\n";
  out << "|---|---|---:|---:|---:|---:|---:|---:|\n";
  for (const auto& [dataset, mode, s] : rows) {
    out << "| " << dataset << " | " << mode << " | " << s.total_instances << " | " << std::fixed << std::setprecision(2)
        << s.average_tokens << " | " << s.unique_acronyms << " | " << s.unique_expansions << " | "
        << s.overshadowed_instances << " | " << s.overshadowed_ratio * 100.0 << " |\n";
  }
  return out.str();
}

AnnotationFlags annotate_candidates(const Instance& instance, inference::Backend& annotator,
                                    const ExtractionRule& rule) {
  AnnotationFlags flags;
  flags.id = instance.id;
  flags.needs_review = true;
  try {
    auto prompt = prompting::render_annotation(instance.text);
    auto record = annotator.complete({prompt.serialize(), instance.id});
    auto parsed = prompting::parse_output(record.response, prompting::Expected::detection);
    const auto* items = parsed.detection();
    if (items == nullptr) return flags;
    flags.detected_items = items->acronyms;
  } catch (const std::exception&) {
    return flags;
  }
  auto rule_items = candidates_for(instance, rule);
  std::set<std::string> from_rule(rule_items.begin(), rule_items.end());
  std::set<std::string> from_model(flags.detected_items.begin(), flags.detected_items.end());
  flags.needs_review = from_rule != from_model;
  return flags;
}

std::vector<AnnotationFlags> annotate_all(const std::vector<Instance>& instances, inference::Backend& annotator,
                                          const ExtractionRule& rule, std::size_t parallelism) {
  std::vector<AnnotationFlags> out(instances.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < instances.size(); i = next++) out[i] = annotate_candidates(instances[i], annotator, rule);
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(parallelism, instances.size()));
  std::vector<std::jthread> pool;
  for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  return out;
}

}  // namespace acrodis::corpus

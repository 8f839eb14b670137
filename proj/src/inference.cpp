#include "acrodis/inference.h"

#include <arpa/inet.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <regex>
#include <thread>

#include <httplib.h>

#include "acrodis/corpus.h"
#include "acrodis/error.h"
#include "acrodis/prompting.h"

namespace acrodis::inference {
namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

std::string lower_ascii(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool private_v4(const std::array<unsigned char, 4>& a) {
  if (a[0] == 127 || a[0] == 10) return true;
  if (a[0] == 172 && (a[1] & 0xF0) == 16) return true;
  if (a[0] == 192 && a[1] == 168) return true;
  if (a[0] == 169 && a[1] == 254) return true;
  if (a[0] == 100 && (a[1] & 0xC0) == 64) return true;
  return false;
}

std::string scheme_host_port(const Endpoint& ep) {
  std::string host = ep.host.find(':') != std::string::npos ? "[" + ep.host + "]" : ep.host;
  return ep.scheme + "://" + host + ":" + std::to_string(ep.port);
}

void configure(httplib::Client& cli, const BackendConfig& config) {
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config.timeout - secs);
  cli.set_connection_timeout(secs.count(), usecs.count());
  cli.set_read_timeout(secs.count(), usecs.count());
  cli.set_write_timeout(secs.count(), usecs.count());
  cli.set_keep_alive(false);
}

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Tokens an annotator would list besides acronyms: equations and mixed
// letter/digit strings.
std::vector<std::string> equation_like_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    std::size_t end = pos;
    while (end < text.size() && !std::isspace(static_cast<unsigned char>(text[end]))) ++end;
    std::string tok(text.substr(pos, end - pos));
    pos = end;
    auto strip = [](char c) { return std::string_view(".,;:!?()\"'[]").find(c) != std::string_view::npos; };
    while (!tok.empty() && strip(tok.back())) tok.pop_back();
    while (!tok.empty() && strip(tok.front())) tok.erase(tok.begin());
    if (tok.empty()) continue;
    bool has_digit = std::any_of(tok.begin(), tok.end(), [](unsigned char c) { return std::isdigit(c); });
    bool has_alpha = std::any_of(tok.begin(), tok.end(), [](unsigned char c) { return std::isalpha(c); });
    if (tok.find('=') != std::string::npos || (has_digit && has_alpha)) out.push_back(tok);
  }
  return out;
}

std::vector<std::string> dedupe(std::vector<std::string> items) {
  std::vector<std::string> out;
  for (auto& s : items)
    if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(std::move(s));
  return out;
}

struct MockReply {
  std::string acronym;
  std::string expansion;
  bool known = false;
};

MockReply lookup(const MockBehavior& b, const std::string& id, const std::string& acronym, bool single_pass) {
  if (auto it = b.instance_answers.find(id); it != b.instance_answers.end()) {
    if (single_pass || it->second.acronym == acronym) return {it->second.acronym, it->second.expansion, true};
  }
  if (auto it = b.dictionary.find(acronym); it != b.dictionary.end()) return {acronym, it->second, true};
  return {acronym, "", false};
}

}  // namespace

void BackendConfig::validate() const {
  if (temperature < 0.0 || std::isnan(temperature)) throw ConfigError("temperature must be >= 0");
  if (max_tokens <= 0) throw ConfigError("max_tokens must be positive");
  if (retries < 0) throw ConfigError("retries must be >= 0");
  if (parallelism == 0) throw ConfigError("parallelism must be >= 1");
  if (timeout.count() <= 0) throw ConfigError("timeout must be positive");
  if (model_name.empty()) throw ConfigError("model name is empty");
  check_privacy(*this);
}

json BackendConfig::to_json() const {
  return json{{"endpoint", endpoint},
              {"model", model_name},
              {"temperature", temperature},
              {"max_tokens", max_tokens},
              {"timeout_ms", timeout.count()},
              {"retries", retries},
              {"parallelism", parallelism},
              {"force_remote", force_remote},
              {"backoff_ms", backoff_base.count()}};
}

BackendConfig BackendConfig::from_json(const json& j, BackendConfig c) {
  if (!j.is_object()) throw ConfigError("backend config must be a JSON object");
  try {
    c.endpoint = j.value("endpoint", c.endpoint);
    c.model_name = j.value("model", c.model_name);
    c.temperature = j.value("temperature", c.temperature);
    c.max_tokens = j.value("max_tokens", c.max_tokens);
    c.timeout = std::chrono::milliseconds(j.value("timeout_ms", static_cast<std::int64_t>(c.timeout.count())));
    c.retries = j.value("retries", c.retries);
    c.parallelism = j.value("parallelism", c.parallelism);
    c.force_remote = j.value("force_remote", c.force_remote);
    c.backoff_base = std::chrono::milliseconds(j.value("backoff_ms", static_cast<std::int64_t>(c.backoff_base.count())));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad backend config: ") + e.what());
  }
  return c;
}

Endpoint parse_endpoint(std::string_view url) {
  static const std::regex re(R"(^(https?)://(\[[0-9A-Fa-f:.]+\]|[^/:\[\]]+)(?::([0-9]{1,5}))?(/.*)?$)",
                             std::regex::icase);
  std::cmatch m;
  if (!std::regex_match(url.begin(), url.end(), m, re))
    throw ConfigError("endpoint '" + std::string(url) + "' is not an http(s) URL");
  Endpoint ep;
  ep.scheme = lower_ascii(m[1].str());
  ep.host = m[2].str();
  if (ep.host.front() == '[') ep.host = ep.host.substr(1, ep.host.size() - 2);
  ep.port = m[3].matched ? std::stoi(m[3].str()) : (ep.scheme == "https" ? 443 : 80);
  if (ep.port <= 0 || ep.port > 65535) throw ConfigError("endpoint port out of range");
  ep.base_path = m[4].matched ? m[4].str() : "";
  while (!ep.base_path.empty() && ep.base_path.back() == '/') ep.base_path.pop_back();
  return ep;
}

bool is_private_host(std::string_view host_in) {
  std::string host = lower_ascii(host_in);
  if (!host.empty() && host.front() == '[' && host.back() == ']') host = host.substr(1, host.size() - 2);
  if (host == "localhost") return true;

  std::array<unsigned char, 4> v4{};
  if (inet_pton(AF_INET, host.c_str(), v4.data()) == 1) return private_v4(v4);

  std::array<unsigned char, 16> v6{};
  if (inet_pton(AF_INET6, host.c_str(), v6.data()) == 1) {
    static constexpr std::array<unsigned char, 16> loopback{0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1};
    if (v6 == loopback) return true;
    if ((v6[0] & 0xFE) == 0xFC) return true;                   // fc00::/7
    if (v6[0] == 0xFE && (v6[1] & 0xC0) == 0x80) return true;  // fe80::/10
    bool mapped = std::all_of(v6.begin(), v6.begin() + 10, [](unsigned char b) { return b == 0; }) &&
                  v6[10] == 0xFF && v6[11] == 0xFF;
    if (mapped) return private_v4({v6[12], v6[13], v6[14], v6[15]});
    return false;
  }
  return false;
}

void check_privacy(const BackendConfig& config) {
  Endpoint ep = parse_endpoint(config.endpoint);
  if (config.force_remote || is_private_host(ep.host)) return;
  throw PrivacyError("refusing non-private endpoint '" + config.endpoint +
                     "': only loopback/LAN hosts are allowed without --force-remote");
}

std::string build_chat_request(std::string_view prompt, const BackendConfig& config) {
  nlohmann::ordered_json body;
  body["model"] = config.model_name;
  body["messages"] = nlohmann::ordered_json::array({{{"role", "user"}, {"content", std::string(prompt)}}});
  body["temperature"] = config.temperature;
  body["max_tokens"] = config.max_tokens;
  return body.dump(-1, ' ', false, json::error_handler_t::replace);
}

std::string extract_chat_content(std::string_view body) {
  json j = json::parse(body.begin(), body.end(), nullptr, false);
  if (j.is_discarded()) throw BackendError("server reply is not JSON");
  try {
    const json& content = j.at("choices").at(0).at("message").at("content");
    return content.is_null() ? std::string() : content.get<std::string>();
  } catch (const json::exception& e) {
    throw BackendError(std::string("server reply lacks choices[0].message.content: ") + e.what());
  }
}

HttpBackend::HttpBackend(BackendConfig config) : config_(std::move(config)) {
  config_.validate();
  endpoint_ = parse_endpoint(config_.endpoint);
  if (endpoint_.scheme == "https")
    throw ConfigError("https endpoints are not supported by this build; local servers speak plain http");
}

std::string HttpBackend::id() const { return "http:" + config_.model_name + "@" + config_.endpoint; }

CompletionRecord HttpBackend::complete(const CompletionRequest& request) {
  const std::string body = build_chat_request(request.prompt, config_);
  const std::string path = endpoint_.base_path + "/v1/chat/completions";
  std::string last_cause;
  const int max_attempts = config_.retries + 1;
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    if (attempt > 1) std::this_thread::sleep_for(config_.backoff_base * (1 << std::min(attempt - 2, 16)));
    httplib::Client cli(scheme_host_port(endpoint_));
    configure(cli, config_);
    const auto start = Clock::now();
    auto res = cli.Post(path, body, "application/json");
    if (!res) {
      last_cause = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_cause = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) throw BackendError("HTTP " + std::to_string(res->status) + " from " + config_.endpoint);
    CompletionRecord rec;
    rec.prompt = request.prompt;
    rec.response = extract_chat_content(res->body);
    rec.latency_ms = elapsed_ms(start);
    rec.attempt = attempt;
    rec.backend_id = id();
    return rec;
  }
  throw BackendError("giving up after " + std::to_string(max_attempts) + " attempt(s): " + last_cause);
}

HealthReport HttpBackend::probe() {
  HealthReport report;
  httplib::Client cli(scheme_host_port(endpoint_));
  configure(cli, config_);
  auto res = cli.Get(endpoint_.base_path + "/v1/models");
  if (!res) {
    report.detail = "unreachable: " + httplib::to_string(res.error());
    return report;
  }
  report.reachable = true;
  if (res->status != 200) {
    report.detail = "reachable; no model list (HTTP " + std::to_string(res->status) + ")";
    return report;
  }
  json j = json::parse(res->body, nullptr, false);
  if (j.is_discarded() || !j.contains("data") || !j["data"].is_array()) {
    report.detail = "reachable; model list unreadable";
    return report;
  }
  for (const auto& m : j["data"])
    if (m.is_object() && m.contains("id") && m["id"].is_string()) report.models.push_back(m["id"].get<std::string>());
  if (report.models.empty()) {
    report.detail = "reachable; server lists no models";
    return report;
  }
  report.model_available =
      std::find(report.models.begin(), report.models.end(), config_.model_name) != report.models.end();
  report.detail = *report.model_available ? "healthy" : "model unavailable: '" + config_.model_name + "'";
  return report;
}

CompletionRecord complete(const CompletionRequest& request, const BackendConfig& config) {
  HttpBackend backend(config);
  return backend.complete(request);
}

HealthReport probe(const BackendConfig& config) {
  HttpBackend backend(config);
  return backend.probe();
}

json MockBehavior::to_json() const {
  json answers = json::object();
  for (const auto& [id, a] : instance_answers) answers[id] = {{"acronym", a.acronym}, {"expansion", a.expansion}};
  return json{{"dictionary", dictionary},
              {"instance_answers", answers},
              {"error_rate", error_rate},
              {"seed", seed},
              {"block_ids", block_ids},
              {"population", population},
              {"confidence", confidence}};
}

BackendConfig BackendConfig::from_json(const json& j) { return from_json(j, BackendConfig{}); }

MockBehavior MockBehavior::from_json(const json& j) {
  MockBehavior b;
  try {
    b.dictionary = j.value("dictionary", b.dictionary);
    if (j.contains("instance_answers"))
      for (const auto& [id, a] : j.at("instance_answers").items())
        b.instance_answers[id] = {a.at("acronym").get<std::string>(), a.at("expansion").get<std::string>()};
    b.error_rate = j.value("error_rate", b.error_rate);
    b.seed = j.value("seed", b.seed);
    b.block_ids = j.value("block_ids", b.block_ids);
    b.population = j.value("population", b.population);
    b.confidence = j.value("confidence", b.confidence);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad mock config: ") + e.what());
  }
  if (!(b.error_rate >= 0.0 && b.error_rate <= 1.0)) throw ConfigError("mock error_rate must lie in [0,1]");
  return b;
}

std::uint64_t corruption_key(std::uint64_t seed, std::string_view id) {
  return mix64(fnv1a64(std::to_string(seed) + ":" + std::string(id)));
}

std::vector<std::string> corrupted_ids(const MockBehavior& b) {
  std::vector<std::pair<std::uint64_t, std::string>> ranked;
  for (const auto& id : b.population) ranked.emplace_back(corruption_key(b.seed, id), id);
  std::sort(ranked.begin(), ranked.end());
  auto k = static_cast<std::size_t>(std::floor(b.error_rate * static_cast<double>(ranked.size()) + 0.5));
  std::vector<std::string> out;
  for (std::size_t i = 0; i < k && i < ranked.size(); ++i) out.push_back(ranked[i].second);
  std::sort(out.begin(), out.end());
  return out;
}

bool is_corrupted(const MockBehavior& b, std::string_view id) {
  if (b.error_rate <= 0.0) return false;
  if (!b.population.empty()) {
    auto ids = corrupted_ids(b);
    return std::binary_search(ids.begin(), ids.end(), std::string(id));
  }
  const double u = static_cast<double>(corruption_key(b.seed, id) >> 11) * 0x1.0p-53;
  return u < b.error_rate;
}

namespace {

CompletionRecord mock_reply(const CompletionRequest& request, const MockBehavior& b, bool corrupted,
                            const std::string& backend_id) {
  const auto start = Clock::now();
  CompletionRecord rec;
  rec.prompt = request.prompt;
  rec.backend_id = backend_id;
  if (b.block_ids.count(request.instance_id) > 0) {
    rec.latency_ms = elapsed_ms(start);
    return rec;
  }

  prompting::Prompt prompt;
  try {
    prompt = prompting::Prompt::parse(request.prompt);
  } catch (const DataError&) {
    rec.response = "I cannot parse this request.";
    return rec;
  }
  const auto kind = prompt.kind().value_or(prompting::PromptKind::single_pass);
  auto rule_acronyms = dedupe(corpus::extract_acronyms(prompt.text));

  switch (kind) {
    case prompting::PromptKind::detection:
      rec.response = prompting::serialize(prompting::DetectionResult{rule_acronyms});
      break;
    case prompting::PromptKind::annotation: {
      auto items = rule_acronyms;
      for (auto& t : equation_like_tokens(prompt.text)) items.push_back(std::move(t));
      rec.response = json{{"items", dedupe(std::move(items))}}.dump();
      break;
    }
    case prompting::PromptKind::single_pass:
    case prompting::PromptKind::expansion: {
      const bool single = kind == prompting::PromptKind::single_pass;
      std::string acronym = prompt.acronym.value_or(rule_acronyms.empty() ? "" : rule_acronyms.front());
      MockReply reply = lookup(b, request.instance_id, acronym, single);
      prompting::ExpansionResult out;
      out.acronym = reply.acronym;
      out.expansion = reply.known ? reply.expansion : "unknown";
      out.confidence = reply.known ? b.confidence : 0.1;
      out.rationale = reply.known ? "dictionary lookup" : "acronym not in dictionary";
      if (corrupted) {
        if (single) out.acronym = lower_ascii(out.acronym) + "?";
        out.expansion = std::string(kCorruptExpansion);
        out.confidence = b.confidence;
        out.rationale = "dictionary lookup";
      }
      rec.response = prompting::serialize(out);
      break;
    }
  }
  rec.latency_ms = elapsed_ms(start);
  return rec;
}

}  // namespace

CompletionRecord mock_complete(const CompletionRequest& request, const MockBehavior& behavior) {
  return mock_reply(request, behavior, is_corrupted(behavior, request.instance_id), "mock");
}

MockBackend::MockBackend(MockBehavior behavior, std::string name, std::size_t parallelism)
    : behavior_(std::move(behavior)), name_(std::move(name)), parallelism_(std::max<std::size_t>(1, parallelism)) {
  if (!(behavior_.error_rate >= 0.0 && behavior_.error_rate <= 1.0))
    throw ConfigError("mock error_rate must lie in [0,1]");
  if (!behavior_.population.empty()) {
    auto ids = corrupted_ids(behavior_);
    corrupted_.insert(ids.begin(), ids.end());
  }
}

CompletionRecord MockBackend::complete(const CompletionRequest& request) {
  const bool corrupted = behavior_.population.empty() ? is_corrupted(behavior_, request.instance_id)
                                                       : corrupted_.count(request.instance_id) > 0;
  return mock_reply(request, behavior_, corrupted, name_);
}

HealthReport MockBackend::probe() {
  HealthReport r;
  r.reachable = true;
  r.model_available = true;
  r.models = {name_};
  r.detail = "healthy (mock)";
  return r;
}

}  // namespace acrodis::inference

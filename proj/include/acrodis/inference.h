#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace acrodis::inference {

struct BackendConfig {
  std::string endpoint = "http://127.0.0.1:8080";
  std::string model_name = "local-model";
  double temperature = 0.0;
  int max_tokens = 512;
  std::chrono::milliseconds timeout{60000};
  int retries = 2;
  std::size_t parallelism = 1;
  bool force_remote = false;
  std::chrono::milliseconds backoff_base{250};

  /// Range checks and the privacy guard. Throws ConfigError / PrivacyError.
  void validate() const;

  nlohmann::json to_json() const;
  /// Missing keys keep their defaults.
  static BackendConfig from_json(const nlohmann::json& j, BackendConfig base);
  static BackendConfig from_json(const nlohmann::json& j);
};

struct Endpoint {
  std::string scheme;
  std::string host;
  int port = 0;
  std::string base_path;  // without trailing '/'
};

/// Throws ConfigError on anything but http(s)://host[:port][/path].
Endpoint parse_endpoint(std::string_view url);

/// Loopback, RFC 1918, link-local, CGNAT, IPv6 ULA/link-local literals and
/// the name "localhost". Other host names are not resolved and count as
/// public.
bool is_private_host(std::string_view host);

/// Throws PrivacyError when the endpoint is public and `force_remote` is off.
void check_privacy(const BackendConfig& config);

struct CompletionRequest {
  std::string prompt;       // serialized prompt, sent verbatim as the user message
  std::string instance_id;  // metadata for logs and the mock; never sent
};

struct CompletionRecord {
  std::string prompt;
  std::string response;
  double latency_ms = 0.0;
  int attempt = 1;
  std::string backend_id;
};

struct HealthReport {
  bool reachable = false;
  std::optional<bool> model_available;  // nullopt when the server lists no models
  std::vector<std::string> models;
  std::string detail;

  bool healthy() const { return reachable && model_available.value_or(true); }
};

class Backend {
 public:
  virtual ~Backend() = default;
  virtual CompletionRecord complete(const CompletionRequest& request) = 0;
  virtual HealthReport probe() = 0;
  virtual std::string id() const = 0;
  virtual std::size_t parallelism() const { return 1; }
};

/// Chat-completion request body for one user message.
std::string build_chat_request(std::string_view prompt, const BackendConfig& config);
/// choices[0].message.content; a null content maps to "". Throws BackendError.
std::string extract_chat_content(std::string_view body);

/// Client for an OpenAI-style local inference server. The privacy guard runs
/// in the constructor, before any socket exists. Safe for concurrent
/// complete() calls; each call uses its own connection.
class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(BackendConfig config);

  CompletionRecord complete(const CompletionRequest& request) override;
  HealthReport probe() override;
  std::string id() const override;
  std::size_t parallelism() const override { return config_.parallelism; }
  const BackendConfig& config() const { return config_; }

 private:
  BackendConfig config_;
  Endpoint endpoint_;
};

/// Convenience wrapper: builds an HttpBackend and sends one request.
CompletionRecord complete(const CompletionRequest& request, const BackendConfig& config);
HealthReport probe(const BackendConfig& config);

/// Per-instance answer for the mock: the acronym it is for and its expansion.
struct MockAnswer {
  std::string acronym;
  std::string expansion;
};

struct MockBehavior {
  std::map<std::string, std::string> dictionary;       // acronym -> expansion
  std::map<std::string, MockAnswer> instance_answers;  // id -> answer, checked before the dictionary
  double error_rate = 0.0;
  std::uint64_t seed = 0;
  std::set<std::string> block_ids;
  /// Ids the error fraction is taken over. When set, exactly
  /// round(error_rate * |population|) of them are corrupted; otherwise each id
  /// is corrupted independently with probability error_rate.
  std::vector<std::string> population;
  double confidence = 0.98;

  nlohmann::json to_json() const;
  static MockBehavior from_json(const nlohmann::json& j);
};

inline constexpr std::string_view kCorruptExpansion = "unrelated placeholder sense";

/// FNV-1a 64 of "<seed>:<id>" passed through the splitmix64 finalizer.
std::uint64_t corruption_key(std::uint64_t seed, std::string_view id);

/// The ids whose answers are corrupted, sorted. Requires `population`.
std::vector<std::string> corrupted_ids(const MockBehavior& behavior);
bool is_corrupted(const MockBehavior& behavior, std::string_view id);

/// Deterministic stand-in for a model. Reads the Task/Text/Acronym slots of the
/// serialized prompt: detection and annotation prompts get the rule-based
/// acronym list (annotation also lists equations and alphanumerics); single
/// pass and expansion prompts get a dictionary answer; ids in block_ids get an
/// empty body.
CompletionRecord mock_complete(const CompletionRequest& request, const MockBehavior& behavior);

class MockBackend final : public Backend {
 public:
  explicit MockBackend(MockBehavior behavior, std::string name = "mock", std::size_t parallelism = 4);

  CompletionRecord complete(const CompletionRequest& request) override;
  HealthReport probe() override;
  std::string id() const override { return name_; }
  std::size_t parallelism() const override { return parallelism_; }
  const MockBehavior& behavior() const { return behavior_; }

 private:
  MockBehavior behavior_;
  std::set<std::string> corrupted_;
  std::string name_;
  std::size_t parallelism_;
};

}  // namespace acrodis::inference

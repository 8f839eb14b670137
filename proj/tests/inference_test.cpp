#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "acrodis/error.h"
#include "acrodis/inference.h"
#include "acrodis/prompting.h"
#include "support/stub_server.h"

using namespace acrodis;
using namespace acrodis::inference;
using acrodis::testing::chat_reply;
using acrodis::testing::StubRequest;
using acrodis::testing::StubResponse;
using acrodis::testing::StubServer;
using json = nlohmann::json;

namespace {

BackendConfig local(const StubServer& s) {
  BackendConfig c;
  c.endpoint = s.url();
  c.model_name = "gemma2:2b";
  c.timeout = std::chrono::milliseconds(2000);
  c.backoff_base = std::chrono::milliseconds(1);
  return c;
}

std::vector<std::string> make_ids(const char* prefix, int n) {
  std::vector<std::string> out;
  char buf[16];
  for (int i = 1; i <= n; ++i) {
    std::snprintf(buf, sizeof buf, "%s%03d", prefix, i);
    out.push_back(buf);
  }
  return out;
}

}  // namespace

TEST(Privacy, PrivateHosts) {
  for (const char* h : {"localhost", "127.0.0.1", "127.5.5.5", "10.1.2.3", "172.16.0.1", "172.31.255.255",
                        "192.168.1.10", "169.254.0.1", "100.64.0.1", "::1", "[::1]", "fd00::1", "fe80::1",
                        "::ffff:10.0.0.1", "LOCALHOST"})
    EXPECT_TRUE(is_private_host(h)) << h;
  for (const char* h : {"8.8.8.8", "172.32.0.1", "172.15.0.1", "192.169.0.1", "100.128.0.1", "2001:db8::1",
                        "::ffff:8.8.8.8", "example.com", "localhost.example.com", "api.openai.com", "11.0.0.1"})
    EXPECT_FALSE(is_private_host(h)) << h;
}

TEST(Privacy, PublicEndpointRefusedWithoutForce) {
  BackendConfig c;
  c.endpoint = "http://8.8.8.8:8080";
  EXPECT_THROW(check_privacy(c), PrivacyError);
  EXPECT_THROW(HttpBackend{c}, PrivacyError);
  c.force_remote = true;
  EXPECT_NO_THROW(check_privacy(c));
}

TEST(Privacy, RefusalOpensNoConnection) {
  StubServer server([](const StubRequest&) { return StubResponse{200, chat_reply("{}")}; });
  BackendConfig c = local(server);
  c.endpoint = "http://example.org:" + std::to_string(server.port());
  EXPECT_THROW(complete({"{}", "x"}, c), PrivacyError);
  EXPECT_THROW(probe(c), PrivacyError);
  EXPECT_EQ(server.connections(), 0);
}

TEST(Config, ValidationAndJson) {
  BackendConfig c;
  EXPECT_NO_THROW(c.validate());
  c.temperature = -1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.parallelism = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.endpoint = "ftp://127.0.0.1";
  EXPECT_THROW(c.validate(), ConfigError);

  BackendConfig d;
  d.model_name = "medgemma";
  d.retries = 4;
  const BackendConfig back = BackendConfig::from_json(d.to_json());
  EXPECT_EQ(back.model_name, "medgemma");
  EXPECT_EQ(back.retries, 4);
  const BackendConfig partial = BackendConfig::from_json(json{{"model", "x"}});
  EXPECT_EQ(partial.model_name, "x");
  EXPECT_EQ(partial.endpoint, BackendConfig{}.endpoint);
  EXPECT_THROW(BackendConfig::from_json(json{{"retries", "many"}}), ConfigError);
}

TEST(Endpoint, Parsing) {
  const Endpoint e = parse_endpoint("http://localhost:11434/ollama/");
  EXPECT_EQ(e.scheme, "http");
  EXPECT_EQ(e.host, "localhost");
  EXPECT_EQ(e.port, 11434);
  EXPECT_EQ(e.base_path, "/ollama");
  EXPECT_EQ(parse_endpoint("http://10.0.0.2").port, 80);
  EXPECT_EQ(parse_endpoint("http://[::1]:9000").host, "::1");
  EXPECT_THROW(parse_endpoint("localhost:8080"), ConfigError);
  EXPECT_THROW(parse_endpoint("http://"), ConfigError);
  EXPECT_THROW(parse_endpoint("http://host:99999"), ConfigError);
  BackendConfig c;
  c.endpoint = "https://127.0.0.1:8443";
  EXPECT_THROW(HttpBackend{c}, ConfigError);
}

TEST(Http, RequestShapeAndReply) {
  StubServer server([](const StubRequest&) {
    return StubResponse{200, chat_reply(R"({"acronym":"PT","expansion":"prothrombin time"})")};
  });
  BackendConfig c = local(server);
  c.temperature = 0.2;
  c.max_tokens = 128;
  const std::string prompt = prompting::render_single_pass("PT was prolonged.").serialize();
  const CompletionRecord r = complete({prompt, "m05"}, c);
  EXPECT_EQ(r.response, R"({"acronym":"PT","expansion":"prothrombin time"})");
  EXPECT_EQ(r.attempt, 1);
  EXPECT_EQ(r.prompt, prompt);
  ASSERT_EQ(server.requests().size(), 1u);
  const StubRequest req = server.requests()[0];
  EXPECT_EQ(req.method, "POST");
  EXPECT_EQ(req.path, "/v1/chat/completions");
  const json body = json::parse(req.body);
  EXPECT_EQ(body["model"], "gemma2:2b");
  EXPECT_EQ(body["messages"].size(), 1u);
  EXPECT_EQ(body["messages"][0]["role"], "user");
  EXPECT_EQ(body["messages"][0]["content"], prompt);
  EXPECT_DOUBLE_EQ(body["temperature"].get<double>(), 0.2);
  EXPECT_EQ(body["max_tokens"], 128);
  EXPECT_EQ(body.dump().find("m05"), std::string::npos);
}

TEST(Http, RetriesAfterDroppedConnection) {
  StubServer server([](const StubRequest&) { return StubResponse{200, chat_reply("ok")}; }, 1);
  const CompletionRecord r = complete({"{}", "x"}, local(server));
  EXPECT_EQ(r.attempt, 2);
  EXPECT_EQ(r.response, "ok");
  EXPECT_EQ(server.connections(), 2);
}

TEST(Http, RetriesServerErrorsThenGivesUp) {
  StubServer server([](const StubRequest&) { return StubResponse{503, "busy"}; });
  BackendConfig c = local(server);
  c.retries = 2;
  EXPECT_THROW(complete({"{}", "x"}, c), BackendError);
  EXPECT_EQ(server.connections(), 3);
}

TEST(Http, ClientErrorIsNotRetried) {
  StubServer server([](const StubRequest&) { return StubResponse{400, "bad"}; });
  EXPECT_THROW(complete({"{}", "x"}, local(server)), BackendError);
  EXPECT_EQ(server.connections(), 1);
}

TEST(Http, NullContentIsEmptyReply) {
  StubServer server([](const StubRequest&) {
    return StubResponse{200, R"({"choices":[{"message":{"role":"assistant","content":null}}]})"};
  });
  EXPECT_EQ(complete({"{}", "x"}, local(server)).response, "");
  EXPECT_THROW(extract_chat_content("{}"), BackendError);
  EXPECT_THROW(extract_chat_content("not json"), BackendError);
}

TEST(Probe, HealthyWhenModelListed) {
  StubServer server([](const StubRequest& r) {
    EXPECT_EQ(r.method, "GET");
    EXPECT_EQ(r.path, "/v1/models");
    return StubResponse{200, R"({"object":"list","data":[{"id":"gemma2:2b"},{"id":"medgemma"}]})"};
  });
  const HealthReport h = probe(local(server));
  EXPECT_TRUE(h.healthy());
  EXPECT_EQ(h.models, (std::vector<std::string>{"gemma2:2b", "medgemma"}));
}

TEST(Probe, ModelUnavailable) {
  StubServer server([](const StubRequest&) { return StubResponse{200, R"({"data":[{"id":"other"}]})"}; });
  const HealthReport h = probe(local(server));
  EXPECT_TRUE(h.reachable);
  EXPECT_EQ(h.model_available, false);
  EXPECT_FALSE(h.healthy());
}

TEST(Probe, ClosedPort) {
  int port;
  {
    StubServer server([](const StubRequest&) { return StubResponse{}; });
    port = server.port();
  }
  BackendConfig c;
  c.endpoint = "http://127.0.0.1:" + std::to_string(port);
  c.timeout = std::chrono::milliseconds(500);
  const HealthReport h = probe(c);
  EXPECT_FALSE(h.reachable);
  EXPECT_FALSE(h.healthy());
}

// Frozen from tests/oracles/mock_corruption.py.
TEST(MockCorruption, MatchesOracleSets) {
  MockBehavior b;
  b.population = make_ids("s", 50);
  b.error_rate = 0.2;
  b.seed = 42;
  EXPECT_EQ(corrupted_ids(b), (std::vector<std::string>{"s001", "s006", "s011", "s025", "s030", "s031", "s033",
                                                         "s037", "s039", "s040"}));
  b.population = make_ids("r", 100);
  b.error_rate = 0.25;
  b.seed = 7;
  EXPECT_EQ(corrupted_ids(b),
            (std::vector<std::string>{"r001", "r006", "r010", "r011", "r012", "r016", "r022", "r028", "r035",
                                      "r041", "r042", "r043", "r045", "r048", "r050", "r051", "r054", "r055",
                                      "r062", "r063", "r068", "r084", "r086", "r095", "r096"}));
  b.population = {"m01", "m02", "m03"};
  b.error_rate = 1.0 / 3.0;
  b.seed = 11;
  EXPECT_EQ(corrupted_ids(b), (std::vector<std::string>{"m02"}));
}

TEST(Mock, AnswersByPromptKind) {
  MockBehavior b;
  b.dictionary = {{"PT", "prothrombin time"}, {"ED", "emergency department"}};
  MockBackend mock(b);
  const auto sp = prompting::parse_output(
      mock.complete({prompting::render_single_pass("PT was prolonged.").serialize(), "a"}).response,
      prompting::Expected::expansion);
  EXPECT_EQ(sp.expansion()->acronym, "PT");
  EXPECT_EQ(sp.expansion()->expansion, "prothrombin time");
  EXPECT_DOUBLE_EQ(*sp.expansion()->confidence, 0.98);

  const auto det = prompting::parse_output(
      mock.complete({prompting::render_cascaded_detection("ED staff vs SP .").serialize(), "b"}).response,
      prompting::Expected::detection);
  EXPECT_EQ(det.detection()->acronyms, (std::vector<std::string>{"ED", "SP"}));

  const auto unknown = prompting::parse_output(
      mock.complete({prompting::render_cascaded_expansion("ED staff vs SP .", "SP").serialize(), "b"}).response,
      prompting::Expected::expansion);
  EXPECT_EQ(unknown.expansion()->expansion, "unknown");

  const auto ann = json::parse(
      mock.complete({prompting::render_annotation("E=mc2 was cited while discussing MRI physics.").serialize(), "c"})
          .response);
  EXPECT_EQ(ann["items"], json::array({"MRI", "E=mc2"}));
}

TEST(Mock, BlockedAndCorruptedReplies) {
  MockBehavior b;
  b.dictionary = {{"MS", "multiple sclerosis"}};
  b.block_ids = {"blocked"};
  b.population = {"blocked", "x", "y", "z"};
  b.error_rate = 1.0;
  MockBackend mock(b);
  EXPECT_EQ(mock.complete({prompting::render_single_pass("MS flare").serialize(), "blocked"}).response, "");
  const auto r = prompting::parse_output(
      mock.complete({prompting::render_single_pass("MS flare").serialize(), "x"}).response,
      prompting::Expected::expansion);
  EXPECT_EQ(r.expansion()->acronym, "ms?");
  EXPECT_EQ(r.expansion()->expansion, kCorruptExpansion);
  EXPECT_DOUBLE_EQ(*r.expansion()->confidence, 0.98);
  EXPECT_TRUE(mock.probe().healthy());
}

TEST(Mock, DeterministicAndConfigChecked) {
  MockBehavior b;
  b.error_rate = 0.3;
  b.seed = 3;
  const CompletionRequest req{prompting::render_single_pass("MS flare").serialize(), "id9"};
  EXPECT_EQ(mock_complete(req, b).response, mock_complete(req, b).response);
  b.error_rate = 1.5;
  EXPECT_THROW(MockBackend{b}, ConfigError);
  MockBehavior c;
  c.dictionary = {{"A", "b"}};
  c.block_ids = {"q"};
  const MockBehavior back = MockBehavior::from_json(c.to_json());
  EXPECT_EQ(back.dictionary, c.dictionary);
  EXPECT_EQ(back.block_ids, c.block_ids);
}

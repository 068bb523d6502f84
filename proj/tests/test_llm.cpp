#include <httplib.h>
#include <spdlog/sinks/ostream_sink.h>

#include <atomic>
#include <json.hpp>
#include <sstream>
#include <thread>

#include "ragsvc/llm.hpp"
#include "ragsvc/log.hpp"
#include "test_util.hpp"

using namespace ragsvc;

namespace {

constexpr const char* kKeyVar = "RAGSVC_TEST_CHAT_KEY";
constexpr const char* kKeyValue = "sk-chat-secret-9876543210";

class FakeChatProvider {
 public:
  FakeChatProvider() {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      ++requests_;
      auth_ = req.get_header_value("Authorization");
      last_body_ = req.body;
      if (delay_ms_ > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms_));
      if (fail_remaining_ > 0) {
        --fail_remaining_;
        res.status = fail_status_;
        res.set_content(R"({"error":{"message":"overloaded"}})", "application/json");
        return;
      }
      res.set_content(body_, "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeChatProvider() {
    server_.stop();
    thread_.join();
  }

  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/"; }

  std::atomic<int> requests_{0};
  std::atomic<int> fail_remaining_{0};
  int fail_status_ = 503;
  int delay_ms_ = 0;
  std::string body_ = testutil::read_file(testutil::fixture("chat_response.json"));
  std::string auth_;
  std::string last_body_;

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

class RemoteChatTest : public ::testing::Test {
 protected:
  void SetUp() override { setenv(kKeyVar, kKeyValue, 1); }
  void TearDown() override { unsetenv(kKeyVar); }

  RemoteChatClient client() {
    return RemoteChatClient(provider.endpoint(), kKeyVar, {3, std::chrono::milliseconds(1)});
  }

  FakeChatProvider provider;
  const std::vector<ChatMessage> messages{{"system", "be brief"}, {"user", "dress code?"}};
};

}  // namespace

TEST(MockChat, EchoFallback) {
  MockChatClient mock;
  EXPECT_EQ(mock.chat({{"user", "hello"}}, {}), "ECHO:hello");
  EXPECT_EQ(mock.chat({{"user", "first"}, {"assistant", "a"}, {"user", "second"}}, {}),
            "ECHO:second");
}

TEST(MockChat, ScriptedRulesFirstMatchWins) {
  MockChatClient mock({{"dress code", "canned answer A"}, {"code", "canned answer B"}},
                      MockFallback::Fixed, "no idea");
  EXPECT_EQ(mock.chat({{"user", "what is the dress code?"}}, {}), "canned answer A");
  EXPECT_EQ(mock.chat({{"user", "zip code"}}, {}), "canned answer B");
  EXPECT_EQ(mock.chat({{"user", "weather"}}, {}), "no idea");
}

TEST(MockChat, DeterministicAcrossCalls) {
  MockChatClient mock({{"a", "A"}, {"b", "B"}});
  const std::vector<std::string> inputs = {"a", "b", "c", "ab", "ba"};
  std::vector<std::string> first;
  for (const auto& in : inputs) first.push_back(mock.chat({{"user", in}}, {}));
  for (int i = 0; i < 100; ++i) {
    for (std::size_t j = 0; j < inputs.size(); ++j) {
      ASSERT_EQ(mock.chat({{"user", inputs[j]}}, {}), first[j]);
    }
  }
}

TEST(MockChat, RejectsBadMessages) {
  MockChatClient mock;
  EXPECT_RAGSVC_ERROR(mock.chat({}, {}), ErrorCode::ValidationError);
  EXPECT_RAGSVC_ERROR(mock.chat({{"assistant", "x"}}, {}), ErrorCode::ValidationError);
  EXPECT_RAGSVC_ERROR(mock.chat({{"user", "  "}}, {}), ErrorCode::ValidationError);
  EXPECT_RAGSVC_ERROR(mock.chat({{"robot", "x"}, {"user", "x"}}, {}), ErrorCode::ValidationError);
  ChatParams hot;
  hot.temperature = -0.1;
  EXPECT_RAGSVC_ERROR(mock.chat({{"user", "x"}}, hot), ErrorCode::ValidationError);
}

TEST(ChatParams, Defaults) {
  ChatParams p;
  EXPECT_EQ(p.model, "gpt-3.5-turbo");
  EXPECT_EQ(p.temperature, 0.0);
  EXPECT_FALSE(p.max_tokens.has_value());
  EXPECT_EQ(p.timeout, std::chrono::seconds(60));
}

TEST_F(RemoteChatTest, ParsesRecordedResponse) {
  const auto expected = nlohmann::json::parse(provider.body_)["choices"][0]["message"]["content"]
                            .get<std::string>();
  EXPECT_EQ(client().chat(messages, {}), expected);
  EXPECT_EQ(expected.rfind("Men are expected to wear business casual attire", 0), 0u);
}

TEST_F(RemoteChatTest, RequestShape) {
  ChatParams p;
  p.max_tokens = 128;
  client().chat(messages, p);
  const auto body = nlohmann::json::parse(provider.last_body_);
  EXPECT_EQ(body["model"], "gpt-3.5-turbo");
  EXPECT_EQ(body["temperature"], 0.0);
  EXPECT_EQ(body["max_tokens"], 128);
  ASSERT_EQ(body["messages"].size(), 2u);
  EXPECT_EQ(body["messages"][0]["role"], "system");
  EXPECT_EQ(body["messages"][1]["content"], "dress code?");
  EXPECT_EQ(provider.auth_, std::string("Bearer ") + kKeyValue);
  EXPECT_EQ(provider.last_body_.find(kKeyValue), std::string::npos);
}

TEST_F(RemoteChatTest, RetriesThenSucceeds) {
  provider.fail_remaining_ = 2;
  EXPECT_FALSE(client().chat(messages, {}).empty());
  EXPECT_EQ(provider.requests_.load(), 3);
}

TEST_F(RemoteChatTest, ProviderErrorCarriesStatusAndExcerpt) {
  provider.fail_remaining_ = 5;
  try {
    client().chat(messages, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ProviderError);
    EXPECT_EQ(e.status(), 503);
    EXPECT_NE(std::string(e.what()).find("overloaded"), std::string::npos);
  }
  EXPECT_EQ(provider.requests_.load(), 3);
}

TEST_F(RemoteChatTest, ClientErrorIsNotRetried) {
  provider.fail_remaining_ = 5;
  provider.fail_status_ = 400;
  EXPECT_RAGSVC_ERROR(client().chat(messages, {}), ErrorCode::ProviderError);
  EXPECT_EQ(provider.requests_.load(), 1);
}

TEST_F(RemoteChatTest, MalformedResponse) {
  provider.body_ = R"({"choices": []})";
  EXPECT_RAGSVC_ERROR(client().chat(messages, {}), ErrorCode::MalformedResponse);
  provider.body_ = "<html>";
  EXPECT_RAGSVC_ERROR(client().chat(messages, {}), ErrorCode::MalformedResponse);
}

TEST_F(RemoteChatTest, Timeout) {
  provider.delay_ms_ = 600;
  ChatParams p;
  p.timeout = std::chrono::milliseconds(100);
  RemoteChatClient c(provider.endpoint(), kKeyVar, {1, std::chrono::milliseconds(1)});
  EXPECT_RAGSVC_ERROR(c.chat(messages, p), ErrorCode::Timeout);
}

TEST_F(RemoteChatTest, KeyNeverLoggedOrInErrors) {
  std::ostringstream captured;
  auto previous = log::logger();
  auto capture = std::make_shared<spdlog::logger>(
      "capture", std::make_shared<spdlog::sinks::ostream_sink_mt>(captured));
  capture->set_level(spdlog::level::trace);
  log::set_logger(capture);

  std::string errors;
  client().chat(messages, {});
  provider.fail_remaining_ = 5;
  try {
    client().chat(messages, {});
  } catch (const Error& e) {
    errors += e.what();
  }
  provider.fail_remaining_ = 0;
  provider.body_ = "{}";
  try {
    client().chat(messages, {});
  } catch (const Error& e) {
    errors += e.what();
  }
  log::set_logger(previous);

  EXPECT_FALSE(captured.str().empty());
  EXPECT_EQ(captured.str().find(kKeyValue), std::string::npos);
  EXPECT_EQ(errors.find(kKeyValue), std::string::npos);
}

TEST(RemoteChat, MissingSecretNamesVariable) {
  unsetenv("RAGSVC_UNSET_CHAT_KEY");
  try {
    RemoteChatClient c("http://127.0.0.1:9/v1", "RAGSVC_UNSET_CHAT_KEY");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingSecret);
    EXPECT_NE(std::string(e.what()).find("RAGSVC_UNSET_CHAT_KEY"), std::string::npos);
  }
}

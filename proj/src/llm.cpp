#include "ragsvc/llm.hpp"

#include <cmath>
#include <cstdlib>
#include <json.hpp>

#include "ragsvc/error.hpp"
#include "ragsvc/log.hpp"
#include "ragsvc/text.hpp"

namespace ragsvc {

void ChatParams::validate() const {
  if (model.empty()) throw Error(ErrorCode::ValidationError, "chat.model is required");
  if (!std::isfinite(temperature) || temperature < 0.0) {
    throw Error(ErrorCode::ValidationError, "chat.temperature must be >= 0");
  }
  if (max_tokens && *max_tokens <= 0) {
    throw Error(ErrorCode::ValidationError, "chat.max_tokens must be positive");
  }
  if (timeout.count() <= 0) throw Error(ErrorCode::ValidationError, "chat.timeout must be positive");
}

void validate_messages(const std::vector<ChatMessage>& messages) {
  if (messages.empty()) throw Error(ErrorCode::ValidationError, "no chat messages");
  for (const auto& m : messages) {
    if (m.role != "system" && m.role != "user" && m.role != "assistant") {
      throw Error(ErrorCode::ValidationError, "unknown chat role '" + m.role + "'");
    }
    if (m.role != "assistant" && text::trim(m.content).empty()) {
      throw Error(ErrorCode::ValidationError, m.role + " message is blank");
    }
  }
  if (messages.back().role != "user") {
    throw Error(ErrorCode::ValidationError, "last chat message must be a user turn");
  }
}

RemoteChatClient::RemoteChatClient(std::string endpoint, const std::string& api_key_ref,
                                   http::RetryPolicy retry)
    : endpoint_(std::move(endpoint)), retry_(retry) {
  while (!endpoint_.empty() && endpoint_.back() == '/') endpoint_.pop_back();
  if (endpoint_.empty()) throw Error(ErrorCode::ValidationError, "chat.endpoint is required");
  if (api_key_ref.empty()) throw Error(ErrorCode::ValidationError, "chat.api_key_env is required");
  const char* key = std::getenv(api_key_ref.c_str());
  if (key == nullptr || *key == '\0') {
    throw Error(ErrorCode::MissingSecret, "environment variable " + api_key_ref + " is not set");
  }
  api_key_ = key;
}

std::string RemoteChatClient::chat(const std::vector<ChatMessage>& messages,
                                   const ChatParams& params) const {
  validate_messages(messages);
  params.validate();
  nlohmann::json body = {{"model", params.model}, {"temperature", params.temperature}};
  auto& msgs = body["messages"] = nlohmann::json::array();
  for (const auto& m : messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
  if (params.max_tokens) body["max_tokens"] = *params.max_tokens;

  http::Request req;
  req.method = "POST";
  req.url = endpoint_ + "/chat/completions";
  req.body = body.dump();
  req.content_type = "application/json";
  req.timeout = params.timeout;
  req.headers = {{"Authorization", "Bearer " + api_key_}};

  http::Response res;
  try {
    res = http::send_with_retry(req, retry_);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Timeout) throw;
    throw Error(ErrorCode::ProviderError, std::string("chat request failed: ") + e.what(),
                e.status());
  }
  if (res.status < 200 || res.status >= 300) {
    throw Error(ErrorCode::ProviderError,
                "chat provider returned HTTP " + std::to_string(res.status) + ": " +
                    http::excerpt(res.body),
                res.status);
  }
  try {
    const auto parsed = nlohmann::json::parse(res.body);
    const auto& content = parsed.at("choices").at(0).at("message").at("content");
    log::logger()->debug("chat completion from model {}", params.model);
    return content.get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedResponse,
                std::string("malformed chat response: ") + e.what() + ": " +
                    http::excerpt(res.body),
                res.status);
  }
}

MockChatClient::MockChatClient(std::vector<MockRule> rules, MockFallback fallback,
                               std::string fixed_text)
    : rules_(std::move(rules)), fallback_(fallback), fixed_text_(std::move(fixed_text)) {}

std::string MockChatClient::chat(const std::vector<ChatMessage>& messages,
                                 const ChatParams& params) const {
  validate_messages(messages);
  params.validate();
  const std::string& prompt = messages.back().content;
  for (const auto& rule : rules_) {
    if (prompt.find(rule.substring) != std::string::npos) return rule.response;
  }
  if (fallback_ == MockFallback::Echo) return "ECHO:" + prompt;
  return fixed_text_;
}

}  // namespace ragsvc

#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <vector>

#include "ragsvc/http.hpp"

namespace ragsvc {

struct ChatMessage {
  std::string role;  // "system", "user" or "assistant"
  std::string content;
};

struct ChatParams {
  std::string model = "gpt-3.5-turbo";
  double temperature = 0.0;
  std::optional<int> max_tokens;
  std::chrono::milliseconds timeout{60'000};

  /// Throws Error{ValidationError}.
  void validate() const;
};

/// Throws Error{ValidationError} unless the list is non-empty, every role is
/// known, system/user contents are non-blank and the last message is a user
/// turn.
void validate_messages(const std::vector<ChatMessage>& messages);

class ChatClient {
 public:
  virtual ~ChatClient() = default;

  /// Assistant text of the first choice.
  virtual std::string chat(const std::vector<ChatMessage>& messages,
                           const ChatParams& params) const = 0;
};

/// Provider-compatible chat completions client: POST {endpoint}/chat/completions
/// with {"model", "messages", "temperature"[, "max_tokens"]}; reads
/// choices[0].message.content. Errors: ProviderError (non-2xx or transport,
/// with status and a body excerpt), Timeout, MalformedResponse.
class RemoteChatClient final : public ChatClient {
 public:
  /// Reads the key from the environment variable `api_key_ref`; throws
  /// Error{MissingSecret} naming the variable when it is unset.
  RemoteChatClient(std::string endpoint, const std::string& api_key_ref,
                   http::RetryPolicy retry = {});

  std::string chat(const std::vector<ChatMessage>& messages,
                   const ChatParams& params) const override;

 private:
  std::string endpoint_;
  std::string api_key_;
  http::RetryPolicy retry_;
};

struct MockRule {
  std::string substring;
  std::string response;
};

enum class MockFallback { Echo, Fixed };

/// Scripted client. The first rule whose substring occurs in the last user
/// message wins; otherwise Echo returns "ECHO:" + that message and Fixed
/// returns `fixed_text`.
class MockChatClient final : public ChatClient {
 public:
  explicit MockChatClient(std::vector<MockRule> rules = {},
                          MockFallback fallback = MockFallback::Echo, std::string fixed_text = {});

  std::string chat(const std::vector<ChatMessage>& messages,
                   const ChatParams& params) const override;

 private:
  std::vector<MockRule> rules_;
  MockFallback fallback_;
  std::string fixed_text_;
};

}  // namespace ragsvc

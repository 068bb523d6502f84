#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ragsvc/chunker.hpp"
#include "ragsvc/embed.hpp"
#include "ragsvc/hnsw.hpp"
#include "ragsvc/llm.hpp"
#include "ragsvc/prompt.hpp"
#include "ragsvc/retrieve.hpp"

namespace ragsvc {

struct CollectionConfig {
  std::string name;
  std::filesystem::path store_path;
  SplitConfig splitter;
  EmbedderConfig embedder;
  HnswParams hnsw;
  RetrievalConfig retrieval;
  ContextBudget budget;
  PromptTemplate prompt = PromptTemplate::default_qa();
};

enum class ChatBackend { Remote, Mock };

struct ChatConfig {
  ChatBackend backend = ChatBackend::Remote;
  std::string endpoint = "https://api.openai.com/v1";
  std::string api_key_env = "OPENAI_API_KEY";
  ChatParams params;
  http::RetryPolicy retry;
  std::size_t history_turns = 6;
  std::vector<MockRule> mock_rules;
  MockFallback mock_fallback = MockFallback::Echo;
  std::string mock_fixed_text;
};

struct ServiceConfig {
  std::string bind = "127.0.0.1";
  int port = 8080;
  std::vector<std::string> fetch_allowlist;
  bool network_enabled = true;
  std::string cors_origin = "*";
};

/// Holds environment variable names, never their values.
struct AppConfig {
  std::map<std::string, CollectionConfig> collections;
  ChatConfig chat;
  ServiceConfig service;
};

/// Parses KEY=VALUE lines ('#' starts a comment line, keys and values are
/// trimmed) and sets each variable that is not already set. Returns the
/// number of variables set. Throws FileNotFound, ParseError (with the line).
std::size_t load_env_file(const std::filesystem::path& path);

/// Parses a JSON config document. Relative store paths resolve against
/// `base_dir`. Throws ParseError (with line), ValidationError (naming the
/// field). Does not touch the environment.
AppConfig parse_config(const std::string& json_text, const std::filesystem::path& base_dir);

/// load_env_file (when given), parse_config, then require every referenced
/// secret variable to be set (MissingSecret naming it).
AppConfig load_config(const std::filesystem::path& config_path,
                      const std::optional<std::filesystem::path>& env_file = std::nullopt);

/// Names of the environment variables the config needs.
std::vector<std::string> required_secrets(const AppConfig& cfg);

/// Pretty-printed JSON in the same shape parse_config reads.
std::string serialize_config(const AppConfig& cfg);

std::unique_ptr<ChatClient> make_chat_client(const ChatConfig& cfg);

}  // namespace ragsvc

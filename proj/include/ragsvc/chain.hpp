#pragma once

#include <string>
#include <vector>

#include "ragsvc/llm.hpp"
#include "ragsvc/prompt.hpp"
#include "ragsvc/retrieve.hpp"

namespace ragsvc {

struct SourceRef {
  std::string source;
  std::size_t seq = 0;
  double score = 0.0;
  std::string chunk_id;
  std::string doc_id;
};

struct Answer {
  std::string text;
  std::vector<SourceRef> sources;  // the chunks placed in the prompt, in rank order
  std::size_t prompt_tokens_est = 0;
  RetrievalMode retrieval_mode = RetrievalMode::Exact;
  std::vector<std::string> warnings;
  std::string prompt;  // the rendered prompt sent to the model
};

/// Collaborators for one question. References must outlive the call.
struct Pipeline {
  const VectorStore& store;
  const Embedder& embedder;
  const ChatClient& llm;
  ChatParams chat_params{};
};

inline constexpr std::size_t kDefaultHistoryTurns = 6;

/// retrieve (or multi-query retrieve) -> assemble_context -> render -> chat.
/// Errors carry the failing stage: "retrieve", "assemble", "render" or "chat".
Answer answer_question(const Pipeline& p, const std::string& question,
                       const RetrievalConfig& cfg, const ContextBudget& budget,
                       const PromptTemplate& tmpl);

/// As answer_question, with the last `max_turns` history messages rendered
/// into the prompt. History is charged to the budget before any context;
/// BudgetExhausted (stage "assemble") when it leaves no room.
Answer chat_session(const Pipeline& p, const std::vector<ChatMessage>& history,
                    const std::string& question, const RetrievalConfig& cfg,
                    const ContextBudget& budget, const PromptTemplate& tmpl,
                    std::size_t max_turns = kDefaultHistoryTurns);

/// "User: ...\nAssistant: ...\n" lines for the most recent `max_turns` messages.
std::string format_history(const std::vector<ChatMessage>& history, std::size_t max_turns);

}  // namespace ragsvc

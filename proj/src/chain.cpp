#include "ragsvc/chain.hpp"

#include "ragsvc/error.hpp"
#include "ragsvc/log.hpp"

namespace ragsvc {

namespace {

template <typename F>
auto staged(const char* stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (Error& e) {
    if (e.stage().empty()) e.with_stage(stage);
    throw;
  }
}

std::string role_label(const std::string& role) {
  if (role == "assistant") return "Assistant";
  if (role == "system") return "System";
  return "User";
}

}  // namespace

std::string format_history(const std::vector<ChatMessage>& history, std::size_t max_turns) {
  const std::size_t first = history.size() > max_turns ? history.size() - max_turns : 0;
  std::string out;
  for (std::size_t i = first; i < history.size(); ++i) {
    out += role_label(history[i].role) + ": " + history[i].content + "\n";
  }
  return out;
}

Answer chat_session(const Pipeline& p, const std::vector<ChatMessage>& history,
                    const std::string& question, const RetrievalConfig& cfg,
                    const ContextBudget& budget, const PromptTemplate& tmpl,
                    std::size_t max_turns) {
  Answer answer;
  answer.retrieval_mode = cfg.mode;
  const std::string history_text = format_history(history, max_turns);

  std::vector<ScoredChunk> candidates = staged("retrieve", [&] {
    if (!cfg.multi_query) return retrieve(question, p.store, p.embedder, cfg);
    auto mq = multi_query_retrieve(question, p.store, p.embedder, cfg, p.llm, p.chat_params);
    answer.warnings = std::move(mq.warnings);
    return std::move(mq.results);
  });

  const std::size_t overhead =
      staged("render", [&] { return estimate_tokens(render(tmpl, question, "", history_text)); });

  const AssembledContext ctx = staged("assemble", [&] {
    budget.validate();
    if (overhead + budget.reserved_answer_tokens >= budget.max_prompt_tokens) {
      throw Error(ErrorCode::BudgetExhausted,
                  "prompt template, question and history need " + std::to_string(overhead) +
                      " tokens, leaving no room for context within " +
                      std::to_string(budget.max_prompt_tokens) + " (" +
                      std::to_string(budget.reserved_answer_tokens) + " reserved)");
    }
    return assemble_context(candidates, budget, overhead);
  });
  if (ctx.included.size() < candidates.size()) {
    answer.warnings.push_back(std::to_string(candidates.size() - ctx.included.size()) +
                              " retrieved chunk(s) left out by the context budget");
  }

  answer.prompt = staged("render", [&] { return render(tmpl, question, ctx.text, history_text); });
  answer.prompt_tokens_est = estimate_tokens(answer.prompt);

  answer.text = staged("chat", [&] {
    return p.llm.chat({{"user", answer.prompt}}, p.chat_params);
  });

  for (const auto& sc : ctx.included) {
    answer.sources.push_back(
        {source_of(sc.chunk), sc.chunk.seq, sc.score, sc.chunk.id, sc.chunk.doc_id});
  }
  log::logger()->info("answered with {} source(s), ~{} prompt tokens", answer.sources.size(),
                      answer.prompt_tokens_est);
  return answer;
}

Answer answer_question(const Pipeline& p, const std::string& question,
                       const RetrievalConfig& cfg, const ContextBudget& budget,
                       const PromptTemplate& tmpl) {
  return chat_session(p, {}, question, cfg, budget, tmpl);
}

}  // namespace ragsvc

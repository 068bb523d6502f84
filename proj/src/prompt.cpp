#include "ragsvc/prompt.hpp"

#include <cmath>

#include "ragsvc/error.hpp"
#include "ragsvc/text.hpp"

namespace ragsvc {

namespace {

std::size_t count_occurrences(std::string_view hay, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string_view::npos;
       pos = hay.find(needle, pos + needle.size())) {
    ++n;
  }
  return n;
}

}  // namespace

std::size_t estimate_tokens(std::string_view text) {
  const std::size_t chars = text::is_valid_utf8(text) ? text::char_count(text) : text.size();
  return (chars + 3) / 4;
}

void ContextBudget::validate() const {
  if (max_prompt_tokens <= reserved_answer_tokens) {
    throw Error(ErrorCode::ValidationError,
                "budget.max_prompt_tokens must exceed budget.reserved_answer_tokens");
  }
}

std::string source_of(const Chunk& chunk) {
  if (auto it = chunk.metadata.find("source"); it != chunk.metadata.end() && !it->second.empty()) {
    return it->second;
  }
  return chunk.doc_id;
}

std::string context_block(const Chunk& chunk) {
  return "[source: " + source_of(chunk) + " #" + std::to_string(chunk.seq) + "]\n" + chunk.text +
         "\n";
}

AssembledContext assemble_context(const std::vector<ScoredChunk>& chunks,
                                  const ContextBudget& budget, std::size_t fixed_overhead_tokens) {
  budget.validate();
  AssembledContext out;
  std::size_t used = fixed_overhead_tokens + budget.reserved_answer_tokens;
  for (const auto& sc : chunks) {
    std::string block = context_block(sc.chunk);
    const std::size_t cost = estimate_tokens(block);
    if (used + cost > budget.max_prompt_tokens) break;
    used += cost;
    out.tokens += cost;
    out.text += block;
    out.included.push_back(sc);
  }
  if (!chunks.empty() && out.included.empty()) {
    throw Error(ErrorCode::BudgetExhausted,
                "context budget of " + std::to_string(budget.max_prompt_tokens) +
                    " tokens cannot fit the first chunk (" +
                    std::to_string(estimate_tokens(context_block(chunks.front().chunk))) +
                    " tokens after " + std::to_string(fixed_overhead_tokens) +
                    " overhead and " + std::to_string(budget.reserved_answer_tokens) +
                    " reserved)");
  }
  return out;
}

void PromptTemplate::validate() const {
  for (auto slot : {kQuestionSlot, kContextSlot}) {
    const auto n = count_occurrences(body, slot);
    if (n != 1) {
      throw Error(ErrorCode::PlaceholderMissing,
                  "prompt body must contain " + std::string(slot) + " exactly once (found " +
                      std::to_string(n) + ")");
    }
  }
}

PromptTemplate PromptTemplate::default_qa() {
  PromptTemplate t;
  t.system_text =
      "You are a helpful assistant answering questions about the documents below. "
      "Use only the information in the context. If the context does not contain the "
      "answer, say that you don't know. Do not make up facts.";
  t.body = "Context:\n{context}\nQuestion: {question}\nAnswer:";
  return t;
}

std::string render(const PromptTemplate& tmpl, std::string_view question,
                   std::string_view context, std::string_view history) {
  tmpl.validate();
  std::string out;
  auto add_block = [&out](std::string_view block) {
    if (!out.empty()) out += "\n\n";
    out += block;
  };
  if (!tmpl.system_text.empty()) add_block(tmpl.system_text);
  for (const auto& shot : tmpl.shots) {
    add_block("Example:\n" + shot.input + "\n" + shot.output);
  }
  if (!history.empty()) add_block("Conversation so far:\n" + std::string(history));

  const std::string_view body = tmpl.body;
  const auto q = body.find(PromptTemplate::kQuestionSlot);
  const auto c = body.find(PromptTemplate::kContextSlot);
  const bool q_first = q < c;
  const auto first = q_first ? q : c;
  const auto second = q_first ? c : q;
  const auto first_len = q_first ? PromptTemplate::kQuestionSlot.size()
                                 : PromptTemplate::kContextSlot.size();
  const auto second_len = q_first ? PromptTemplate::kContextSlot.size()
                                  : PromptTemplate::kQuestionSlot.size();
  std::string filled;
  filled += body.substr(0, first);
  filled += q_first ? question : context;
  filled += body.substr(first + first_len, second - first - first_len);
  filled += q_first ? context : question;
  filled += body.substr(second + second_len);
  add_block(filled);
  return out;
}

long double finetune_cost_unrounded(std::uint64_t training_tokens, std::uint64_t epochs,
                                    double rate_per_1k_tokens) {
  if (!std::isfinite(rate_per_1k_tokens) || rate_per_1k_tokens < 0.0) {
    throw Error(ErrorCode::ValidationError, "rate must be a non-negative number");
  }
  return static_cast<long double>(training_tokens) * static_cast<long double>(epochs) *
         rate_per_1k_tokens / 1000.0L;
}

double estimate_finetune_cost(std::uint64_t training_tokens, std::uint64_t epochs,
                              double rate_per_1k_tokens) {
  const long double dollars = finetune_cost_unrounded(training_tokens, epochs, rate_per_1k_tokens);
  const long double cents = std::floor(dollars * 100.0L + 0.5L + 1e-9L);
  return static_cast<double>(cents) / 100.0;
}

}  // namespace ragsvc

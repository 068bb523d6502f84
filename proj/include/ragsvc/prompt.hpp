#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "ragsvc/vectorstore.hpp"

namespace ragsvc {

/// ceil(characters / 4), characters counted as Unicode scalar values (invalid
/// UTF-8 falls back to bytes).
std::size_t estimate_tokens(std::string_view text);

struct ContextBudget {
  std::size_t max_prompt_tokens = 3000;
  std::size_t reserved_answer_tokens = 500;

  /// Throws Error{ValidationError}.
  void validate() const;
  std::size_t available() const { return max_prompt_tokens - reserved_answer_tokens; }
};

/// "[source: <source> #<seq>]\n<text>\n". The source is the chunk's "source"
/// metadata, or its doc id when absent.
std::string context_block(const Chunk& chunk);
std::string source_of(const Chunk& chunk);

struct AssembledContext {
  std::string text;
  std::vector<ScoredChunk> included;
  std::size_t tokens = 0;  // sum of per-block estimates
};

/// Greedy rank-order packing: block i is taken while
/// overhead + sum(estimate_tokens(block)) + reserved <= max_prompt_tokens.
/// Stops at the first block that does not fit. Throws BudgetExhausted when
/// there are chunks but the first one does not fit.
AssembledContext assemble_context(const std::vector<ScoredChunk>& chunks,
                                  const ContextBudget& budget, std::size_t fixed_overhead_tokens);

struct ShotExample {
  std::string input;
  std::string output;
};

struct PromptTemplate {
  static constexpr std::string_view kQuestionSlot = "{question}";
  static constexpr std::string_view kContextSlot = "{context}";

  std::string system_text;
  std::vector<ShotExample> shots;
  std::string body;

  /// Throws Error{PlaceholderMissing} unless body holds each slot exactly once.
  void validate() const;

  /// Grounded question answering with no examples.
  static PromptTemplate default_qa();
};

/// system_text, then one "Example:\n<input>\n<output>" block per shot, then
/// the optional conversation block, then body with both slots replaced.
/// Blocks are separated by blank lines. Substituted text is never rescanned.
std::string render(const PromptTemplate& tmpl, std::string_view question,
                   std::string_view context, std::string_view history = {});

/// training_tokens * epochs * rate_per_1k / 1000, unrounded.
long double finetune_cost_unrounded(std::uint64_t training_tokens, std::uint64_t epochs,
                                    double rate_per_1k_tokens);

/// finetune_cost_unrounded rounded half-up to cents.
double estimate_finetune_cost(std::uint64_t training_tokens, std::uint64_t epochs,
                              double rate_per_1k_tokens);

}  // namespace ragsvc

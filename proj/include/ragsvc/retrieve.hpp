#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ragsvc/embed.hpp"
#include "ragsvc/llm.hpp"
#include "ragsvc/vectorstore.hpp"

namespace ragsvc {

enum class RetrievalMode { Exact, Hnsw };

std::string_view to_string(RetrievalMode mode);

struct RetrievalConfig {
  std::size_t k = 4;
  RetrievalMode mode = RetrievalMode::Exact;
  std::optional<bool> use_rerank;  // unset: on for Hnsw
  bool multi_query = false;
  std::size_t n_variants = 3;
  std::size_t ef_search = 64;

  bool rerank_enabled() const { return use_rerank.value_or(mode == RetrievalMode::Hnsw); }

  /// Throws Error{ValidationError}.
  void validate() const;
};

/// Top-k chunks for a question, best first. Throws EmptyStore, EmptyInput for
/// a blank question, and embedder errors unchanged.
std::vector<ScoredChunk> retrieve(const std::string& question, const VectorStore& store,
                                  const Embedder& embedder, const RetrievalConfig& cfg);

/// The fixed instruction sent to the model to obtain n rephrasings.
std::string variant_prompt(const std::string& question, std::size_t n);

/// One variant per non-empty output line with leading "1." / "1)" / "-" / "*"
/// markers removed, at most n.
std::vector<std::string> parse_variants(const std::string& output, std::size_t n);

std::vector<std::string> generate_query_variants(const std::string& question, std::size_t n,
                                                 const ChatClient& llm,
                                                 const ChatParams& params = {});

struct MultiQueryResult {
  std::vector<ScoredChunk> results;  // not truncated to k
  std::vector<std::string> queries;  // original first, then the variants that ran
  std::vector<std::string> warnings;
};

/// Union of retrieve() over the question and its generated variants, keeping
/// each chunk's best score, re-sorted. Failures to generate variants or to
/// retrieve for one variant become warnings; failures for the original
/// question propagate.
MultiQueryResult multi_query_retrieve(const std::string& question, const VectorStore& store,
                                      const Embedder& embedder, const RetrievalConfig& cfg,
                                      const ChatClient& llm, const ChatParams& params = {});

}  // namespace ragsvc

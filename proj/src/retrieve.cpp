#include "ragsvc/retrieve.hpp"

#include <sstream>
#include <unordered_map>

#include "ragsvc/error.hpp"
#include "ragsvc/log.hpp"
#include "ragsvc/text.hpp"

namespace ragsvc {

namespace {

std::string strip_marker(std::string line) {
  std::size_t i = 0;
  while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
  if (i > 0 && i < line.size() && (line[i] == '.' || line[i] == ')')) {
    line.erase(0, i + 1);
  } else if (!line.empty() && (line[0] == '-' || line[0] == '*')) {
    line.erase(0, 1);
  }
  return text::trim(line);
}

}  // namespace

std::string_view to_string(RetrievalMode mode) {
  return mode == RetrievalMode::Exact ? "exact" : "hnsw";
}

void RetrievalConfig::validate() const {
  if (k == 0) throw Error(ErrorCode::ValidationError, "retrieval.k must be >= 1");
  if (ef_search == 0) throw Error(ErrorCode::ValidationError, "retrieval.ef_search must be >= 1");
}

std::vector<ScoredChunk> retrieve(const std::string& question, const VectorStore& store,
                                  const Embedder& embedder, const RetrievalConfig& cfg) {
  cfg.validate();
  if (text::trim(question).empty()) throw Error(ErrorCode::EmptyInput, "question is blank");
  if (store.empty()) throw Error(ErrorCode::EmptyStore, "collection has no chunks");
  const EmbeddingVector query = embedder.embed(question);
  if (cfg.mode == RetrievalMode::Exact) return store.search_exact(query, cfg.k);

  HnswParams params = store.build_params();
  params.ef_search = cfg.ef_search;
  auto hits = store.search_hnsw(query, cfg.k, params);
  if (cfg.rerank_enabled()) hits = store.rerank(std::move(hits), query);
  if (hits.size() > cfg.k) hits.resize(cfg.k);
  return hits;
}

std::string variant_prompt(const std::string& question, std::size_t n) {
  return "Write " + std::to_string(n) +
         " different versions of the user question below, so that a similarity search "
         "over a document collection can find relevant passages the original wording "
         "might miss. Keep the meaning of the question. Put one version per line and "
         "write nothing else.\n\nQuestion: " +
         question;
}

std::vector<std::string> parse_variants(const std::string& output, std::size_t n) {
  std::vector<std::string> out;
  std::istringstream lines(text::normalize_newlines(output));
  for (std::string line; out.size() < n && std::getline(lines, line);) {
    auto v = strip_marker(text::trim(line));
    if (!v.empty()) out.push_back(std::move(v));
  }
  return out;
}

std::vector<std::string> generate_query_variants(const std::string& question, std::size_t n,
                                                 const ChatClient& llm,
                                                 const ChatParams& params) {
  if (n == 0) return {};
  const std::string output = llm.chat({{"user", variant_prompt(question, n)}}, params);
  return parse_variants(output, n);
}

MultiQueryResult multi_query_retrieve(const std::string& question, const VectorStore& store,
                                      const Embedder& embedder, const RetrievalConfig& cfg,
                                      const ChatClient& llm, const ChatParams& params) {
  MultiQueryResult out;
  out.queries.push_back(question);
  std::vector<ScoredChunk> merged = retrieve(question, store, embedder, cfg);

  std::vector<std::string> variants;
  try {
    variants = generate_query_variants(question, cfg.n_variants, llm, params);
  } catch (const Error& e) {
    out.warnings.push_back(std::string("query variant generation failed: ") + e.what());
  }
  for (const auto& v : variants) {
    try {
      auto hits = retrieve(v, store, embedder, cfg);
      merged.insert(merged.end(), hits.begin(), hits.end());
      out.queries.push_back(v);
    } catch (const Error& e) {
      out.warnings.push_back("skipped query variant \"" + v + "\": " + e.what());
    }
  }

  std::unordered_map<std::string, std::size_t> best;
  for (auto& sc : merged) {
    auto [it, fresh] = best.try_emplace(sc.chunk.id, out.results.size());
    if (fresh) {
      out.results.push_back(std::move(sc));
    } else if (sc.score > out.results[it->second].score) {
      out.results[it->second].score = sc.score;
    }
  }
  sort_scored(out.results);
  for (const auto& w : out.warnings) log::logger()->warn("{}", w);
  return out;
}

}  // namespace ragsvc

#include "ragsvc/engine.hpp"

#include <mutex>

#include "ragsvc/error.hpp"
#include "ragsvc/log.hpp"
#include "ragsvc/text.hpp"

namespace ragsvc {

struct Engine::Collection {
  CollectionConfig cfg;
  std::unique_ptr<Embedder> embedder;
  VectorStore store;
  mutable std::shared_mutex mu;
};

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

}  // namespace

Engine::Engine(AppConfig cfg) : Engine(cfg, make_chat_client(cfg.chat)) {}

Engine::Engine(AppConfig cfg, std::unique_ptr<ChatClient> llm)
    : cfg_(std::move(cfg)), llm_(std::move(llm)), loaders_(LoaderRegistry::with_defaults()) {
  for (const auto& [name, ccfg] : cfg_.collections) {
    auto col = std::make_unique<Collection>();
    col->cfg = ccfg;
    col->embedder = make_embedder(ccfg.embedder);
    if (std::filesystem::exists(ccfg.store_path)) {
      col->store = VectorStore::load(ccfg.store_path);
      log::logger()->info("collection {}: loaded {} chunk(s) from {}", name, col->store.size(),
                          ccfg.store_path.string());
    } else {
      col->store = VectorStore(ccfg.hnsw);
    }
    collections_.emplace(name, std::move(col));
  }
}

Engine::~Engine() = default;

Engine::Collection& Engine::collection(const std::string& name) const {
  auto it = collections_.find(name);
  if (it == collections_.end()) {
    throw Error(ErrorCode::NotFound, "unknown collection '" + name + "'");
  }
  return *it->second;
}

bool Engine::has_collection(const std::string& name) const {
  return collections_.count(name) > 0;
}

std::vector<Document> Engine::load(const IngestSource& source) const {
  std::vector<Document> docs;
  switch (source.kind) {
    case IngestSource::Kind::Path:
      docs = loaders_.load(source.value);
      break;
    case IngestSource::Kind::Url: {
      FetchOptions opts;
      opts.allowlist = cfg_.service.fetch_allowlist;
      opts.network_enabled = cfg_.service.network_enabled;
      docs.push_back(fetch_web(source.value, opts));
      break;
    }
    case IngestSource::Kind::Text: {
      if (!text::is_valid_utf8(source.value)) {
        throw Error(ErrorCode::DecodeError, "text is not valid UTF-8");
      }
      Metadata md = source.metadata;
      if (md["source"].empty()) {
        md["source"] = "text:" + document_id_for(source.value).substr(4);
      }
      md.emplace("content_type", "text/plain");
      docs.push_back(make_document(text::normalize_newlines(source.value), std::move(md)));
      return docs;
    }
  }
  if (!source.metadata.empty()) {
    for (auto& d : docs) {
      for (const auto& [k, v] : source.metadata) {
        if (k != "source") d.metadata[k] = v;
      }
    }
  }
  return docs;
}

IngestResult Engine::ingest(const std::string& name, const IngestSource& source) {
  Collection& col = collection(name);
  const std::vector<Document> docs = staged("load", [&] { return load(source); });

  std::vector<Chunk> chunks = staged("split", [&] {
    std::vector<Chunk> out;
    for (const auto& d : docs) {
      auto part = split(d, col.cfg.splitter);
      out.insert(out.end(), std::make_move_iterator(part.begin()),
                 std::make_move_iterator(part.end()));
    }
    return out;
  });

  std::vector<EmbeddingVector> vectors = staged("embed", [&] {
    std::vector<std::string> texts;
    texts.reserve(chunks.size());
    for (const auto& c : chunks) texts.push_back(c.text);
    return texts.empty() ? std::vector<EmbeddingVector>{} : col.embedder->embed_texts(texts);
  });

  IngestResult result;
  for (const auto& d : docs) result.doc_ids.push_back(d.id);
  result.chunk_count = chunks.size();

  staged("store", [&] {
    std::unique_lock lock(col.mu);
    for (const auto& d : docs) col.store.remove_document(d.id);
    std::vector<std::pair<Chunk, EmbeddingVector>> records;
    records.reserve(chunks.size());
    for (std::size_t i = 0; i < chunks.size(); ++i) {
      records.emplace_back(std::move(chunks[i]), std::move(vectors[i]));
    }
    if (!records.empty()) col.store.upsert(std::move(records));
    col.store.save(col.cfg.store_path);
  });
  log::logger()->info("collection {}: ingested {} document(s), {} chunk(s)", name, docs.size(),
                      result.chunk_count);
  return result;
}

Answer Engine::query(const std::string& name, const std::string& question,
                     const QueryOptions& options) const {
  const Collection& col = collection(name);
  RetrievalConfig rcfg = col.cfg.retrieval;
  if (options.k) rcfg.k = *options.k;
  if (options.multi_query) rcfg.multi_query = *options.multi_query;
  try {
    rcfg.validate();
  } catch (Error& e) {
    throw e.with_stage("request");
  }

  std::shared_lock lock(col.mu);
  const Pipeline p{col.store, *col.embedder, *llm_, cfg_.chat.params};
  return chat_session(p, options.history, question, rcfg, col.cfg.budget, col.cfg.prompt,
                      cfg_.chat.history_turns);
}

std::vector<CollectionStatus> Engine::status() const {
  std::vector<CollectionStatus> out;
  for (const auto& [name, col] : collections_) {
    std::shared_lock lock(col->mu);
    out.push_back({name, col->store.size(), col->store.dim()});
  }
  return out;
}

}  // namespace ragsvc

#pragma once

#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "ragsvc/chain.hpp"
#include "ragsvc/config.hpp"
#include "ragsvc/ingest.hpp"

namespace ragsvc {

struct IngestSource {
  enum class Kind { Path, Url, Text };
  Kind kind = Kind::Text;
  std::string value;
  Metadata metadata;  // merged over loader metadata; "source" names inline text
};

struct IngestResult {
  std::vector<std::string> doc_ids;
  std::size_t chunk_count = 0;
};

struct QueryOptions {
  std::optional<std::size_t> k;
  std::optional<bool> multi_query;
  std::vector<ChatMessage> history;
};

struct CollectionStatus {
  std::string name;
  std::size_t chunk_count = 0;
  std::optional<std::size_t> dim;
};

/// Collections plus their embedders and the shared chat client. Each
/// collection has its own reader/writer lock: queries share it, ingest holds
/// it exclusively only while upserting and saving.
class Engine {
 public:
  /// Opens every collection's store file when it exists.
  explicit Engine(AppConfig cfg);
  Engine(AppConfig cfg, std::unique_ptr<ChatClient> llm);
  ~Engine();

  /// Load, split, embed, upsert and save. Re-ingesting a source replaces its
  /// chunks. Errors carry stage "load", "split", "embed" or "store"; unknown
  /// collections throw NotFound.
  IngestResult ingest(const std::string& collection, const IngestSource& source);

  Answer query(const std::string& collection, const std::string& question,
               const QueryOptions& options = {}) const;

  std::vector<CollectionStatus> status() const;
  bool has_collection(const std::string& name) const;
  const AppConfig& config() const { return cfg_; }

 private:
  struct Collection;

  Collection& collection(const std::string& name) const;
  std::vector<Document> load(const IngestSource& source) const;

  AppConfig cfg_;
  std::unique_ptr<ChatClient> llm_;
  LoaderRegistry loaders_;
  std::map<std::string, std::unique_ptr<Collection>> collections_;
};

}  // namespace ragsvc

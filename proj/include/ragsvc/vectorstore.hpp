#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ragsvc/chunker.hpp"
#include "ragsvc/embed.hpp"
#include "ragsvc/hnsw.hpp"

namespace ragsvc {

struct VectorRecord {
  Chunk chunk;
  EmbeddingVector vector;  // as supplied; never normalized
  std::uint64_t insert_id = 0;
};

struct ScoredChunk {
  Chunk chunk;
  double score = 0.0;
  std::size_t rank = 0;
  std::uint64_t insert_id = 0;
};

/// Score descending, then insert_id ascending; reassigns ranks.
void sort_scored(std::vector<ScoredChunk>& results);

/// In-memory collection of (chunk, vector) records with an exact index and an
/// HNSW index over L2-normalized copies. The graph is built on the first
/// approximate search or save, in insert order. Persisted as a single binary file:
///
///   "RAGV" u32 version=1 u32 dim u64 count
///   count x { u16 id_len, id bytes, f32 x dim, u32 meta_len, meta JSON, u64 insert_id }
///   u32 m u32 ef_construction u64 seed u64 entry_point i32 max_level u64 node_count
///   node_count x { u64 insert_id, u32 level, (level+1) x { u32 n, u64 x n } }
///
/// All integers and floats little-endian. entry_point is 2^64-1 when empty.
///
/// Not internally synchronized: const member functions may run concurrently,
/// mutations need exclusive access.
class VectorStore {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;

  explicit VectorStore(HnswParams build_params = {});

  /// Returns the insert ids assigned, in input order. Re-upserting a chunk
  /// id replaces the old record. The first upsert fixes the dimension.
  std::vector<std::uint64_t> upsert(std::vector<std::pair<Chunk, EmbeddingVector>> records);

  bool remove(const std::string& chunk_id);
  std::size_t remove_document(const std::string& doc_id);

  std::size_t size() const { return by_chunk_.size(); }
  bool empty() const { return by_chunk_.empty(); }
  std::optional<std::size_t> dim() const { return dim_; }
  const HnswParams& build_params() const { return build_params_; }

  const VectorRecord* find(const std::string& chunk_id) const;
  /// Live records in insert order.
  std::vector<const VectorRecord*> records() const;

  std::vector<ScoredChunk> search_exact(const EmbeddingVector& query, std::size_t k) const;

  /// Approximate search; scores are 1 - distance on the normalized copies.
  /// Only params.ef_search is read; graph-shape parameters come from the
  /// store's build params.
  std::vector<ScoredChunk> search_hnsw(const EmbeddingVector& query, std::size_t k,
                                       const HnswParams& params) const;

  /// Recomputes exact cosine against the stored vectors and re-sorts.
  std::vector<ScoredChunk> rerank(std::vector<ScoredChunk> candidates,
                                  const EmbeddingVector& query) const;

  /// Drops tombstones from the graph before writing.
  void save(const std::filesystem::path& path);
  static VectorStore load(const std::filesystem::path& path);

 private:
  void check_query(const EmbeddingVector& query) const;
  ScoredChunk scored(const VectorRecord& rec, double score) const;
  void compact();
  void ensure_index() const;

  HnswParams build_params_;
  std::optional<std::size_t> dim_;
  std::vector<std::optional<VectorRecord>> slots_;  // indexed by insert_id
  std::unordered_map<std::string, std::uint64_t> by_chunk_;
  mutable std::optional<HnswIndex> hnsw_;
  mutable std::vector<std::uint64_t> pending_;  // insert ids not yet in the graph, ascending
  std::unique_ptr<std::mutex> index_mu_ = std::make_unique<std::mutex>();
  std::uint64_t next_id_ = 0;
};

}  // namespace ragsvc

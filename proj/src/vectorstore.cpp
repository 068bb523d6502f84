#include "ragsvc/vectorstore.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "ragsvc/error.hpp"

namespace ragsvc {
namespace {

constexpr char kMagic[4] = {'R', 'A', 'G', 'V'};

bool score_order(const ScoredChunk& a, const ScoredChunk& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.insert_id < b.insert_id;
}

std::vector<float> unit_copy(const std::vector<float>& v) {
  double sq = 0.0;
  for (float x : v) sq += static_cast<double>(x) * x;
  const double inv = 1.0 / std::sqrt(sq);
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i] * inv);
  return out;
}

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  template <typename T>
  void put(T value) {
    using U = std::make_unsigned_t<T>;
    auto u = static_cast<U>(value);
    char bytes[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      bytes[i] = static_cast<char>(u & 0xFF);
      u = static_cast<U>(u >> 8);
    }
    out_.write(bytes, sizeof bytes);
  }
  void put_f32(float f) { put(std::bit_cast<std::uint32_t>(f)); }
  void put_bytes(std::string_view s) { out_.write(s.data(), static_cast<std::streamsize>(s.size())); }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  template <typename T>
  T get() {
    using U = std::make_unsigned_t<T>;
    unsigned char bytes[sizeof(U)];
    read(reinterpret_cast<char*>(bytes), sizeof bytes);
    U u = 0;
    for (std::size_t i = sizeof(U); i-- > 0;) u = static_cast<U>((u << 8) | bytes[i]);
    return static_cast<T>(u);
  }
  float get_f32() { return std::bit_cast<float>(get<std::uint32_t>()); }
  std::string get_bytes(std::size_t n) {
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }

 private:
  void read(char* dst, std::size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw Error(ErrorCode::FormatError, "vector store file is truncated");
    }
  }
  std::istream& in_;
};

nlohmann::json chunk_meta(const Chunk& c) {
  return {{"doc_id", c.doc_id},
          {"seq", c.seq},
          {"text", c.text},
          {"overlap", c.overlap},
          {"metadata", c.metadata}};
}

}  // namespace

void sort_scored(std::vector<ScoredChunk>& results) {
  std::sort(results.begin(), results.end(), score_order);
  for (std::size_t i = 0; i < results.size(); ++i) results[i].rank = i;
}

VectorStore::VectorStore(HnswParams build_params) : build_params_(build_params) {
  build_params_.validate();
}

std::vector<std::uint64_t> VectorStore::upsert(
    std::vector<std::pair<Chunk, EmbeddingVector>> records) {
  std::optional<std::size_t> dim = dim_;
  for (const auto& [chunk, vec] : records) {
    if (vec.dim() == 0) throw Error(ErrorCode::DimensionMismatch, "empty vector");
    if (!dim) dim = vec.dim();
    if (vec.dim() != *dim) {
      throw Error(ErrorCode::DimensionMismatch,
                  "vector for " + chunk.id + " has dimension " + std::to_string(vec.dim()) +
                      ", store expects " + std::to_string(*dim));
    }
    bool nonzero = false;
    for (float x : vec.values) {
      if (!std::isfinite(x)) {
        throw Error(ErrorCode::ValidationError, "vector for " + chunk.id + " is not finite");
      }
      nonzero = nonzero || x != 0.0f;
    }
    if (!nonzero) throw Error(ErrorCode::ZeroVector, "vector for " + chunk.id + " is zero");
  }
  if (!dim) return {};
  dim_ = dim;

  std::vector<std::uint64_t> ids;
  ids.reserve(records.size());
  for (auto& [chunk, vec] : records) {
    remove(chunk.id);
    const std::uint64_t id = next_id_++;
    pending_.push_back(id);
    if (slots_.size() <= id) slots_.resize(id + 1);
    by_chunk_[chunk.id] = id;
    slots_[id] = VectorRecord{std::move(chunk), std::move(vec), id};
    ids.push_back(id);
  }
  return ids;
}

bool VectorStore::remove(const std::string& chunk_id) {
  const auto it = by_chunk_.find(chunk_id);
  if (it == by_chunk_.end()) return false;
  const auto p = std::lower_bound(pending_.begin(), pending_.end(), it->second);
  if (p != pending_.end() && *p == it->second) {
    pending_.erase(p);
  } else {
    hnsw_->mark_deleted(it->second);
  }
  slots_[it->second].reset();
  by_chunk_.erase(it);
  return true;
}

std::size_t VectorStore::remove_document(const std::string& doc_id) {
  std::vector<std::string> doomed;
  for (const auto& slot : slots_) {
    if (slot && slot->chunk.doc_id == doc_id) doomed.push_back(slot->chunk.id);
  }
  for (const auto& id : doomed) remove(id);
  return doomed.size();
}

const VectorRecord* VectorStore::find(const std::string& chunk_id) const {
  const auto it = by_chunk_.find(chunk_id);
  return it == by_chunk_.end() ? nullptr : &*slots_[it->second];
}

std::vector<const VectorRecord*> VectorStore::records() const {
  std::vector<const VectorRecord*> out;
  out.reserve(by_chunk_.size());
  for (const auto& slot : slots_) {
    if (slot) out.push_back(&*slot);
  }
  return out;
}

void VectorStore::check_query(const EmbeddingVector& query) const {
  if (empty()) throw Error(ErrorCode::EmptyStore, "vector store is empty");
  if (query.dim() != *dim_) {
    throw Error(ErrorCode::DimensionMismatch,
                "query has dimension " + std::to_string(query.dim()) + ", store has " +
                    std::to_string(*dim_));
  }
}

ScoredChunk VectorStore::scored(const VectorRecord& rec, double score) const {
  return ScoredChunk{rec.chunk, score, 0, rec.insert_id};
}

std::vector<ScoredChunk> VectorStore::search_exact(const EmbeddingVector& query,
                                                   std::size_t k) const {
  check_query(query);
  if (k == 0) throw Error(ErrorCode::ValidationError, "k must be positive");
  std::vector<std::pair<double, std::uint64_t>> all;
  all.reserve(size());
  for (const auto& slot : slots_) {
    if (slot) all.emplace_back(cosine_similarity(query, slot->vector), slot->insert_id);
  }
  const std::size_t n = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n), all.end(),
                    [](const auto& a, const auto& b) {
                      return a.first != b.first ? a.first > b.first : a.second < b.second;
                    });
  std::vector<ScoredChunk> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(scored(*slots_[all[i].second], all[i].first));
    out.back().rank = i;
  }
  return out;
}

std::vector<ScoredChunk> VectorStore::search_hnsw(const EmbeddingVector& query, std::size_t k,
                                                  const HnswParams& params) const {
  check_query(query);
  if (k == 0) throw Error(ErrorCode::ValidationError, "k must be positive");
  if (params.ef_search < 1) throw Error(ErrorCode::InvalidConfig, "ef_search must be >= 1");
  const std::size_t ef = std::max(params.ef_search, k);
  // An exhaustive candidate list is exact search.
  if (ef >= size()) return search_exact(query, k);

  double sq = 0.0;
  for (float x : query.values) sq += static_cast<double>(x) * x;
  if (sq == 0.0) throw Error(ErrorCode::ZeroVector, "zero-norm query");
  const auto unit = unit_copy(query.values);

  ensure_index();
  std::vector<ScoredChunk> out;
  for (const auto& hit : hnsw_->search(unit, k, ef)) {
    const double score = std::clamp(1.0 - static_cast<double>(hit.distance), -1.0, 1.0);
    out.push_back(scored(*slots_[hit.id], score));
  }
  sort_scored(out);
  return out;
}

std::vector<ScoredChunk> VectorStore::rerank(std::vector<ScoredChunk> candidates,
                                             const EmbeddingVector& query) const {
  if (candidates.empty()) return candidates;
  check_query(query);
  for (auto& c : candidates) {
    const auto it = by_chunk_.find(c.chunk.id);
    if (it == by_chunk_.end() || it->second != c.insert_id) {
      throw Error(ErrorCode::StaleCandidate,
                  "candidate " + c.chunk.id + " is no longer in the store");
    }
    c.score = cosine_similarity(query, slots_[it->second]->vector);
  }
  sort_scored(candidates);
  return candidates;
}

void VectorStore::ensure_index() const {
  std::lock_guard lock(*index_mu_);
  if (pending_.empty()) return;
  if (!hnsw_) hnsw_.emplace(*dim_, build_params_);
  for (auto id : pending_) hnsw_->insert(id, unit_copy(slots_[id]->vector.values));
  pending_.clear();
}

void VectorStore::compact() {
  ensure_index();
  if (!hnsw_ || hnsw_->tombstones() == 0) return;
  HnswIndex rebuilt(*dim_, build_params_);
  for (const auto& slot : slots_) {
    if (slot) rebuilt.insert(slot->insert_id, unit_copy(slot->vector.values));
  }
  hnsw_.emplace(std::move(rebuilt));
}

void VectorStore::save(const std::filesystem::path& path) {
  compact();
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp);
    Writer w(out);
    w.put_bytes(std::string_view(kMagic, 4));
    w.put<std::uint32_t>(kFormatVersion);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(dim_.value_or(0)));
    w.put<std::uint64_t>(size());
    for (const auto& slot : slots_) {
      if (!slot) continue;
      if (slot->chunk.id.size() > 0xFFFF) {
        throw Error(ErrorCode::IoError, "chunk id too long to persist: " + slot->chunk.id);
      }
      w.put<std::uint16_t>(static_cast<std::uint16_t>(slot->chunk.id.size()));
      w.put_bytes(slot->chunk.id);
      for (float x : slot->vector.values) w.put_f32(x);
      const std::string meta = chunk_meta(slot->chunk).dump();
      w.put<std::uint32_t>(static_cast<std::uint32_t>(meta.size()));
      w.put_bytes(meta);
      w.put<std::uint64_t>(slot->insert_id);
    }
    w.put<std::uint32_t>(static_cast<std::uint32_t>(build_params_.m));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(build_params_.ef_construction));
    w.put<std::uint64_t>(build_params_.seed);
    w.put<std::uint64_t>(hnsw_ ? hnsw_->entry_point() : HnswIndex::kNone);
    w.put<std::int32_t>(hnsw_ ? hnsw_->max_level() : -1);
    w.put<std::uint64_t>(size());
    if (hnsw_) {
      const auto& nodes = hnsw_->nodes();
      for (std::uint64_t id = 0; id < nodes.size(); ++id) {
        const auto& node = nodes[id];
        if (node.level < 0) continue;
        w.put<std::uint64_t>(id);
        w.put<std::uint32_t>(static_cast<std::uint32_t>(node.level));
        for (const auto& layer : node.links) {
          w.put<std::uint32_t>(static_cast<std::uint32_t>(layer.size()));
          for (std::uint64_t nb : layer) w.put<std::uint64_t>(nb);
        }
      }
    }
    out.flush();
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot replace " + path.string() + ": " + ec.message());
}

VectorStore VectorStore::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorCode::FileNotFound, path.string() + " does not exist");
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  Reader r(in);
  if (r.get_bytes(4) != std::string_view(kMagic, 4)) {
    throw Error(ErrorCode::FormatError, path.string() + " is not a vector store file");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kFormatVersion) {
    throw Error(ErrorCode::VersionError,
                "unsupported vector store format version " + std::to_string(version));
  }
  const auto dim = r.get<std::uint32_t>();
  const auto count = r.get<std::uint64_t>();
  if (count > 0 && dim == 0) throw Error(ErrorCode::FormatError, "records with dimension 0");

  std::vector<VectorRecord> records;
  records.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(count, 1u << 20)));
  for (std::uint64_t i = 0; i < count; ++i) {
    VectorRecord rec;
    rec.chunk.id = r.get_bytes(r.get<std::uint16_t>());
    rec.vector.values.resize(dim);
    for (auto& x : rec.vector.values) x = r.get_f32();
    const std::string meta_text = r.get_bytes(r.get<std::uint32_t>());
    try {
      const auto meta = nlohmann::json::parse(meta_text);
      rec.chunk.doc_id = meta.at("doc_id").get<std::string>();
      rec.chunk.seq = meta.at("seq").get<std::size_t>();
      rec.chunk.text = meta.at("text").get<std::string>();
      rec.chunk.overlap = meta.value("overlap", std::size_t{0});
      rec.chunk.metadata = meta.at("metadata").get<Metadata>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::FormatError, "bad record metadata: " + std::string(e.what()));
    }
    rec.insert_id = r.get<std::uint64_t>();
    if (!records.empty() && rec.insert_id <= records.back().insert_id) {
      throw Error(ErrorCode::FormatError, "insert ids are not increasing");
    }
    records.push_back(std::move(rec));
  }

  HnswParams params;
  params.m = r.get<std::uint32_t>();
  params.ef_construction = r.get<std::uint32_t>();
  params.seed = r.get<std::uint64_t>();
  try {
    params.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::FormatError, std::string("bad HNSW parameters: ") + e.what());
  }
  const auto entry = r.get<std::uint64_t>();
  const auto max_level = r.get<std::int32_t>();
  const auto node_count = r.get<std::uint64_t>();
  if (node_count != count) throw Error(ErrorCode::FormatError, "HNSW node count mismatch");

  VectorStore store(params);
  if (count == 0) return store;
  store.dim_ = dim;
  store.hnsw_.emplace(dim, params);
  for (auto& rec : records) {
    const auto id = rec.insert_id;
    if (store.slots_.size() <= id) store.slots_.resize(id + 1);
    if (!store.by_chunk_.emplace(rec.chunk.id, id).second) {
      throw Error(ErrorCode::FormatError, "duplicate chunk id " + rec.chunk.id);
    }
    store.hnsw_->set_vector(id, unit_copy(rec.vector.values));
    store.slots_[id] = std::move(rec);
  }
  store.next_id_ = store.slots_.size();

  for (std::uint64_t i = 0; i < node_count; ++i) {
    const auto id = r.get<std::uint64_t>();
    const auto level = r.get<std::uint32_t>();
    if (id >= store.slots_.size() || !store.slots_[id] || level > 64) {
      throw Error(ErrorCode::FormatError, "HNSW node " + std::to_string(id) + " has no record");
    }
    HnswIndex::Node node;
    node.level = static_cast<int>(level);
    node.links.resize(level + 1);
    for (auto& layer : node.links) {
      const auto n = r.get<std::uint32_t>();
      if (n > 4 * params.m + 1) throw Error(ErrorCode::FormatError, "HNSW adjacency too long");
      layer.resize(n);
      for (auto& nb : layer) {
        nb = r.get<std::uint64_t>();
        if (nb >= store.slots_.size() || !store.slots_[nb]) {
          throw Error(ErrorCode::FormatError, "HNSW link to unknown node");
        }
      }
    }
    store.hnsw_->restore_node(id, std::move(node));
  }
  if (entry >= store.slots_.size() || !store.slots_[entry] || max_level < 0 ||
      store.hnsw_->nodes()[entry].level != max_level) {
    throw Error(ErrorCode::FormatError, "bad HNSW entry point");
  }
  for (const auto& [chunk_id, id] : store.by_chunk_) {
    const auto& nodes = store.hnsw_->nodes();
    const auto& node = nodes[id];
    if (node.level < 0) throw Error(ErrorCode::FormatError, "record without HNSW node");
    for (int layer = 0; layer <= node.level; ++layer) {
      for (auto nb : node.links[layer]) {
        if (nodes[nb].level < layer) {
          throw Error(ErrorCode::FormatError, "HNSW link above neighbor's level");
        }
      }
    }
  }
  store.hnsw_->restore_entry(entry, max_level);
  return store;
}

}  // namespace ragsvc

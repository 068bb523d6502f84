#include "ragsvc/hnsw.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

#include "ragsvc/error.hpp"

namespace ragsvc {
namespace {

std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr int kMaxLevel = 32;

}  // namespace

void HnswParams::validate() const {
  if (m < 2) throw Error(ErrorCode::InvalidConfig, "hnsw.m must be >= 2");
  if (ef_construction < m) {
    throw Error(ErrorCode::InvalidConfig, "hnsw.ef_construction must be >= m");
  }
  if (ef_search < 1) throw Error(ErrorCode::InvalidConfig, "hnsw.ef_search must be >= 1");
}

HnswIndex::HnswIndex(std::size_t dim, HnswParams params)
    : dim_(dim), params_(params), level_mult_(1.0 / std::log(static_cast<double>(params.m))) {
  params_.validate();
}

int HnswIndex::level_for(std::uint64_t id) const {
  const std::uint64_t bits = splitmix64(params_.seed ^ splitmix64(id));
  // u in (0, 1]
  const double u = (static_cast<double>(bits >> 11) + 1.0) * 0x1.0p-53;
  const int level = static_cast<int>(std::floor(-std::log(u) * level_mult_));
  return std::min(level, kMaxLevel);
}

std::span<const float> HnswIndex::vec(std::uint64_t id) const {
  return std::span<const float>(vectors_).subspan(id * dim_, dim_);
}

float HnswIndex::distance(std::span<const float> q, std::uint64_t id) const {
  const auto v = vec(id);
  float dot = 0.0f;
  for (std::size_t i = 0; i < dim_; ++i) dot += q[i] * v[i];
  return 1.0f - dot;
}

float HnswIndex::distance(std::uint64_t a, std::uint64_t b) const {
  return distance(vec(a), b);
}

void HnswIndex::ensure_slot(std::uint64_t id) {
  if (id >= nodes_.size()) {
    nodes_.resize(id + 1);
    vectors_.resize((id + 1) * dim_, 0.0f);
  }
}

void HnswIndex::set_vector(std::uint64_t id, std::span<const float> unit) {
  ensure_slot(id);
  std::copy(unit.begin(), unit.end(), vectors_.begin() + static_cast<std::ptrdiff_t>(id * dim_));
}

std::uint64_t HnswIndex::greedy_closest(std::span<const float> q, std::uint64_t from,
                                        int layer) const {
  std::uint64_t cur = from;
  float best = distance(q, cur);
  for (bool moved = true; moved;) {
    moved = false;
    for (std::uint64_t nb : nodes_[cur].links[layer]) {
      const float d = distance(q, nb);
      if (d < best || (d == best && nb < cur)) {
        best = d;
        cur = nb;
        moved = true;
      }
    }
  }
  return cur;
}

std::vector<HnswIndex::Candidate> HnswIndex::search_layer(std::span<const float> q,
                                                          const std::vector<Candidate>& entry,
                                                          std::size_t ef, int layer,
                                                          bool live_only) const {
  std::vector<char> visited(nodes_.size(), 0);
  // Min-heap of nodes to expand; max-heap of the current best ef.
  std::priority_queue<Candidate, std::vector<Candidate>, std::greater<>> frontier;
  std::priority_queue<Candidate> best;
  for (const auto& c : entry) {
    if (visited[c.second]) continue;
    visited[c.second] = 1;
    frontier.push(c);
    if (!live_only || !nodes_[c.second].deleted) best.push(c);
  }
  while (best.size() > ef) best.pop();

  while (!frontier.empty()) {
    const Candidate current = frontier.top();
    if (best.size() >= ef && current > best.top()) break;
    frontier.pop();
    for (std::uint64_t nb : nodes_[current.second].links[layer]) {
      if (visited[nb]) continue;
      visited[nb] = 1;
      const Candidate cand{distance(q, nb), nb};
      if (best.size() < ef || cand < best.top()) {
        frontier.push(cand);
        if (!live_only || !nodes_[nb].deleted) {
          best.push(cand);
          if (best.size() > ef) best.pop();
        }
      }
    }
  }
  std::vector<Candidate> out;
  out.reserve(best.size());
  while (!best.empty()) {
    out.push_back(best.top());
    best.pop();
  }
  std::reverse(out.begin(), out.end());
  return out;
}

// Keeps a candidate only if it is closer to the base node than to every
// neighbor already kept; this spreads links across directions.
std::vector<std::uint64_t> HnswIndex::select_neighbors(std::vector<Candidate> candidates,
                                                       std::size_t m) const {
  std::sort(candidates.begin(), candidates.end());
  std::vector<std::uint64_t> kept;
  for (const auto& [dist, id] : candidates) {
    if (kept.size() >= m) break;
    bool diverse = true;
    for (std::uint64_t other : kept) {
      if (distance(id, other) < dist) {
        diverse = false;
        break;
      }
    }
    if (diverse) kept.push_back(id);
  }
  return kept;
}

void HnswIndex::shrink_links(std::uint64_t id, int layer) {
  auto& links = nodes_[id].links[layer];
  std::vector<Candidate> cands;
  cands.reserve(links.size());
  for (std::uint64_t nb : links) cands.emplace_back(distance(id, nb), nb);
  links = select_neighbors(std::move(cands), max_links(layer));
}

void HnswIndex::insert(std::uint64_t id, std::span<const float> unit) {
  if (unit.size() != dim_) {
    throw Error(ErrorCode::DimensionMismatch, "hnsw insert: wrong dimension");
  }
  if (id < nodes_.size() && nodes_[id].level >= 0) {
    throw Error(ErrorCode::ValidationError, "hnsw insert: id already present");
  }
  set_vector(id, unit);
  const int level = level_for(id);
  Node& node = nodes_[id];
  node.level = level;
  node.deleted = false;
  node.links.assign(static_cast<std::size_t>(level) + 1, {});
  ++live_;

  if (entry_ == kNone) {
    entry_ = id;
    max_level_ = level;
    return;
  }

  std::uint64_t ep = entry_;
  for (int layer = max_level_; layer > level; --layer) ep = greedy_closest(unit, ep, layer);

  std::vector<Candidate> entry{{distance(unit, ep), ep}};
  for (int layer = std::min(level, max_level_); layer >= 0; --layer) {
    auto found = search_layer(unit, entry, params_.ef_construction, layer, false);
    auto neighbors = select_neighbors(found, params_.m);
    nodes_[id].links[layer] = neighbors;
    for (std::uint64_t nb : neighbors) {
      auto& back = nodes_[nb].links[layer];
      back.push_back(id);
      if (back.size() > max_links(layer)) shrink_links(nb, layer);
    }
    entry = std::move(found);
  }
  if (level > max_level_) {
    entry_ = id;
    max_level_ = level;
  }
}

void HnswIndex::mark_deleted(std::uint64_t id) {
  if (id >= nodes_.size() || nodes_[id].level < 0 || nodes_[id].deleted) return;
  nodes_[id].deleted = true;
  --live_;
  ++tombstones_;
}

std::vector<HnswIndex::Hit> HnswIndex::search(std::span<const float> unit, std::size_t k,
                                              std::size_t ef) const {
  std::vector<Hit> hits;
  if (entry_ == kNone || live_ == 0 || k == 0) return hits;
  std::uint64_t ep = entry_;
  for (int layer = max_level_; layer > 0; --layer) ep = greedy_closest(unit, ep, layer);
  auto found = search_layer(unit, {{distance(unit, ep), ep}}, std::max(ef, k), 0, true);
  std::sort(found.begin(), found.end());
  for (const auto& [d, id] : found) {
    if (hits.size() == k) break;
    hits.push_back({d, id});
  }
  return hits;
}

void HnswIndex::restore_node(std::uint64_t id, Node node) {
  ensure_slot(id);
  if (nodes_[id].level >= 0) {
    throw Error(ErrorCode::FormatError, "duplicate HNSW node " + std::to_string(id));
  }
  if (node.deleted) ++tombstones_;
  else ++live_;
  nodes_[id] = std::move(node);
}

void HnswIndex::restore_entry(std::uint64_t entry, int max_level) {
  entry_ = entry;
  max_level_ = max_level;
}

}  // namespace ragsvc

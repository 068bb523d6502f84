#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <utility>
#include <vector>

namespace ragsvc {

inline constexpr std::uint64_t kDefaultHnswSeed = 0x00C0FFEE5EED0001ULL;

struct HnswParams {
  std::size_t m = 16;                // neighbors per node above layer 0; layer 0 keeps 2*m
  std::size_t ef_construction = 200;
  std::size_t ef_search = 64;        // raised to k at query time
  std::uint64_t seed = kDefaultHnswSeed;

  /// Throws Error{InvalidConfig}.
  void validate() const;
};

/// Hierarchical navigable small-world graph over unit vectors, keyed by the
/// store's insert ids. Distance is 1 - dot, so callers must insert
/// L2-normalized vectors. Deletions are tombstones: deleted nodes still route
/// searches but never appear in results.
class HnswIndex {
 public:
  static constexpr std::uint64_t kNone = std::numeric_limits<std::uint64_t>::max();

  struct Node {
    int level = -1;  // -1: slot unused
    bool deleted = false;
    std::vector<std::vector<std::uint64_t>> links;  // links[layer]
  };

  struct Hit {
    float distance;
    std::uint64_t id;
  };

  HnswIndex(std::size_t dim, HnswParams params);

  /// Insert ids must be new. `unit` must have dim() entries.
  void insert(std::uint64_t id, std::span<const float> unit);
  void mark_deleted(std::uint64_t id);

  /// Up to k live nodes closest to `unit`, by (distance, id) ascending.
  std::vector<Hit> search(std::span<const float> unit, std::size_t k, std::size_t ef) const;

  /// Level drawn for an id: floor(-ln(u) / ln(m)) with u from a counter-based
  /// generator seeded by params.seed, so levels do not depend on insert order.
  int level_for(std::uint64_t id) const;

  std::size_t dim() const { return dim_; }
  const HnswParams& params() const { return params_; }
  std::uint64_t entry_point() const { return entry_; }
  int max_level() const { return max_level_; }
  std::size_t live_count() const { return live_; }
  std::size_t tombstones() const { return tombstones_; }
  const std::vector<Node>& nodes() const { return nodes_; }

  /// Restores a serialized graph. Vectors are supplied separately with
  /// set_vector(); no links are recomputed.
  void restore_node(std::uint64_t id, Node node);
  void set_vector(std::uint64_t id, std::span<const float> unit);
  void restore_entry(std::uint64_t entry, int max_level);

 private:
  using Candidate = std::pair<float, std::uint64_t>;

  float distance(std::span<const float> q, std::uint64_t id) const;
  float distance(std::uint64_t a, std::uint64_t b) const;
  std::span<const float> vec(std::uint64_t id) const;
  void ensure_slot(std::uint64_t id);
  std::size_t max_links(int layer) const { return layer == 0 ? 2 * params_.m : params_.m; }

  std::uint64_t greedy_closest(std::span<const float> q, std::uint64_t from, int layer) const;
  std::vector<Candidate> search_layer(std::span<const float> q,
                                      const std::vector<Candidate>& entry, std::size_t ef,
                                      int layer, bool live_only) const;
  std::vector<std::uint64_t> select_neighbors(std::vector<Candidate> candidates,
                                              std::size_t m) const;
  void shrink_links(std::uint64_t id, int layer);

  std::size_t dim_;
  HnswParams params_;
  double level_mult_;
  std::vector<float> vectors_;
  std::vector<Node> nodes_;
  std::uint64_t entry_ = kNone;
  int max_level_ = -1;
  std::size_t live_ = 0;
  std::size_t tombstones_ = 0;
};

}  // namespace ragsvc

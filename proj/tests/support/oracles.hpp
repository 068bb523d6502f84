#pragma once

// Reference implementations used only by tests. Each one is written from the
// definition, without calling into the library code it checks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace oracle {

/// Cosine similarity in long double with separate norm passes.
inline long double cosine(const std::vector<float>& a, const std::vector<float>& b) {
  long double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += static_cast<long double>(a[i]) * b[i];
  for (float x : a) na += static_cast<long double>(x) * x;
  for (float y : b) nb += static_cast<long double>(y) * y;
  long double c = dot / (std::sqrt(na) * std::sqrt(nb));
  return std::max(-1.0L, std::min(1.0L, c));
}

/// Full sort of every (score, id) pair; score desc, id asc. Returns the first k.
inline std::vector<std::pair<double, std::uint64_t>> brute_force_topk(
    const std::vector<std::vector<float>>& vectors, const std::vector<std::uint64_t>& ids,
    const std::vector<float>& query, std::size_t k) {
  std::vector<std::pair<double, std::uint64_t>> all;
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t d = 0; d < query.size(); ++d) {
      dot += static_cast<double>(query[d]) * vectors[i][d];
      na += static_cast<double>(query[d]) * query[d];
      nb += static_cast<double>(vectors[i][d]) * vectors[i][d];
    }
    double s = dot / (std::sqrt(na) * std::sqrt(nb));
    s = std::max(-1.0, std::min(1.0, s));
    all.emplace_back(s, ids[i]);
  }
  std::sort(all.begin(), all.end(), [](const auto& x, const auto& y) {
    if (x.first != y.first) return x.first > y.first;
    return x.second < y.second;
  });
  if (all.size() > k) all.resize(k);
  return all;
}

/// Fixed-width windows advancing by size - overlap; the reference for the
/// per-character splitter on text without whitespace.
inline std::vector<std::string> sliding_windows(const std::string& ascii, std::size_t size,
                                                std::size_t overlap) {
  std::vector<std::string> out;
  if (ascii.empty()) return out;
  const std::size_t step = size - overlap;
  for (std::size_t start = 0;; start += step) {
    out.push_back(ascii.substr(start, size));
    if (start + size >= ascii.size()) break;
  }
  return out;
}

/// Multiset of character n-grams of the lowercased, whitespace-collapsed text.
inline std::map<std::u32string, int> ngram_multiset(const std::u32string& raw, std::size_t lo,
                                                    std::size_t hi) {
  std::u32string norm;
  bool space = false;
  for (char32_t c : raw) {
    if (c == U' ' || c == U'\t' || c == U'\n' || c == U'\r') {
      space = !norm.empty();
      continue;
    }
    if (space) norm.push_back(U' ');
    space = false;
    norm.push_back(c >= U'A' && c <= U'Z' ? c + 32 : c);
  }
  std::map<std::u32string, int> grams;
  for (std::size_t n = lo; n <= hi; ++n) {
    for (std::size_t i = 0; i + n <= norm.size(); ++i) ++grams[norm.substr(i, n)];
  }
  return grams;
}

/// Size of the multiset intersection.
inline int ngram_overlap(const std::u32string& a, const std::u32string& b, std::size_t lo = 3,
                         std::size_t hi = 5) {
  const auto ga = ngram_multiset(a, lo, hi);
  const auto gb = ngram_multiset(b, lo, hi);
  int shared = 0;
  for (const auto& [g, n] : ga) {
    if (auto it = gb.find(g); it != gb.end()) shared += std::min(n, it->second);
  }
  return shared;
}

inline std::vector<float> random_vector(std::mt19937_64& rng, std::size_t dim) {
  std::normal_distribution<float> dist(0.0f, 1.0f);
  std::vector<float> v(dim);
  for (auto& x : v) x = dist(rng);
  return v;
}

inline std::vector<float> random_unit_vector(std::mt19937_64& rng, std::size_t dim) {
  auto v = random_vector(rng, dim);
  double sq = 0;
  for (float x : v) sq += static_cast<double>(x) * x;
  const double inv = 1.0 / std::sqrt(sq);
  for (auto& x : v) x = static_cast<float>(x * inv);
  return v;
}

/// ceil(chars / 4) computed on code units that are not UTF-8 continuation bytes.
inline std::size_t token_estimate(const std::string& utf8) {
  std::size_t chars = 0;
  for (char c : utf8) {
    if ((static_cast<unsigned char>(c) & 0xC0) != 0x80) ++chars;
  }
  return (chars + 3) / 4;
}

}  // namespace oracle

#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ragsvc/http.hpp"

namespace ragsvc {

struct EmbeddingVector {
  std::vector<float> values;

  std::size_t dim() const noexcept { return values.size(); }
};

/// (a·b)/(‖a‖‖b‖) accumulated in double and clamped to [-1, 1].
/// Throws DimensionMismatch or ZeroVector.
double cosine_similarity(std::span<const float> a, std::span<const float> b);
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

enum class EmbedderKind { Remote, LocalHash };

struct EmbedderConfig {
  EmbedderKind kind = EmbedderKind::LocalHash;
  std::size_t dim = 256;
  std::string endpoint;
  std::string model;
  std::string api_key_ref;
  std::size_t batch_size = 64;
  std::size_t ngram_min = 3;
  std::size_t ngram_max = 5;
  std::size_t max_in_flight = 4;
  std::chrono::milliseconds timeout{60'000};
  http::RetryPolicy retry{};

  void validate() const;
};

/// Feature-hash seed for the local embedder. Changing it changes every
/// vector, so stored collections would need re-ingesting.
inline constexpr std::uint64_t kHashEmbedSeed = 0x52414753'56433031ULL;

/// Deterministic local embedding:
///   1. lowercase (ASCII), collapse whitespace runs to one space, trim;
///   2. take every character n-gram with ngram_min <= n <= ngram_max (the
///      whole string when it is shorter than ngram_min);
///   3. h = mix64(fnv1a64(utf8(gram)) ^ kHashEmbedSeed), where mix64 is the
///      splitmix64 finalizer; bucket = h % dim, sign = top bit of h ? -1 : +1;
///   4. sum signed counts per bucket, L2-normalize.
/// Throws EmptyInput for blank text.
EmbeddingVector hash_embed(std::string_view text, const EmbedderConfig& cfg);

class Embedder {
 public:
  virtual ~Embedder() = default;

  /// One vector per text, in input order. Throws EmptyInput if any text is
  /// blank, ProviderError for remote failures.
  virtual std::vector<EmbeddingVector> embed_texts(std::span<const std::string> texts) const = 0;

  EmbeddingVector embed(const std::string& text) const;
};

class HashEmbedder final : public Embedder {
 public:
  explicit HashEmbedder(EmbedderConfig cfg);
  std::vector<EmbeddingVector> embed_texts(std::span<const std::string> texts) const override;

 private:
  EmbedderConfig cfg_;
};

/// Provider-compatible embeddings client: POST {endpoint}/embeddings with
/// {"model", "input": [...]}, response {"data": [{"index", "embedding"}]}.
/// The API key is read once from the environment variable named by
/// api_key_ref and only ever sent in the Authorization header.
class RemoteEmbedder final : public Embedder {
 public:
  explicit RemoteEmbedder(EmbedderConfig cfg);
  std::vector<EmbeddingVector> embed_texts(std::span<const std::string> texts) const override;

 private:
  std::vector<EmbeddingVector> embed_batch(std::span<const std::string> batch) const;

  EmbedderConfig cfg_;
  std::string api_key_;
};

std::unique_ptr<Embedder> make_embedder(const EmbedderConfig& cfg);

}  // namespace ragsvc

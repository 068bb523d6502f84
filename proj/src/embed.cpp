#include "ragsvc/embed.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <future>

#include "ragsvc/error.hpp"
#include "ragsvc/log.hpp"
#include "ragsvc/text.hpp"

namespace ragsvc {
namespace {

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::u32string normalize_for_hashing(std::string_view raw) {
  const std::u32string chars = text::decode_utf8(raw);
  std::u32string out;
  out.reserve(chars.size());
  bool pending_space = false;
  for (char32_t c : chars) {
    if (text::is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(U' ');
    pending_space = false;
    out.push_back(text::ascii_lower(c));
  }
  return out;
}

void require_non_blank(std::span<const std::string> texts) {
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (text::trim(texts[i]).empty()) {
      throw Error(ErrorCode::EmptyInput, "text " + std::to_string(i) + " is blank");
    }
  }
}

}  // namespace

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::DimensionMismatch,
                "dimension mismatch: " + std::to_string(a.size()) + " vs " +
                    std::to_string(b.size()));
  }
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i];
    const double y = b[i];
    dot += x * y;
    na += x * x;
    nb += y * y;
  }
  if (na == 0.0 || nb == 0.0) throw Error(ErrorCode::ZeroVector, "zero-norm vector");
  const double c = dot / (std::sqrt(na) * std::sqrt(nb));
  return std::clamp(c, -1.0, 1.0);
}

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  return cosine_similarity(std::span<const float>(a.values),
                           std::span<const float>(b.values));
}

void EmbedderConfig::validate() const {
  if (batch_size == 0) throw Error(ErrorCode::ValidationError, "embedder.batch_size must be >= 1");
  if (max_in_flight == 0) {
    throw Error(ErrorCode::ValidationError, "embedder.max_in_flight must be >= 1");
  }
  if (kind == EmbedderKind::LocalHash) {
    if (dim < 8) throw Error(ErrorCode::ValidationError, "embedder.dim must be >= 8");
    if (ngram_min == 0 || ngram_min > ngram_max) {
      throw Error(ErrorCode::ValidationError, "embedder.ngram_range must satisfy 1 <= min <= max");
    }
  } else {
    if (endpoint.empty()) throw Error(ErrorCode::ValidationError, "embedder.endpoint is required");
    if (model.empty()) throw Error(ErrorCode::ValidationError, "embedder.model is required");
    if (api_key_ref.empty()) {
      throw Error(ErrorCode::ValidationError, "embedder.api_key_env is required");
    }
  }
}

EmbeddingVector hash_embed(std::string_view raw, const EmbedderConfig& cfg) {
  const std::u32string norm = normalize_for_hashing(raw);
  if (norm.empty()) throw Error(ErrorCode::EmptyInput, "cannot embed blank text");

  std::vector<double> acc(cfg.dim, 0.0);
  auto add_gram = [&](std::u32string_view gram) {
    const std::uint64_t h = mix64(text::fnv1a64(text::encode_utf8(gram)) ^ kHashEmbedSeed);
    const std::size_t bucket = h % cfg.dim;
    acc[bucket] += (h >> 63) ? -1.0 : 1.0;
  };
  if (norm.size() < cfg.ngram_min) {
    add_gram(norm);
  } else {
    for (std::size_t n = cfg.ngram_min; n <= cfg.ngram_max && n <= norm.size(); ++n) {
      for (std::size_t i = 0; i + n <= norm.size(); ++i) {
        add_gram(std::u32string_view(norm).substr(i, n));
      }
    }
  }
  double sq = 0.0;
  for (double v : acc) sq += v * v;
  if (sq == 0.0) {
    // Every bucket cancelled out; fall back to a single whole-text feature.
    add_gram(norm);
    sq = 1.0;
  }
  const double inv = 1.0 / std::sqrt(sq);
  EmbeddingVector out;
  out.values.resize(cfg.dim);
  for (std::size_t i = 0; i < cfg.dim; ++i) out.values[i] = static_cast<float>(acc[i] * inv);
  return out;
}

EmbeddingVector Embedder::embed(const std::string& text) const {
  auto v = embed_texts(std::span<const std::string>(&text, 1));
  return std::move(v.front());
}

HashEmbedder::HashEmbedder(EmbedderConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.kind = EmbedderKind::LocalHash;
  cfg_.validate();
}

std::vector<EmbeddingVector> HashEmbedder::embed_texts(std::span<const std::string> texts) const {
  require_non_blank(texts);
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(hash_embed(t, cfg_));
  return out;
}

RemoteEmbedder::RemoteEmbedder(EmbedderConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.kind = EmbedderKind::Remote;
  cfg_.validate();
  const char* key = std::getenv(cfg_.api_key_ref.c_str());
  if (key == nullptr || *key == '\0') {
    throw Error(ErrorCode::MissingSecret,
                "environment variable " + cfg_.api_key_ref + " is not set");
  }
  api_key_ = key;
}

std::vector<EmbeddingVector> RemoteEmbedder::embed_batch(std::span<const std::string> batch) const {
  nlohmann::json body = {{"model", cfg_.model}, {"input", batch}};
  http::Request req;
  req.method = "POST";
  std::string base = cfg_.endpoint;
  while (!base.empty() && base.back() == '/') base.pop_back();
  req.url = base + "/embeddings";
  req.body = body.dump();
  req.content_type = "application/json";
  req.timeout = cfg_.timeout;
  req.headers = {{"Authorization", "Bearer " + api_key_}};

  http::Response res;
  try {
    res = http::send_with_retry(req, cfg_.retry);
  } catch (const Error& e) {
    throw Error(ErrorCode::ProviderError, std::string("embedding request failed: ") + e.what(),
                e.status());
  }
  if (res.status < 200 || res.status >= 300) {
    throw Error(ErrorCode::ProviderError,
                "embedding provider returned HTTP " + std::to_string(res.status) + ": " +
                    http::excerpt(res.body),
                res.status);
  }

  std::vector<EmbeddingVector> out(batch.size());
  std::vector<bool> seen(batch.size(), false);
  try {
    const auto parsed = nlohmann::json::parse(res.body);
    const auto& data = parsed.at("data");
    if (!data.is_array() || data.size() != batch.size()) {
      throw Error(ErrorCode::ProviderError,
                  "embedding response has " + std::to_string(data.size()) +
                      " items for " + std::to_string(batch.size()) + " inputs",
                  res.status);
    }
    for (std::size_t pos = 0; pos < data.size(); ++pos) {
      const auto& item = data[pos];
      const std::size_t index = item.contains("index") ? item.at("index").get<std::size_t>() : pos;
      if (index >= batch.size() || seen[index]) {
        throw Error(ErrorCode::ProviderError, "embedding response has a bad index", res.status);
      }
      seen[index] = true;
      auto values = item.at("embedding").get<std::vector<float>>();
      for (float v : values) {
        if (!std::isfinite(v)) {
          throw Error(ErrorCode::ProviderError, "embedding contains non-finite values",
                      res.status);
        }
      }
      out[index].values = std::move(values);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ProviderError,
                std::string("malformed embedding response: ") + e.what() + ": " +
                    http::excerpt(res.body),
                res.status);
  }
  return out;
}

std::vector<EmbeddingVector> RemoteEmbedder::embed_texts(std::span<const std::string> texts) const {
  require_non_blank(texts);
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  const std::size_t batches = (texts.size() + cfg_.batch_size - 1) / cfg_.batch_size;
  for (std::size_t first = 0; first < batches; first += cfg_.max_in_flight) {
    const std::size_t last = std::min(batches, first + cfg_.max_in_flight);
    std::vector<std::future<std::vector<EmbeddingVector>>> inflight;
    for (std::size_t b = first; b < last; ++b) {
      const std::size_t begin = b * cfg_.batch_size;
      const std::size_t count = std::min(cfg_.batch_size, texts.size() - begin);
      inflight.push_back(std::async(std::launch::async, [this, texts, begin, count] {
        return embed_batch(texts.subspan(begin, count));
      }));
    }
    // get() every future so no thread outlives a thrown error.
    std::exception_ptr failure;
    for (auto& f : inflight) {
      try {
        for (auto& v : f.get()) out.push_back(std::move(v));
      } catch (...) {
        if (!failure) failure = std::current_exception();
      }
    }
    if (failure) std::rethrow_exception(failure);
  }
  if (!out.empty()) {
    const std::size_t dim = out.front().dim();
    for (const auto& v : out) {
      if (v.dim() != dim || dim == 0) {
        throw Error(ErrorCode::ProviderError, "embedding provider returned inconsistent dimensions");
      }
    }
  }
  log::logger()->debug("embedded {} texts in {} request(s)", texts.size(), batches);
  return out;
}

std::unique_ptr<Embedder> make_embedder(const EmbedderConfig& cfg) {
  if (cfg.kind == EmbedderKind::LocalHash) return std::make_unique<HashEmbedder>(cfg);
  return std::make_unique<RemoteEmbedder>(cfg);
}

}  // namespace ragsvc

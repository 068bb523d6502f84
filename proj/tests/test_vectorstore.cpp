#include <cstring>
#include <fstream>
#include <set>
#include <thread>

#include "oracles.hpp"
#include "ragsvc/vectorstore.hpp"
#include "test_util.hpp"

using namespace ragsvc;

namespace {

Chunk chunk(const std::string& doc, std::size_t seq, const std::string& text = "t") {
  Chunk c;
  c.doc_id = doc;
  c.seq = seq;
  c.id = chunk_id_for(doc, seq);
  c.text = text;
  c.metadata = {{"source", doc + ".txt"}, {"seq", std::to_string(seq)}};
  return c;
}

struct RandomStore {
  VectorStore store;
  std::vector<std::vector<float>> vectors;
  std::vector<std::uint64_t> ids;
};

RandomStore random_store(std::size_t n, std::size_t dim, std::uint64_t seed, HnswParams p = {}) {
  RandomStore out{VectorStore(p), {}, {}};
  std::mt19937_64 rng(seed);
  std::vector<std::pair<Chunk, EmbeddingVector>> batch;
  for (std::size_t i = 0; i < n; ++i) {
    auto v = oracle::random_vector(rng, dim);
    out.vectors.push_back(v);
    batch.emplace_back(chunk("d" + std::to_string(i / 100), i % 100), EmbeddingVector{v});
  }
  out.ids = out.store.upsert(std::move(batch));
  return out;
}

double recall_at(const RandomStore& rs, std::size_t queries, std::size_t k, std::uint64_t seed,
                 const HnswParams& p) {
  std::mt19937_64 rng(seed);
  std::size_t hit = 0;
  const std::size_t dim = rs.vectors.front().size();
  for (std::size_t q = 0; q < queries; ++q) {
    const auto query = oracle::random_vector(rng, dim);
    const auto truth = oracle::brute_force_topk(rs.vectors, rs.ids, query, k);
    std::set<std::uint64_t> want;
    for (const auto& [s, id] : truth) want.insert(id);
    for (const auto& r : rs.store.search_hnsw(EmbeddingVector{query}, k, p)) {
      hit += want.count(r.insert_id);
    }
  }
  return static_cast<double>(hit) / static_cast<double>(queries * k);
}

}  // namespace

TEST(VectorStore, UpsertAssignsSequentialIds) {
  VectorStore s;
  const auto ids = s.upsert({{chunk("a", 0), EmbeddingVector{{1, 0}}},
                             {chunk("a", 1), EmbeddingVector{{0, 1}}}});
  EXPECT_EQ(ids, (std::vector<std::uint64_t>{0, 1}));
  EXPECT_EQ(s.size(), 2u);
  EXPECT_EQ(s.dim(), 2u);
  ASSERT_NE(s.find("a#1"), nullptr);
  EXPECT_EQ(s.find("a#1")->insert_id, 1u);
  EXPECT_EQ(s.find("zzz"), nullptr);
}

TEST(VectorStore, ReupsertReplacesRecord) {
  VectorStore s;
  s.upsert({{chunk("a", 0, "old"), EmbeddingVector{{1, 0}}}});
  s.upsert({{chunk("a", 0, "new"), EmbeddingVector{{0, 1}}}});
  EXPECT_EQ(s.size(), 1u);
  EXPECT_EQ(s.find("a#0")->chunk.text, "new");
  const auto hits = s.search_exact(EmbeddingVector{{0, 1}}, 5);
  ASSERT_EQ(hits.size(), 1u);
  EXPECT_EQ(hits[0].chunk.text, "new");
  const auto approx = s.search_hnsw(EmbeddingVector{{0, 1}}, 5, {});
  ASSERT_EQ(approx.size(), 1u);
  EXPECT_EQ(approx[0].chunk.text, "new");
}

TEST(VectorStore, RejectsBadVectorsAtomically) {
  VectorStore s;
  s.upsert({{chunk("a", 0), EmbeddingVector{{1, 0, 0}}}});
  EXPECT_RAGSVC_ERROR(s.upsert({{chunk("b", 0), EmbeddingVector{{1, 0, 0}}},
                                {chunk("b", 1), EmbeddingVector{{1, 0}}}}),
                      ErrorCode::DimensionMismatch);
  EXPECT_EQ(s.size(), 1u);
  EXPECT_RAGSVC_ERROR(s.upsert({{chunk("b", 0), EmbeddingVector{{0, 0, 0}}}}),
                      ErrorCode::ZeroVector);
  EXPECT_RAGSVC_ERROR(s.search_exact(EmbeddingVector{{1, 0}}, 1), ErrorCode::DimensionMismatch);
  EXPECT_RAGSVC_ERROR(s.search_exact(EmbeddingVector{{0, 0, 0}}, 1), ErrorCode::ZeroVector);
}

TEST(VectorStore, EmptyStoreSearches) {
  VectorStore s;
  EXPECT_RAGSVC_ERROR(s.search_exact(EmbeddingVector{{1, 0}}, 3), ErrorCode::EmptyStore);
  EXPECT_RAGSVC_ERROR(s.search_hnsw(EmbeddingVector{{1, 0}}, 3, {}), ErrorCode::EmptyStore);
}

TEST(VectorStore, ExactSearchMatchesBruteForce) {
  auto rs = random_store(500, 24, 11);
  std::mt19937_64 rng(12);
  for (int q = 0; q < 100; ++q) {
    const auto query = oracle::random_vector(rng, 24);
    const std::size_t k = 1 + rng() % 20;
    const auto got = rs.store.search_exact(EmbeddingVector{query}, k);
    const auto want = oracle::brute_force_topk(rs.vectors, rs.ids, query, k);
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      ASSERT_EQ(got[i].insert_id, want[i].second) << "rank " << i;
      ASSERT_NEAR(got[i].score, want[i].first, 1e-9);
      ASSERT_EQ(got[i].rank, i);
    }
  }
}

TEST(VectorStore, TiesBreakByInsertOrder) {
  VectorStore s;
  s.upsert({{chunk("a", 0), EmbeddingVector{{4, 0}}},
            {chunk("a", 1), EmbeddingVector{{1, 0}}},
            {chunk("a", 2), EmbeddingVector{{2, 0}}}});
  const auto hits = s.search_exact(EmbeddingVector{{1, 0}}, 3);
  ASSERT_EQ(hits.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(hits[i].insert_id, i);
}

TEST(VectorStore, KLargerThanStoreReturnsAll) {
  auto rs = random_store(7, 8, 1);
  const EmbeddingVector q{rs.vectors[0]};
  EXPECT_EQ(rs.store.search_exact(q, 100).size(), 7u);
  EXPECT_EQ(rs.store.search_hnsw(q, 100, {}).size(), 7u);
  EXPECT_RAGSVC_ERROR(rs.store.search_exact(q, 0), ErrorCode::ValidationError);
}

TEST(VectorStore, HnswSingleRecord) {
  VectorStore s;
  s.upsert({{chunk("a", 0), EmbeddingVector{{0.5f, 0.5f}}}});
  const auto hits = s.search_hnsw(EmbeddingVector{{1, 0}}, 4, {});
  ASSERT_EQ(hits.size(), 1u);
  EXPECT_EQ(hits[0].chunk.id, "a#0");
}

TEST(VectorStore, HnswWithLargeEfEqualsExact) {
  auto rs = random_store(300, 16, 5);
  HnswParams p;
  p.ef_search = 300;
  std::mt19937_64 rng(6);
  for (int q = 0; q < 50; ++q) {
    const EmbeddingVector query{oracle::random_vector(rng, 16)};
    const auto exact = rs.store.search_exact(query, 10);
    const auto approx = rs.store.search_hnsw(query, 10, p);
    ASSERT_EQ(approx.size(), exact.size());
    for (std::size_t i = 0; i < exact.size(); ++i) {
      EXPECT_EQ(approx[i].insert_id, exact[i].insert_id);
    }
  }
}

TEST(VectorStore, HnswRecallAtDefaults) {
  auto rs = random_store(5000, 32, 21);
  EXPECT_GE(recall_at(rs, 100, 10, 22, {}), 0.90);
}

TEST(VectorStore, RerankRestoresExactOrder) {
  auto rs = random_store(400, 12, 31);
  std::mt19937_64 rng(32);
  for (int q = 0; q < 30; ++q) {
    const EmbeddingVector query{oracle::random_vector(rng, 12)};
    auto candidates = rs.store.search_hnsw(query, 10, {});
    const auto reranked = rs.store.rerank(candidates, query);
    ASSERT_EQ(reranked.size(), candidates.size());
    for (std::size_t i = 0; i < reranked.size(); ++i) {
      const auto& vec = rs.vectors[reranked[i].insert_id];
      EXPECT_NEAR(reranked[i].score, static_cast<double>(oracle::cosine(vec, query.values)), 1e-9);
      EXPECT_EQ(reranked[i].rank, i);
      if (i > 0) EXPECT_GE(reranked[i - 1].score, reranked[i].score);
    }
  }
}

TEST(VectorStore, RerankRejectsStaleCandidates) {
  VectorStore s;
  s.upsert({{chunk("a", 0), EmbeddingVector{{1, 0}}}, {chunk("a", 1), EmbeddingVector{{0, 1}}}});
  const EmbeddingVector q{{1, 0}};
  auto candidates = s.search_exact(q, 2);
  s.upsert({{chunk("a", 0), EmbeddingVector{{1, 1}}}});
  EXPECT_RAGSVC_ERROR(s.rerank(candidates, q), ErrorCode::StaleCandidate);
  candidates = s.search_exact(q, 2);
  s.remove("a#1");
  EXPECT_RAGSVC_ERROR(s.rerank(candidates, q), ErrorCode::StaleCandidate);
}

TEST(VectorStore, DeleteAndReinsertKeepsIndexesConsistent) {
  auto rs = random_store(600, 16, 41);
  EXPECT_EQ(rs.store.remove_document("d0"), 100u);
  EXPECT_FALSE(rs.store.remove("d0#0"));
  EXPECT_EQ(rs.store.size(), 500u);

  std::mt19937_64 rng(42);
  HnswParams wide;
  wide.ef_search = 1000;
  for (int q = 0; q < 30; ++q) {
    const EmbeddingVector query{oracle::random_vector(rng, 16)};
    const auto exact = rs.store.search_exact(query, 10);
    const auto approx = rs.store.search_hnsw(query, 10, wide);
    for (const auto& r : approx) EXPECT_NE(r.chunk.doc_id, "d0");
    ASSERT_EQ(exact.size(), approx.size());
    for (std::size_t i = 0; i < exact.size(); ++i) EXPECT_EQ(exact[i].insert_id, approx[i].insert_id);
  }

  // Re-ingest the removed document with fresh vectors.
  std::vector<std::pair<Chunk, EmbeddingVector>> batch;
  for (std::size_t i = 0; i < 100; ++i) {
    batch.emplace_back(chunk("d0", i), EmbeddingVector{oracle::random_vector(rng, 16)});
  }
  rs.store.upsert(std::move(batch));
  EXPECT_EQ(rs.store.size(), 600u);
  std::vector<std::vector<float>> vecs;
  std::vector<std::uint64_t> ids;
  for (const auto* r : rs.store.records()) {
    vecs.push_back(r->vector.values);
    ids.push_back(r->insert_id);
  }
  for (int q = 0; q < 30; ++q) {
    const auto query = oracle::random_vector(rng, 16);
    const auto want = oracle::brute_force_topk(vecs, ids, query, 5);
    const auto got = rs.store.search_exact(EmbeddingVector{query}, 5);
    for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(got[i].insert_id, want[i].second);
  }
}

TEST(VectorStore, RemovalsBeforeFirstHnswSearch) {
  auto rs = random_store(600, 16, 31);
  // Drop every third record before the graph exists, then compare against
  // the survivors only.
  std::vector<std::vector<float>> live_vectors;
  std::vector<std::uint64_t> live_ids;
  for (std::size_t i = 0; i < rs.ids.size(); ++i) {
    if (i % 3 == 0) {
      ASSERT_TRUE(rs.store.remove(chunk("d" + std::to_string(i / 100), i % 100).id));
    } else {
      live_vectors.push_back(rs.vectors[i]);
      live_ids.push_back(rs.ids[i]);
    }
  }
  std::mt19937_64 rng(5);
  HnswParams p;
  std::size_t hit = 0;
  for (int q = 0; q < 50; ++q) {
    const auto query = oracle::random_vector(rng, 16);
    std::set<std::uint64_t> want;
    for (const auto& [s, id] : oracle::brute_force_topk(live_vectors, live_ids, query, 10)) {
      want.insert(id);
    }
    for (const auto& r : rs.store.search_hnsw(EmbeddingVector{query}, 10, p)) {
      ASSERT_NE(r.insert_id % 3, 0u);
      hit += want.count(r.insert_id);
    }
  }
  EXPECT_GE(static_cast<double>(hit) / 500.0, 0.9);
}

TEST(VectorStore, ConcurrentFirstHnswSearches) {
  const auto rs = random_store(2000, 16, 37);
  std::mt19937_64 rng(6);
  const auto query = oracle::random_vector(rng, 16);
  std::vector<std::vector<std::uint64_t>> results(8);
  std::vector<std::thread> threads;
  for (std::size_t t = 0; t < results.size(); ++t) {
    threads.emplace_back([&, t] {
      for (const auto& r : rs.store.search_hnsw(EmbeddingVector{query}, 10, HnswParams{})) {
        results[t].push_back(r.insert_id);
      }
    });
  }
  for (auto& th : threads) th.join();
  for (const auto& r : results) EXPECT_EQ(r, results.front());
}

TEST(VectorStore, SaveLoadRoundTrip) {
  testutil::TempDir dir;
  auto rs = random_store(250, 10, 51);
  rs.store.remove("d1#3");
  const auto path = dir / "store.ragv";
  rs.store.save(path);
  const auto loaded = VectorStore::load(path);

  ASSERT_EQ(loaded.size(), rs.store.size());
  EXPECT_EQ(loaded.dim(), rs.store.dim());
  const auto a = rs.store.records();
  const auto b = loaded.records();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i]->chunk.id, b[i]->chunk.id);
    EXPECT_EQ(a[i]->chunk.text, b[i]->chunk.text);
    EXPECT_EQ(a[i]->chunk.metadata, b[i]->chunk.metadata);
    EXPECT_EQ(a[i]->vector.values, b[i]->vector.values);
    EXPECT_EQ(a[i]->insert_id, b[i]->insert_id);
  }

  std::mt19937_64 rng(52);
  for (int q = 0; q < 20; ++q) {
    const EmbeddingVector query{oracle::random_vector(rng, 10)};
    const auto x = rs.store.search_hnsw(query, 8, {});
    const auto y = loaded.search_hnsw(query, 8, {});
    ASSERT_EQ(x.size(), y.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      EXPECT_EQ(x[i].insert_id, y[i].insert_id);
      EXPECT_EQ(x[i].score, y[i].score);
    }
    const auto ex = rs.store.search_exact(query, 8);
    const auto ey = loaded.search_exact(query, 8);
    for (std::size_t i = 0; i < ex.size(); ++i) EXPECT_EQ(ex[i].score, ey[i].score);
  }
}

TEST(VectorStore, HeaderLayout) {
  testutil::TempDir dir;
  VectorStore s;
  s.upsert({{chunk("a", 0), EmbeddingVector{{1, 2, 3}}}});
  s.save(dir / "s.ragv");
  const auto bytes = testutil::read_file(dir / "s.ragv");
  ASSERT_GE(bytes.size(), 20u);
  EXPECT_EQ(bytes.substr(0, 4), "RAGV");
  std::uint32_t version = 0, dim = 0;
  std::uint64_t count = 0;
  std::memcpy(&version, bytes.data() + 4, 4);
  std::memcpy(&dim, bytes.data() + 8, 4);
  std::memcpy(&count, bytes.data() + 12, 8);
  EXPECT_EQ(version, 1u);
  EXPECT_EQ(dim, 3u);
  EXPECT_EQ(count, 1u);
}

TEST(VectorStore, EmptyStoreRoundTrip) {
  testutil::TempDir dir;
  VectorStore s;
  s.save(dir / "empty.ragv");
  const auto loaded = VectorStore::load(dir / "empty.ragv");
  EXPECT_TRUE(loaded.empty());
}

TEST(VectorStore, LoadErrors) {
  testutil::TempDir dir;
  EXPECT_RAGSVC_ERROR(VectorStore::load(dir / "missing.ragv"), ErrorCode::FileNotFound);
  EXPECT_RAGSVC_ERROR(VectorStore::load(dir.write("bad.ragv", "NOPE0000000000000000")),
                      ErrorCode::FormatError);

  auto rs = random_store(20, 4, 61);
  rs.store.save(dir / "ok.ragv");
  auto bytes = testutil::read_file(dir / "ok.ragv");

  auto versioned = bytes;
  versioned[4] = 9;
  EXPECT_RAGSVC_ERROR(VectorStore::load(dir.write("v.ragv", versioned)), ErrorCode::VersionError);

  for (std::size_t cut : {std::size_t{3}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1}) {
    EXPECT_RAGSVC_ERROR(VectorStore::load(dir.write("cut.ragv", bytes.substr(0, cut))),
                        ErrorCode::FormatError);
  }
}

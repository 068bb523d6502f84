#include <algorithm>

#include "corpus.hpp"
#include "oracles.hpp"
#include "ragsvc/chain.hpp"
#include "ragsvc/text.hpp"
#include "store_fixture.hpp"
#include "test_util.hpp"

using namespace ragsvc;

namespace {

const HashEmbedder& embedder() {
  static const HashEmbedder e{EmbedderConfig{}};
  return e;
}

class ThrowingChat final : public ChatClient {
 public:
  std::string chat(const std::vector<ChatMessage>&, const ChatParams&) const override {
    throw Error(ErrorCode::ProviderError, "down", 503);
  }
};

class ChainTest : public ::testing::Test {
 protected:
  VectorStore store =
      testutil::index_documents(corpus::three_documents(), testutil::small_chunks(), embedder());
  MockChatClient echo;
  RetrievalConfig cfg;
  ContextBudget budget;
  PromptTemplate tmpl = PromptTemplate::default_qa();

  Answer ask(const ChatClient& llm, const std::string& q) {
    return answer_question(Pipeline{store, embedder(), llm}, q, cfg, budget, tmpl);
  }
};

}  // namespace

TEST_F(ChainTest, EchoShowsQuestionAndEveryIncludedChunk) {
  const auto a = ask(echo, corpus::kRefundQuestion);
  ASSERT_EQ(a.text.rfind("ECHO:", 0), 0u);
  EXPECT_NE(a.text.find(corpus::kRefundQuestion), std::string::npos);
  ASSERT_EQ(a.sources.size(), 4u);
  for (const auto& s : a.sources) {
    const auto* rec = store.find(s.chunk_id);
    ASSERT_NE(rec, nullptr);
    EXPECT_NE(a.text.find(rec->chunk.text), std::string::npos);
    EXPECT_NE(a.text.find("[source: " + s.source + " #" + std::to_string(s.seq) + "]"),
              std::string::npos);
  }
  EXPECT_EQ(a.text, "ECHO:" + a.prompt);
  EXPECT_EQ(a.retrieval_mode, RetrievalMode::Exact);
}

TEST_F(ChainTest, RefundQuestionCitesOnlyRefundDocument) {
  // Oracle: every refund chunk shares more n-grams with the question than any
  // chunk from the other documents, and there are at least k refund chunks.
  const auto q = text::decode_utf8(corpus::kRefundQuestion);
  int min_refund = 1 << 30;
  int max_other = -1;
  std::size_t refund_chunks = 0;
  for (const auto* r : store.records()) {
    const int o = oracle::ngram_overlap(q, text::decode_utf8(r->chunk.text));
    if (r->chunk.metadata.at("source") == "refunds.txt") {
      min_refund = std::min(min_refund, o);
      ++refund_chunks;
    } else {
      max_other = std::max(max_other, o);
    }
  }
  ASSERT_GT(min_refund, max_other);
  ASSERT_GE(refund_chunks, cfg.k);

  MockChatClient scripted(std::vector<MockRule>{{"refund window", "30 days."}});
  for (auto mode : {RetrievalMode::Exact, RetrievalMode::Hnsw}) {
    cfg.mode = mode;
    const auto a = ask(scripted, corpus::kRefundQuestion);
    EXPECT_EQ(a.text, "30 days.");
    ASSERT_EQ(a.sources.size(), cfg.k);
    for (const auto& s : a.sources) EXPECT_EQ(s.source, "refunds.txt");
    EXPECT_EQ(a.retrieval_mode, mode);
  }
}

TEST_F(ChainTest, DeterministicAcrossRuns) {
  const auto first = ask(echo, corpus::kRefundQuestion);
  for (int i = 0; i < 5; ++i) {
    const auto again = ask(echo, corpus::kRefundQuestion);
    EXPECT_EQ(again.text, first.text);
    ASSERT_EQ(again.sources.size(), first.sources.size());
    for (std::size_t j = 0; j < first.sources.size(); ++j) {
      EXPECT_EQ(again.sources[j].chunk_id, first.sources[j].chunk_id);
      EXPECT_EQ(again.sources[j].score, first.sources[j].score);
    }
  }
}

TEST_F(ChainTest, SourcesArePrefixOfRetrievalInRankOrder) {
  budget.max_prompt_tokens = 200;
  budget.reserved_answer_tokens = 20;
  cfg.k = 10;
  const auto a = ask(echo, "Where do visitors park and where are the first aid kits?");
  const auto ranked = retrieve("Where do visitors park and where are the first aid kits?", store,
                               embedder(), cfg);
  ASSERT_LT(a.sources.size(), ranked.size());
  ASSERT_FALSE(a.sources.empty());
  for (std::size_t i = 0; i < a.sources.size(); ++i) {
    EXPECT_EQ(a.sources[i].chunk_id, ranked[i].chunk.id);
    EXPECT_EQ(a.sources[i].score, ranked[i].score);
  }
  EXPECT_FALSE(a.warnings.empty());
}

TEST_F(ChainTest, PromptEstimateWithinBudget) {
  std::mt19937 rng(12);
  for (int i = 0; i < 200; ++i) {
    budget.reserved_answer_tokens = rng() % 100;
    budget.max_prompt_tokens = budget.reserved_answer_tokens + 80 + rng() % 400;
    cfg.k = 1 + rng() % 12;
    try {
      const auto a = ask(echo, "refund window for gifts?");
      ASSERT_LE(a.prompt_tokens_est, budget.max_prompt_tokens - budget.reserved_answer_tokens);
      ASSERT_FALSE(a.sources.empty());
    } catch (const Error& e) {
      ASSERT_EQ(e.code(), ErrorCode::BudgetExhausted);
      ASSERT_EQ(e.stage(), "assemble");
    }
  }
}

TEST_F(ChainTest, StageAttribution) {
  VectorStore empty;
  try {
    answer_question(Pipeline{empty, embedder(), echo}, "q", cfg, budget, tmpl);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyStore);
    EXPECT_EQ(e.stage(), "retrieve");
  }
  try {
    budget = {120, 100};
    ask(echo, "q");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BudgetExhausted);
    EXPECT_EQ(e.stage(), "assemble");
  }
  budget = {};
  try {
    tmpl.body = "no slots";
    ask(echo, "q");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::PlaceholderMissing);
    EXPECT_EQ(e.stage(), "render");
  }
  tmpl = PromptTemplate::default_qa();
  try {
    ThrowingChat down;
    ask(down, "q");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ProviderError);
    EXPECT_EQ(e.stage(), "chat");
  }
}

TEST_F(ChainTest, MultiQueryFeedsUntruncatedUnion) {
  cfg.multi_query = true;
  MockChatClient llm(std::vector<MockRule>{
      {"different versions", "Where is the shuttle bus?\nWhen are fire drills held?"}});
  const auto a = ask(llm, corpus::kRefundQuestion);
  EXPECT_GT(a.sources.size(), cfg.k);
  std::set<std::string> sources;
  for (const auto& s : a.sources) sources.insert(s.source);
  EXPECT_EQ(sources.size(), 3u);
}

TEST_F(ChainTest, SessionWithoutHistoryEqualsAnswer) {
  const Pipeline p{store, embedder(), echo};
  const auto a = answer_question(p, corpus::kRefundQuestion, cfg, budget, tmpl);
  const auto b = chat_session(p, {}, corpus::kRefundQuestion, cfg, budget, tmpl);
  EXPECT_EQ(a.text, b.text);
  EXPECT_EQ(a.prompt_tokens_est, b.prompt_tokens_est);
}

TEST_F(ChainTest, SessionHistoryAppearsInOrder) {
  const Pipeline p{store, embedder(), echo};
  const std::vector<ChatMessage> history = {{"user", "first question about parking"},
                                            {"assistant", "first reply"},
                                            {"user", "second question about drills"},
                                            {"assistant", "second reply"}};
  const auto a = chat_session(p, history, corpus::kRefundQuestion, cfg, budget, tmpl);
  std::size_t pos = 0;
  for (const auto& m : history) {
    const auto found = a.text.find(m.content, pos);
    ASSERT_NE(found, std::string::npos) << m.content;
    pos = found;
  }
  EXPECT_LT(a.text.find("User: first question"), a.text.find("[source:"));
}

TEST_F(ChainTest, SessionKeepsOnlyRecentTurns) {
  const Pipeline p{store, embedder(), echo};
  std::vector<ChatMessage> history;
  for (int i = 0; i < 10; ++i) {
    history.push_back({i % 2 ? "assistant" : "user", "turn-" + std::to_string(i) + "-marker"});
  }
  const auto a = chat_session(p, history, corpus::kRefundQuestion, cfg, budget, tmpl);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(a.text.find("turn-" + std::to_string(i) + "-"), std::string::npos);
  for (int i = 4; i < 10; ++i) EXPECT_NE(a.text.find("turn-" + std::to_string(i) + "-"), std::string::npos);
  EXPECT_EQ(format_history(history, 6).find("turn-3-"), std::string::npos);
}

TEST_F(ChainTest, SessionHistoryCanExhaustBudget) {
  const Pipeline p{store, embedder(), echo};
  const std::vector<ChatMessage> history = {{"user", std::string(12000, 'h')}, {"assistant", "ok"}};
  try {
    chat_session(p, history, corpus::kRefundQuestion, cfg, budget, tmpl);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BudgetExhausted);
    EXPECT_EQ(e.stage(), "assemble");
  }
}

#include "ragsvc/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "ragsvc/error.hpp"
#include "ragsvc/log.hpp"
#include "ragsvc/text.hpp"

namespace ragsvc {

namespace {

using nlohmann::json;

[[noreturn]] void invalid(const std::string& field, const std::string& what) {
  throw Error(ErrorCode::ValidationError, field + ": " + what);
}

// Typed access to one JSON object that rejects unknown keys.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) invalid(path_, "must be an object");
  }

  std::string field(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  const json* find(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() || it->is_null() ? nullptr : &*it;
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  void get(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) invalid(field(key), "must be a string");
      out = v->get<std::string>();
    }
  }

  void get(const std::string& key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) invalid(field(key), "must be true or false");
      out = v->get<bool>();
    }
  }

  void get(const std::string& key, std::size_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer() || (v->is_number_integer() && !v->is_number_unsigned() &&
                                       v->get<std::int64_t>() < 0)) {
        invalid(field(key), "must be a non-negative integer");
      }
      out = v->get<std::size_t>();
    }
  }

  void get(const std::string& key, int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) invalid(field(key), "must be an integer");
      out = v->get<int>();
    }
  }

  void get(const std::string& key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) invalid(field(key), "must be a number");
      out = v->get<double>();
    }
  }

  void get_seconds(const std::string& key, std::chrono::milliseconds& out) {
    double s = static_cast<double>(out.count()) / 1000.0;
    get(key, s);
    if (!std::isfinite(s) || s <= 0) invalid(field(key), "must be a positive number of seconds");
    out = std::chrono::milliseconds(static_cast<std::int64_t>(std::llround(s * 1000.0)));
  }

  void get(const std::string& key, std::vector<std::string>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) invalid(field(key), "must be an array of strings");
      out.clear();
      for (const auto& item : *v) {
        if (!item.is_string()) invalid(field(key), "must be an array of strings");
        out.push_back(item.get<std::string>());
      }
    }
  }

  std::optional<Section> child(const std::string& key) {
    if (const json* v = find(key)) return Section(*v, field(key));
    return std::nullopt;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) invalid(field(key), "unknown field");
    }
  }

  const json& raw() const { return j_; }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

// Re-raise a module validate() failure with the collection path in front.
template <typename F>
void validated(const std::string& prefix, F&& f) {
  try {
    f();
  } catch (const Error& e) {
    throw Error(ErrorCode::ValidationError, prefix + "." + e.what());
  }
}

EmbedderKind parse_embedder_kind(const std::string& s, const std::string& field) {
  if (s == "local_hash") return EmbedderKind::LocalHash;
  if (s == "remote") return EmbedderKind::Remote;
  invalid(field, "must be \"local_hash\" or \"remote\"");
}

RetrievalMode parse_mode(const std::string& s, const std::string& field) {
  if (s == "exact") return RetrievalMode::Exact;
  if (s == "hnsw") return RetrievalMode::Hnsw;
  invalid(field, "must be \"exact\" or \"hnsw\"");
}

CollectionConfig parse_collection(const std::string& name, Section& s,
                                  const std::filesystem::path& base_dir) {
  CollectionConfig c;
  c.name = name;
  std::string store_path;
  s.get("store_path", store_path);
  if (store_path.empty()) invalid(s.field("store_path"), "is required");
  c.store_path = std::filesystem::path(store_path);
  if (c.store_path.is_relative()) c.store_path = base_dir / c.store_path;
  c.store_path = c.store_path.lexically_normal();

  if (auto sp = s.child("splitter")) {
    sp->get("chunk_size", c.splitter.chunk_size);
    sp->get("chunk_overlap", c.splitter.chunk_overlap);
    sp->get("separators", c.splitter.separators);
    sp->finish();
  }
  if (auto e = s.child("embedder")) {
    std::string kind = "local_hash";
    e->get("kind", kind);
    c.embedder.kind = parse_embedder_kind(kind, e->field("kind"));
    e->get("dim", c.embedder.dim);
    e->get("endpoint", c.embedder.endpoint);
    e->get("model", c.embedder.model);
    e->get("api_key_env", c.embedder.api_key_ref);
    e->get("batch_size", c.embedder.batch_size);
    e->get("max_in_flight", c.embedder.max_in_flight);
    e->get_seconds("timeout_s", c.embedder.timeout);
    if (const json* r = e->find("ngram_range")) {
      if (!r->is_array() || r->size() != 2 || !(*r)[0].is_number_unsigned() ||
          !(*r)[1].is_number_unsigned()) {
        invalid(e->field("ngram_range"), "must be [min, max]");
      }
      c.embedder.ngram_min = (*r)[0].get<std::size_t>();
      c.embedder.ngram_max = (*r)[1].get<std::size_t>();
    }
    e->finish();
  }
  if (auto h = s.child("hnsw")) {
    h->get("m", c.hnsw.m);
    h->get("ef_construction", c.hnsw.ef_construction);
    h->get("seed", c.hnsw.seed);
    h->finish();
  }
  if (auto r = s.child("retrieval")) {
    std::string mode = "exact";
    r->get("mode", mode);
    c.retrieval.mode = parse_mode(mode, r->field("mode"));
    r->get("k", c.retrieval.k);
    if (r->has("use_rerank")) {
      bool rerank = true;
      r->get("use_rerank", rerank);
      c.retrieval.use_rerank = rerank;
    }
    r->get("multi_query", c.retrieval.multi_query);
    r->get("n_variants", c.retrieval.n_variants);
    r->get("ef_search", c.retrieval.ef_search);
    r->finish();
  }
  c.hnsw.ef_search = c.retrieval.ef_search;
  if (auto b = s.child("budget")) {
    b->get("max_prompt_tokens", c.budget.max_prompt_tokens);
    b->get("reserved_answer_tokens", c.budget.reserved_answer_tokens);
    b->finish();
  }
  if (auto p = s.child("prompt")) {
    p->get("system_text", c.prompt.system_text);
    p->get("body", c.prompt.body);
    if (const json* shots = p->find("shots")) {
      if (!shots->is_array()) invalid(p->field("shots"), "must be an array");
      c.prompt.shots.clear();
      for (std::size_t i = 0; i < shots->size(); ++i) {
        Section shot((*shots)[i], p->field("shots") + "[" + std::to_string(i) + "]");
        ShotExample ex;
        shot.get("input", ex.input);
        shot.get("output", ex.output);
        shot.finish();
        c.prompt.shots.push_back(std::move(ex));
      }
    }
    p->finish();
  }
  s.finish();

  const std::string prefix = "collections." + name;
  validated(prefix + ".splitter", [&] { c.splitter.validate(); });
  validated(prefix, [&] { c.embedder.validate(); });
  validated(prefix, [&] { c.hnsw.validate(); });
  validated(prefix, [&] { c.retrieval.validate(); });
  validated(prefix, [&] { c.budget.validate(); });
  try {
    c.prompt.validate();
  } catch (const Error& e) {
    invalid(prefix + ".prompt.body", e.what());
  }
  return c;
}

ChatConfig parse_chat(Section& s) {
  ChatConfig c;
  std::string backend = "remote";
  s.get("backend", backend);
  if (backend == "remote") {
    c.backend = ChatBackend::Remote;
  } else if (backend == "mock") {
    c.backend = ChatBackend::Mock;
  } else {
    invalid(s.field("backend"), "must be \"remote\" or \"mock\"");
  }
  s.get("endpoint", c.endpoint);
  s.get("api_key_env", c.api_key_env);
  s.get("model", c.params.model);
  s.get("temperature", c.params.temperature);
  if (s.has("max_tokens")) {
    int max_tokens = 0;
    s.get("max_tokens", max_tokens);
    if (s.raw().at("max_tokens").is_number()) c.params.max_tokens = max_tokens;
  }
  s.get_seconds("timeout_s", c.params.timeout);
  s.get("max_attempts", c.retry.max_attempts);
  if (c.retry.max_attempts < 1) invalid(s.field("max_attempts"), "must be >= 1");
  s.get("history_turns", c.history_turns);
  if (auto m = s.child("mock")) {
    std::string fallback = "echo";
    m->get("fallback", fallback);
    if (fallback == "echo") {
      c.mock_fallback = MockFallback::Echo;
    } else if (fallback == "fixed") {
      c.mock_fallback = MockFallback::Fixed;
    } else {
      invalid(m->field("fallback"), "must be \"echo\" or \"fixed\"");
    }
    m->get("fixed_text", c.mock_fixed_text);
    if (const json* rules = m->find("rules")) {
      if (!rules->is_array()) invalid(m->field("rules"), "must be an array");
      for (std::size_t i = 0; i < rules->size(); ++i) {
        Section rule((*rules)[i], m->field("rules") + "[" + std::to_string(i) + "]");
        MockRule r;
        rule.get("match", r.substring);
        rule.get("response", r.response);
        rule.finish();
        if (r.substring.empty()) invalid(rule.field("match"), "must not be empty");
        c.mock_rules.push_back(std::move(r));
      }
    }
    m->finish();
  }
  s.finish();
  if (c.backend == ChatBackend::Remote) {
    if (c.endpoint.empty()) invalid(s.field("endpoint"), "is required for the remote backend");
    if (c.api_key_env.empty()) invalid(s.field("api_key_env"), "is required for the remote backend");
  }
  try {
    c.params.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::ValidationError, e.what());
  }
  return c;
}

ServiceConfig parse_service(Section& s) {
  ServiceConfig c;
  s.get("bind", c.bind);
  s.get("port", c.port);
  s.get("fetch_allowlist", c.fetch_allowlist);
  s.get("network_enabled", c.network_enabled);
  s.get("cors_origin", c.cors_origin);
  s.finish();
  if (c.port < 0 || c.port > 65535) invalid(s.field("port"), "must be in 0..65535");
  if (c.bind.empty()) invalid(s.field("bind"), "must not be empty");
  return c;
}

std::size_t line_of_offset(const std::string& text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + offset, '\n'));
}

std::string kind_name(EmbedderKind k) { return k == EmbedderKind::Remote ? "remote" : "local_hash"; }

}  // namespace

std::size_t load_env_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::FileNotFound, "env file not found: " + path.string());
  std::size_t set = 0;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    const std::string trimmed = text::trim(line);
    if (trimmed.empty() || trimmed.front() == '#') continue;
    const auto eq = trimmed.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::ParseError,
                  path.string() + ":" + std::to_string(line_no) + ": expected KEY=VALUE");
    }
    const std::string key = text::trim(trimmed.substr(0, eq));
    const std::string value = text::trim(trimmed.substr(eq + 1));
    if (key.empty()) {
      throw Error(ErrorCode::ParseError,
                  path.string() + ":" + std::to_string(line_no) + ": empty variable name");
    }
    if (std::getenv(key.c_str()) == nullptr) {
      ::setenv(key.c_str(), value.c_str(), 0);
      ++set;
    }
  }
  return set;
}

AppConfig parse_config(const std::string& json_text, const std::filesystem::path& base_dir) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError, "config line " +
                                           std::to_string(line_of_offset(json_text, e.byte)) +
                                           ": " + e.what());
  }
  Section top(root, "");
  AppConfig cfg;
  if (const json* cols = top.find("collections")) {
    if (!cols->is_object() || cols->empty()) {
      invalid("collections", "must be a non-empty object");
    }
    for (const auto& [name, body] : cols->items()) {
      if (name.empty()) invalid("collections", "collection names must not be empty");
      Section s(body, "collections." + name);
      cfg.collections.emplace(name, parse_collection(name, s, base_dir));
    }
  } else {
    invalid("collections", "is required");
  }
  if (auto chat = top.child("chat")) {
    cfg.chat = parse_chat(*chat);
  }
  if (auto service = top.child("service")) {
    cfg.service = parse_service(*service);
  }
  top.finish();

  std::map<std::filesystem::path, std::string> paths;
  for (const auto& [name, c] : cfg.collections) {
    auto [it, fresh] = paths.emplace(c.store_path, name);
    if (!fresh) {
      invalid("collections." + name + ".store_path", "is also used by collection " + it->second);
    }
  }
  return cfg;
}

std::vector<std::string> required_secrets(const AppConfig& cfg) {
  std::vector<std::string> out;
  for (const auto& [name, c] : cfg.collections) {
    if (c.embedder.kind == EmbedderKind::Remote) out.push_back(c.embedder.api_key_ref);
  }
  if (cfg.chat.backend == ChatBackend::Remote) out.push_back(cfg.chat.api_key_env);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

AppConfig load_config(const std::filesystem::path& config_path,
                      const std::optional<std::filesystem::path>& env_file) {
  if (env_file) load_env_file(*env_file);
  std::ifstream in(config_path, std::ios::binary);
  if (!in) throw Error(ErrorCode::FileNotFound, "config file not found: " + config_path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  const auto base = std::filesystem::absolute(config_path).parent_path();
  AppConfig cfg = parse_config(buf.str(), base);
  for (const auto& var : required_secrets(cfg)) {
    const char* v = std::getenv(var.c_str());
    if (v == nullptr || *v == '\0') {
      throw Error(ErrorCode::MissingSecret, "environment variable " + var + " is not set");
    }
  }
  log::logger()->debug("loaded config {} with {} collection(s)", config_path.string(),
                       cfg.collections.size());
  return cfg;
}

std::string serialize_config(const AppConfig& cfg) {
  json root;
  auto& cols = root["collections"] = json::object();
  for (const auto& [name, c] : cfg.collections) {
    json col;
    col["store_path"] = c.store_path.string();
    col["splitter"] = {{"chunk_size", c.splitter.chunk_size},
                       {"chunk_overlap", c.splitter.chunk_overlap},
                       {"separators", c.splitter.separators}};
    json emb = {{"kind", kind_name(c.embedder.kind)},
                {"batch_size", c.embedder.batch_size},
                {"max_in_flight", c.embedder.max_in_flight},
                {"timeout_s", c.embedder.timeout.count() / 1000.0}};
    if (c.embedder.kind == EmbedderKind::LocalHash) {
      emb["dim"] = c.embedder.dim;
      emb["ngram_range"] = {c.embedder.ngram_min, c.embedder.ngram_max};
    } else {
      emb["endpoint"] = c.embedder.endpoint;
      emb["model"] = c.embedder.model;
      emb["api_key_env"] = c.embedder.api_key_ref;
    }
    col["embedder"] = emb;
    col["hnsw"] = {{"m", c.hnsw.m}, {"ef_construction", c.hnsw.ef_construction},
                   {"seed", c.hnsw.seed}};
    col["retrieval"] = {{"k", c.retrieval.k},
                        {"mode", std::string(to_string(c.retrieval.mode))},
                        {"use_rerank", c.retrieval.rerank_enabled()},
                        {"multi_query", c.retrieval.multi_query},
                        {"n_variants", c.retrieval.n_variants},
                        {"ef_search", c.retrieval.ef_search}};
    col["budget"] = {{"max_prompt_tokens", c.budget.max_prompt_tokens},
                     {"reserved_answer_tokens", c.budget.reserved_answer_tokens}};
    json shots = json::array();
    for (const auto& s : c.prompt.shots) shots.push_back({{"input", s.input}, {"output", s.output}});
    col["prompt"] = {{"system_text", c.prompt.system_text}, {"body", c.prompt.body},
                     {"shots", shots}};
    cols[name] = col;
  }

  json chat = {{"backend", cfg.chat.backend == ChatBackend::Remote ? "remote" : "mock"},
               {"endpoint", cfg.chat.endpoint},
               {"api_key_env", cfg.chat.api_key_env},
               {"model", cfg.chat.params.model},
               {"temperature", cfg.chat.params.temperature},
               {"timeout_s", cfg.chat.params.timeout.count() / 1000.0},
               {"max_attempts", cfg.chat.retry.max_attempts},
               {"history_turns", cfg.chat.history_turns}};
  chat["max_tokens"] =
      cfg.chat.params.max_tokens ? json(*cfg.chat.params.max_tokens) : json(nullptr);
  json rules = json::array();
  for (const auto& r : cfg.chat.mock_rules) rules.push_back({{"match", r.substring}, {"response", r.response}});
  chat["mock"] = {{"fallback", cfg.chat.mock_fallback == MockFallback::Echo ? "echo" : "fixed"},
                  {"fixed_text", cfg.chat.mock_fixed_text},
                  {"rules", rules}};
  root["chat"] = chat;
  root["service"] = {{"bind", cfg.service.bind},
                     {"port", cfg.service.port},
                     {"fetch_allowlist", cfg.service.fetch_allowlist},
                     {"network_enabled", cfg.service.network_enabled},
                     {"cors_origin", cfg.service.cors_origin}};
  return root.dump(2);
}

std::unique_ptr<ChatClient> make_chat_client(const ChatConfig& cfg) {
  if (cfg.backend == ChatBackend::Mock) {
    return std::make_unique<MockChatClient>(cfg.mock_rules, cfg.mock_fallback,
                                            cfg.mock_fixed_text);
  }
  return std::make_unique<RemoteChatClient>(cfg.endpoint, cfg.api_key_env, cfg.retry);
}

}  // namespace ragsvc

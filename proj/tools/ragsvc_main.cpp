#include <CLI11.hpp>

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "ragsvc/engine.hpp"
#include "ragsvc/error.hpp"
#include "ragsvc/log.hpp"
#include "ragsvc/service.hpp"

using namespace ragsvc;

namespace {

constexpr int kOk = 0;
constexpr int kFailed = 1;
constexpr int kPartial = 2;

struct GlobalOptions {
  std::string config = "ragsvc.json";
  std::string env_file;
  bool verbose = false;
};

AppConfig load(const GlobalOptions& g) {
  std::optional<std::filesystem::path> env;
  if (!g.env_file.empty()) {
    env = g.env_file;
  } else if (std::filesystem::exists(".env")) {
    env = ".env";
  }
  return load_config(g.config, env);
}

void print_error(const Error& e) {
  std::cerr << "error: " << to_string(e.code());
  if (!e.stage().empty()) std::cerr << " [" << e.stage() << "]";
  std::cerr << ": " << e.what() << "\n";
}

std::string format_score(double s) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(4);
  out << s;
  return out.str();
}

void print_sources(const Answer& a, std::ostream& out) {
  out << "sources:\n";
  for (std::size_t i = 0; i < a.sources.size(); ++i) {
    const auto& s = a.sources[i];
    out << "  " << (i + 1) << ". " << s.source << " #" << s.seq << "  score "
        << format_score(s.score) << "\n";
  }
}

void print_warnings(const Answer& a) {
  for (const auto& w : a.warnings) std::cerr << "warning: " << w << "\n";
}

bool is_url(const std::string& s) { return s.rfind("http://", 0) == 0 || s.rfind("https://", 0) == 0; }

int cmd_ingest(const GlobalOptions& g, const std::string& collection,
               const std::vector<std::string>& sources) {
  Engine engine(load(g));
  std::size_t ok = 0;
  for (const auto& s : sources) {
    IngestSource src;
    src.kind = is_url(s) ? IngestSource::Kind::Url : IngestSource::Kind::Path;
    src.value = s;
    try {
      const auto r = engine.ingest(collection, src);
      const auto n = r.doc_ids.size();
      std::cout << s << ": " << n << (n == 1 ? " document, " : " documents, ") << r.chunk_count
                << (r.chunk_count == 1 ? " chunk" : " chunks") << "\n";
      ++ok;
    } catch (const Error& e) {
      if (e.code() == ErrorCode::NotFound) throw;
      std::cerr << s << ": ";
      print_error(e);
    }
  }
  if (ok == sources.size()) return kOk;
  return ok == 0 ? kFailed : kPartial;
}

int cmd_query(const GlobalOptions& g, const std::string& collection, const std::string& question,
              std::optional<std::size_t> k, bool multi_query, bool show_sources) {
  const Engine engine(load(g));
  QueryOptions opts;
  opts.k = k;
  if (multi_query) opts.multi_query = true;
  const Answer a = engine.query(collection, question, opts);
  print_warnings(a);
  std::cout << a.text << "\n";
  if (show_sources) print_sources(a, std::cout);
  return kOk;
}

int cmd_chat(const GlobalOptions& g, const std::string& collection) {
  const Engine engine(load(g));
  if (!engine.has_collection(collection)) {
    throw Error(ErrorCode::NotFound, "unknown collection '" + collection + "'");
  }
  std::vector<ChatMessage> history;
  bool show_sources = false;
  std::cout << "Ask a question. /sources toggles citations, /quit exits.\n";
  for (;;) {
    std::cout << "> " << std::flush;
    std::string line;
    if (!std::getline(std::cin, line)) break;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (line == "/quit") break;
    if (line == "/sources") {
      show_sources = !show_sources;
      std::cout << "sources " << (show_sources ? "on" : "off") << "\n";
      continue;
    }
    try {
      QueryOptions opts;
      opts.history = history;
      const Answer a = engine.query(collection, line, opts);
      print_warnings(a);
      std::cout << a.text << "\n";
      if (show_sources) print_sources(a, std::cout);
      history.push_back({"user", line});
      history.push_back({"assistant", a.text});
    } catch (const Error& e) {
      print_error(e);
    }
  }
  return kOk;
}

Service* g_service = nullptr;

void handle_signal(int) {
  if (g_service != nullptr) g_service->stop();
}

int cmd_serve(const GlobalOptions& g, std::optional<int> port) {
  AppConfig cfg = load(g);
  if (port) cfg.service.port = *port;
  Engine engine(cfg);
  Service service(engine, cfg.service);
  const int bound = service.bind();
  std::cout << "serving on http://" << cfg.service.bind << ":" << bound << std::endl;
  g_service = &service;
  std::signal(SIGINT, handle_signal);
  std::signal(SIGTERM, handle_signal);
  service.listen();
  g_service = nullptr;
  return kOk;
}

bool cites(const Answer& a, const std::string& expected) {
  for (const auto& s : a.sources) {
    if (s.source == expected) return true;
    if (s.source.size() > expected.size() &&
        s.source.compare(s.source.size() - expected.size(), expected.size(), expected) == 0 &&
        s.source[s.source.size() - expected.size() - 1] == '/') {
      return true;
    }
  }
  return false;
}

int cmd_eval(const GlobalOptions& g, const std::string& collection, const std::string& fixture,
             const std::string& out_path) {
  std::ifstream in(fixture, std::ios::binary);
  if (!in) throw Error(ErrorCode::FileNotFound, "fixture not found: " + fixture);
  nlohmann::json cases;
  try {
    cases = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, fixture + ": " + e.what());
  }
  if (!cases.is_array()) throw Error(ErrorCode::ParseError, fixture + ": expected a JSON array");

  const Engine engine(load(g));
  std::size_t passed = 0;
  nlohmann::json results = nlohmann::json::array();
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto& c = cases[i];
    if (!c.is_object() || !c.contains("question") || !c.contains("expected_source") ||
        !c["question"].is_string() || !c["expected_source"].is_string()) {
      throw Error(ErrorCode::ParseError,
                  fixture + ": case " + std::to_string(i) + " needs question and expected_source");
    }
    const auto question = c["question"].get<std::string>();
    const auto expected = c["expected_source"].get<std::string>();
    nlohmann::json r = {{"question", question}, {"expected_source", expected}};
    bool ok = false;
    try {
      const Answer a = engine.query(collection, question);
      ok = cites(a, expected);
      nlohmann::json cited = nlohmann::json::array();
      for (const auto& s : a.sources) cited.push_back(s.source);
      r["cited"] = cited;
    } catch (const Error& e) {
      if (e.code() == ErrorCode::NotFound) throw;
      r["error"] = e.what();
    }
    r["pass"] = ok;
    passed += ok;
    std::cout << (ok ? "PASS " : "FAIL ") << question << "\n";
    results.push_back(std::move(r));
  }
  const double pct =
      cases.empty() ? 100.0 : 100.0 * static_cast<double>(passed) / static_cast<double>(cases.size());
  std::ostringstream pct_text;
  pct_text.setf(std::ios::fixed);
  pct_text.precision(1);
  pct_text << pct;
  std::cout << "citation accuracy: " << pct_text.str() << "% (" << passed << "/" << cases.size()
            << " cases)\n";
  if (!out_path.empty()) {
    nlohmann::json report = {{"collection", collection},
                             {"cases", cases.size()},
                             {"passed", passed},
                             {"accuracy_pct", pct},
                             {"results", results}};
    std::ofstream out(out_path, std::ios::binary);
    out << report.dump(2) << "\n";
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + out_path);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ragsvc: retrieval-augmented question answering over local collections"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--config", g.config, "Config file (JSON)")->capture_default_str();
  app.add_option("--env-file", g.env_file, "KEY=VALUE file loaded before the config (default .env if present)");
  app.add_flag("-v,--verbose", g.verbose, "Debug logging on stderr");
  app.fallthrough();

  std::string collection;
  std::vector<std::string> sources;
  std::string question;
  std::optional<std::size_t> k;
  bool multi_query = false;
  bool show_sources = false;
  std::optional<int> port;
  std::string fixture;
  std::string out_path;

  auto* ingest = app.add_subcommand("ingest", "Load, split, embed and store documents");
  ingest->add_option("collection", collection)->required();
  ingest->add_option("sources", sources, "File paths or http(s) URLs")->required();

  auto* query = app.add_subcommand("query", "Answer one question");
  query->add_option("collection", collection)->required();
  query->add_option("question", question)->required();
  query->add_option("--k", k, "Chunks to retrieve (default from config, 4)")
      ->check(CLI::PositiveNumber);
  query->add_flag("--multi-query", multi_query, "Also retrieve for model-generated rephrasings");
  query->add_flag("--show-sources", show_sources, "Print the cited chunks");

  auto* chat = app.add_subcommand("chat", "Interactive question answering with history");
  chat->add_option("collection", collection)->required();

  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  serve->add_option("--port", port, "Override service.port");

  auto* eval = app.add_subcommand("eval", "Measure citation accuracy on a fixture file");
  eval->add_option("collection", collection)->required();
  eval->add_option("fixture", fixture, "JSON array of {question, expected_source}")->required();
  eval->add_option("--out", out_path, "Write a JSON report here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kFailed;
  }

  auto logger = log::logger();
  logger->set_level(g.verbose ? spdlog::level::debug : spdlog::level::warn);

  try {
    if (*ingest) return cmd_ingest(g, collection, sources);
    if (*query) return cmd_query(g, collection, question, k, multi_query, show_sources);
    if (*chat) return cmd_chat(g, collection);
    if (*serve) return cmd_serve(g, port);
    if (*eval) return cmd_eval(g, collection, fixture, out_path);
  } catch (const Error& e) {
    print_error(e);
    return kFailed;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailed;
  }
  return kFailed;
}

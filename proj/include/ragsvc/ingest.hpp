#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace ragsvc {

using Metadata = std::map<std::string, std::string>;

/// A loaded source. `metadata` always carries "source".
struct Document {
  std::string id;
  std::string text;
  Metadata metadata;
  std::size_t char_count = 0;
};

/// Builds a Document whose id is derived from `metadata["source"]` (plus
/// `id_salt` for multi-record sources) and whose char_count matches `text`.
Document make_document(std::string text, Metadata metadata,
                       std::string_view id_salt = {});

/// Stable document id for a source string.
std::string document_id_for(std::string_view source, std::string_view salt = {});

Document load_text(const std::filesystem::path& path);

/// Visible text of an HTML page. Never throws.
Document load_html(std::string_view html, std::string source);

/// The text half of load_html, exposed for reuse by fetch_web.
std::string extract_html_text(std::string_view html, std::string* title = nullptr);

struct FetchOptions {
  std::chrono::milliseconds timeout{30'000};
  int max_redirects = 5;
  /// Hosts permitted for fetching. Empty means any host.
  std::vector<std::string> allowlist;
  bool network_enabled = true;
  std::string user_agent = "ragsvc-webloader/1.0 (+document ingestion)";
};

Document fetch_web(const std::string& url, const FetchOptions& options = {});

enum class StructuredFormat { Delimited, RecordList };

/// One Document per CSV row (header required) or per JSON array element.
std::vector<Document> load_structured(const std::filesystem::path& path,
                                      StructuredFormat format);

/// Extension point for binary formats (PDF, DOCX, ...). Loaders are keyed by
/// lowercase file extension including the dot.
class LoaderRegistry {
 public:
  using Loader = std::function<std::vector<Document>(const std::filesystem::path&)>;

  /// Registry preloaded with .txt/.md/.html/.htm/.csv/.json loaders; any other
  /// extension falls back to load_text.
  static LoaderRegistry with_defaults();

  void register_loader(std::string extension, Loader loader);
  std::vector<Document> load(const std::filesystem::path& path) const;

 private:
  std::map<std::string, Loader> loaders_;
};

}  // namespace ragsvc

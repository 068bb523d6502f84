#include "ragsvc/ingest.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "ragsvc/error.hpp"
#include "ragsvc/http.hpp"
#include "ragsvc/log.hpp"
#include "ragsvc/text.hpp"

namespace ragsvc {
namespace {

std::string read_file_bytes(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) {
    throw Error(ErrorCode::FileNotFound, "no such file: " + path.string());
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::FileNotFound, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string decode_text_file(const std::filesystem::path& path) {
  std::string bytes = read_file_bytes(path);
  if (bytes.size() >= 3 && bytes.compare(0, 3, "\xEF\xBB\xBF") == 0) {
    bytes.erase(0, 3);
  }
  if (!text::is_valid_utf8(bytes)) {
    try {
      text::decode_utf8(bytes);
    } catch (const Error& e) {
      throw Error(ErrorCode::DecodeError, path.string() + ": " + e.what());
    }
  }
  return text::normalize_newlines(bytes);
}

std::string lower_ascii(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

// ---- HTML -----------------------------------------------------------------

const std::unordered_set<std::string>& block_tags() {
  static const std::unordered_set<std::string> tags = {
      "p", "div", "br", "li", "h1", "h2", "h3", "h4", "h5", "h6",
      "tr", "section", "article"};
  return tags;
}

bool is_raw_text_tag(const std::string& name) {
  return name == "script" || name == "style" || name == "title" ||
         name == "template" || name == "noscript";
}

void append_codepoint(std::string& out, char32_t cp) {
  out += text::encode_utf8(std::u32string_view(&cp, 1));
}

// Decodes the entity starting at html[i] == '&'. On success appends the
// decoded text and returns the index past the entity.
std::size_t decode_entity(std::string_view html, std::size_t i, std::string& out) {
  static const std::pair<std::string_view, char32_t> named[] = {
      {"amp", U'&'},     {"lt", U'<'},      {"gt", U'>'},      {"quot", U'"'},
      {"apos", U'\''},   {"nbsp", 0xA0},    {"ndash", 0x2013}, {"mdash", 0x2014},
      {"lsquo", 0x2018}, {"rsquo", 0x2019}, {"ldquo", 0x201C}, {"rdquo", 0x201D},
      {"hellip", 0x2026}, {"copy", 0xA9},   {"reg", 0xAE},     {"trade", 0x2122},
      {"middot", 0xB7},  {"bull", 0x2022},  {"euro", 0x20AC}};
  const auto semi = html.find(';', i);
  if (semi == std::string_view::npos || semi - i > 12) {
    out.push_back('&');
    return i + 1;
  }
  const auto body = html.substr(i + 1, semi - i - 1);
  if (!body.empty() && body[0] == '#') {
    char32_t cp = 0;
    bool ok = body.size() > 1;
    const bool hex = body.size() > 1 && (body[1] == 'x' || body[1] == 'X');
    for (std::size_t k = hex ? 2 : 1; ok && k < body.size(); ++k) {
      const char c = body[k];
      int digit = -1;
      if (c >= '0' && c <= '9') digit = c - '0';
      else if (hex && c >= 'a' && c <= 'f') digit = c - 'a' + 10;
      else if (hex && c >= 'A' && c <= 'F') digit = c - 'A' + 10;
      if (digit < 0 || cp > 0x10FFFF) ok = false;
      else cp = cp * (hex ? 16 : 10) + digit;
    }
    if (hex && body.size() == 2) ok = false;
    if (ok && cp > 0 && cp <= 0x10FFFF && !(cp >= 0xD800 && cp <= 0xDFFF)) {
      append_codepoint(out, cp);
      return semi + 1;
    }
  } else {
    for (const auto& [name, cp] : named) {
      if (body == name) {
        append_codepoint(out, cp);
        return semi + 1;
      }
    }
  }
  out.push_back('&');
  return i + 1;
}

std::size_t find_ci(std::string_view hay, std::string_view needle, std::size_t from) {
  for (std::size_t i = from; i + needle.size() <= hay.size(); ++i) {
    bool match = true;
    for (std::size_t k = 0; k < needle.size() && match; ++k) {
      match = std::tolower(static_cast<unsigned char>(hay[i + k])) ==
              std::tolower(static_cast<unsigned char>(needle[k]));
    }
    if (match) return i;
  }
  return std::string_view::npos;
}

// Index just past the '>' closing the tag that starts at `i`, honoring quoted
// attribute values.
std::size_t skip_tag(std::string_view html, std::size_t i) {
  char quote = 0;
  for (std::size_t k = i + 1; k < html.size(); ++k) {
    const char c = html[k];
    if (quote) {
      if (c == quote) quote = 0;
    } else if (c == '"' || c == '\'') {
      quote = c;
    } else if (c == '>') {
      return k + 1;
    }
  }
  return html.size();
}

std::string collapse_lines(const std::string& raw) {
  const std::u32string chars = text::decode_utf8(raw);
  std::u32string out;
  std::u32string line;
  bool pending_space = false;
  auto flush_line = [&] {
    if (!line.empty()) {
      if (!out.empty()) out.push_back(U'\n');
      out += line;
    }
    line.clear();
    pending_space = false;
  };
  for (char32_t c : chars) {
    if (c == U'\n') {
      flush_line();
    } else if (text::is_space(c)) {
      pending_space = !line.empty();
    } else {
      if (pending_space) line.push_back(U' ');
      pending_space = false;
      line.push_back(c);
    }
  }
  flush_line();
  return text::encode_utf8(out);
}

// ---- CSV --------------------------------------------------------------------

struct CsvRow {
  std::vector<std::string> fields;
  std::size_t line = 0;
};

std::vector<CsvRow> parse_csv(const std::string& data, const std::string& where) {
  std::vector<CsvRow> rows;
  CsvRow row;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t line = 1;
  row.line = 1;
  auto end_field = [&] {
    row.fields.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    const bool blank = row.fields.size() == 1 && text::trim(row.fields[0]).empty();
    if (!blank) rows.push_back(std::move(row));
    row = CsvRow{};
    row.line = line;
  };
  for (std::size_t i = 0; i < data.size(); ++i) {
    const char c = data[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < data.size() && data[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      if (field_started && !text::trim(field).empty()) {
        throw Error(ErrorCode::ParseError,
                    where + ":" + std::to_string(line) + ": stray quote inside field");
      }
      field.clear();
      in_quotes = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\n') {
      ++line;
      end_row();
    } else {
      field.push_back(c);
      field_started = true;
    }
  }
  if (in_quotes) {
    throw Error(ErrorCode::ParseError,
                where + ":" + std::to_string(row.line) + ": unterminated quoted field");
  }
  if (!field.empty() || !row.fields.empty()) end_row();
  return rows;
}

std::string json_scalar_text(const nlohmann::ordered_json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_null()) return "";
  return v.dump();
}

}  // namespace

std::string document_id_for(std::string_view source, std::string_view salt) {
  std::uint64_t h = text::fnv1a64(source);
  if (!salt.empty()) h = text::fnv1a64(salt, h ^ 0x9e3779b97f4a7c15ULL);
  char buf[24];
  std::snprintf(buf, sizeof buf, "doc-%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Document make_document(std::string text, Metadata metadata, std::string_view id_salt) {
  Document doc;
  if (!metadata.contains("source")) metadata["source"] = "inline";
  doc.id = document_id_for(metadata["source"], id_salt);
  doc.char_count = text::char_count(text);
  doc.text = std::move(text);
  doc.metadata = std::move(metadata);
  return doc;
}

Document load_text(const std::filesystem::path& path) {
  std::string content = decode_text_file(path);
  return make_document(std::move(content),
                       {{"source", path.string()}, {"content_type", "text/plain"}});
}

std::string extract_html_text(std::string_view html, std::string* title) {
  std::string raw;
  raw.reserve(html.size());
  std::size_t i = 0;
  while (i < html.size()) {
    const char c = html[i];
    if (c == '&') {
      i = decode_entity(html, i, raw);
      continue;
    }
    if (c != '<' || i + 1 >= html.size()) {
      // Source line breaks are ordinary whitespace; only block tags break lines.
      raw.push_back(c == '\n' || c == '\r' ? ' ' : c);
      ++i;
      continue;
    }
    const char next = html[i + 1];
    if (html.compare(i, 4, "<!--") == 0) {
      const auto end = html.find("-->", i + 4);
      i = end == std::string_view::npos ? html.size() : end + 3;
      continue;
    }
    if (next == '!' || next == '?') {
      i = skip_tag(html, i);
      continue;
    }
    const bool closing = next == '/';
    const std::size_t name_start = i + (closing ? 2 : 1);
    std::size_t name_end = name_start;
    while (name_end < html.size() &&
           std::isalnum(static_cast<unsigned char>(html[name_end]))) {
      ++name_end;
    }
    if (name_end == name_start ||
        !std::isalpha(static_cast<unsigned char>(html[name_start]))) {
      // Not a tag: a literal '<' in text.
      raw.push_back(c);
      ++i;
      continue;
    }
    const std::string name =
        lower_ascii(std::string(html.substr(name_start, name_end - name_start)));
    const std::size_t tag_end = skip_tag(html, i);
    const bool self_closing = tag_end >= 2 && html[tag_end - 2] == '/';
    i = tag_end;
    if (block_tags().contains(name)) raw.push_back('\n');
    if (!closing && !self_closing && is_raw_text_tag(name)) {
      const auto close = find_ci(html, "</" + name, i);
      const std::size_t content_end = close == std::string_view::npos ? html.size() : close;
      if (name == "title" && title != nullptr) {
        std::string t;
        const auto inner = html.substr(i, content_end - i);
        for (std::size_t k = 0; k < inner.size();) {
          if (inner[k] == '&') {
            k = decode_entity(inner, k, t);
          } else {
            t.push_back(inner[k++]);
          }
        }
        if (text::is_valid_utf8(t)) *title = collapse_lines(t);
      }
      i = close == std::string_view::npos ? html.size() : skip_tag(html, close);
    }
  }
  if (!text::is_valid_utf8(raw)) {
    // Best effort: drop undecodable bytes.
    std::string cleaned;
    for (std::size_t k = 0; k < raw.size(); ++k) {
      const auto b = static_cast<unsigned char>(raw[k]);
      if (b < 0x80) cleaned.push_back(raw[k]);
      else {
        std::size_t len = (b & 0xE0) == 0xC0 ? 2 : (b & 0xF0) == 0xE0 ? 3
                          : (b & 0xF8) == 0xF0 ? 4 : 0;
        if (len && k + len <= raw.size() &&
            text::is_valid_utf8(std::string_view(raw).substr(k, len))) {
          cleaned.append(raw, k, len);
          k += len - 1;
        }
      }
    }
    raw.swap(cleaned);
  }
  return collapse_lines(raw);
}

Document load_html(std::string_view html, std::string source) {
  std::string title;
  std::string body = extract_html_text(html, &title);
  Metadata md{{"source", std::move(source)}, {"content_type", "text/html"}};
  if (!title.empty()) md["title"] = title;
  return make_document(std::move(body), std::move(md));
}

Document fetch_web(const std::string& url, const FetchOptions& options) {
  if (!options.network_enabled) {
    throw Error(ErrorCode::NetworkError, "network access disabled by configuration");
  }
  std::string current = url;
  for (int hop = 0;; ++hop) {
    const http::Url parsed = http::parse_url(current);
    if (!options.allowlist.empty() &&
        std::find(options.allowlist.begin(), options.allowlist.end(), parsed.host) ==
            options.allowlist.end()) {
      throw Error(ErrorCode::NetworkError, "host not in fetch allowlist: " + parsed.host);
    }
    http::Request req;
    req.url = current;
    req.timeout = options.timeout;
    req.headers = {{"User-Agent", options.user_agent},
                   {"Accept", "text/html,text/plain;q=0.9,*/*;q=0.1"}};
    const http::Response res = http::send(req);
    if (res.status >= 300 && res.status < 400 && !res.location.empty()) {
      if (hop >= options.max_redirects) {
        throw Error(ErrorCode::NetworkError, "too many redirects fetching " + url,
                    res.status);
      }
      if (res.location.find("://") != std::string::npos) {
        current = res.location;
      } else if (!res.location.empty() && res.location.front() == '/') {
        current = parsed.scheme + "://" + parsed.host + ":" +
                  std::to_string(parsed.port) + res.location;
      } else {
        const auto slash = parsed.path.rfind('/');
        current = parsed.scheme + "://" + parsed.host + ":" +
                  std::to_string(parsed.port) + parsed.path.substr(0, slash + 1) +
                  res.location;
      }
      continue;
    }
    if (res.status < 200 || res.status >= 300) {
      throw Error(ErrorCode::NetworkError,
                  "GET " + current + " returned HTTP " + std::to_string(res.status),
                  res.status);
    }
    const std::string type = lower_ascii(res.content_type);
    const bool is_html = type.empty() || type.find("html") != std::string::npos;
    const bool is_text = type.rfind("text/", 0) == 0 || type.find("xml") != std::string::npos;
    if (!is_html && !is_text) {
      throw Error(ErrorCode::ContentTypeError,
                  "non-text response (" + res.content_type + ") from " + current);
    }
    log::logger()->info("fetched {} ({} bytes)", current, res.body.size());
    if (is_html) {
      Document doc = load_html(res.body, current);
      return doc;
    }
    std::string body = res.body;
    if (!text::is_valid_utf8(body)) {
      throw Error(ErrorCode::DecodeError, "response from " + current + " is not UTF-8");
    }
    return make_document(text::normalize_newlines(body),
                         {{"source", current}, {"content_type", "text/plain"}});
  }
}

std::vector<Document> load_structured(const std::filesystem::path& path,
                                      StructuredFormat format) {
  const std::string data = decode_text_file(path);
  const std::string where = path.string();
  std::vector<Document> docs;

  if (format == StructuredFormat::Delimited) {
    const auto rows = parse_csv(data, where);
    if (rows.empty()) return docs;
    const auto& header = rows.front().fields;
    for (std::size_t r = 1; r < rows.size(); ++r) {
      const auto& row = rows[r];
      if (row.fields.size() != header.size()) {
        throw Error(ErrorCode::ParseError,
                    where + ":" + std::to_string(row.line) + ": expected " +
                        std::to_string(header.size()) + " fields, found " +
                        std::to_string(row.fields.size()));
      }
      std::string body;
      for (std::size_t f = 0; f < header.size(); ++f) {
        if (f) body += '\n';
        body += text::trim(header[f]) + ": " + row.fields[f];
      }
      const std::string index = std::to_string(r - 1);
      docs.push_back(make_document(
          std::move(body),
          {{"source", where}, {"row", index}, {"content_type", "text/csv"}},
          "row:" + index));
    }
    return docs;
  }

  nlohmann::ordered_json parsed;
  try {
    parsed = nlohmann::ordered_json::parse(data);
  } catch (const nlohmann::json::parse_error& e) {
    const std::size_t offset = std::min<std::size_t>(e.byte, data.size());
    const auto line = 1 + std::count(data.begin(), data.begin() + offset, '\n');
    throw Error(ErrorCode::ParseError, where + ":" + std::to_string(line) + ": " + e.what());
  }
  if (!parsed.is_array()) {
    throw Error(ErrorCode::ParseError, where + ": expected a JSON array of records");
  }
  for (std::size_t r = 0; r < parsed.size(); ++r) {
    const auto& record = parsed[r];
    if (!record.is_object()) {
      throw Error(ErrorCode::ParseError,
                  where + ": record " + std::to_string(r) + " is not an object");
    }
    std::string body;
    for (const auto& [key, value] : record.items()) {
      if (!body.empty()) body += '\n';
      body += key + ": " + json_scalar_text(value);
    }
    const std::string index = std::to_string(r);
    docs.push_back(make_document(
        std::move(body),
        {{"source", where}, {"row", index}, {"content_type", "application/json"}},
        "row:" + index));
  }
  return docs;
}

LoaderRegistry LoaderRegistry::with_defaults() {
  LoaderRegistry reg;
  auto text_loader = [](const std::filesystem::path& p) {
    return std::vector<Document>{load_text(p)};
  };
  auto html_loader = [](const std::filesystem::path& p) {
    return std::vector<Document>{load_html(decode_text_file(p), p.string())};
  };
  reg.register_loader(".txt", text_loader);
  reg.register_loader(".md", text_loader);
  reg.register_loader(".html", html_loader);
  reg.register_loader(".htm", html_loader);
  reg.register_loader(".csv", [](const std::filesystem::path& p) {
    return load_structured(p, StructuredFormat::Delimited);
  });
  reg.register_loader(".json", [](const std::filesystem::path& p) {
    return load_structured(p, StructuredFormat::RecordList);
  });
  return reg;
}

void LoaderRegistry::register_loader(std::string extension, Loader loader) {
  loaders_[lower_ascii(std::move(extension))] = std::move(loader);
}

std::vector<Document> LoaderRegistry::load(const std::filesystem::path& path) const {
  const auto it = loaders_.find(lower_ascii(path.extension().string()));
  if (it != loaders_.end()) return it->second(path);
  return {load_text(path)};
}

}  // namespace ragsvc

#include "ragsvc/chunker.hpp"

#include "ragsvc/error.hpp"
#include "ragsvc/text.hpp"

namespace ragsvc {
namespace {

class Splitter {
 public:
  Splitter(const SplitConfig& cfg) : cfg_(cfg) {
    for (const auto& s : cfg.separators) separators_.push_back(text::decode_utf8(s));
  }

  std::vector<std::pair<std::u32string, std::size_t>> run(const std::u32string& input) {
    split_recursive(input, 0);
    return std::move(out_);
  }

 private:
  // Room for new content in the next chunk, after reserving space for the
  // overlap prefix carried over from the previous one.
  std::size_t limit() const {
    if (out_.empty()) return cfg_.chunk_size;
    return cfg_.chunk_size - std::min(cfg_.chunk_overlap, out_.back().first.size());
  }

  void emit(const std::u32string& piece) {
    std::u32string content = text::trim(piece);
    if (content.empty()) return;
    std::u32string prefix;
    if (!out_.empty() && cfg_.chunk_overlap > 0) {
      const auto& prev = out_.back().first;
      const std::size_t n = std::min(cfg_.chunk_overlap, prev.size());
      prefix = prev.substr(prev.size() - n);
      std::size_t lead = 0;
      while (lead < prefix.size() && text::is_space(prefix[lead])) ++lead;
      prefix.erase(0, lead);
    }
    const std::size_t overlap = prefix.size();
    out_.emplace_back(prefix + content, overlap);
  }

  void split_recursive(std::u32string_view input, std::size_t sep_index) {
    // First separator at or after sep_index that occurs in the input; the
    // validated config guarantees a trailing "".
    std::size_t idx = sep_index;
    while (idx + 1 < separators_.size() && !separators_[idx].empty() &&
           input.find(separators_[idx]) == std::u32string_view::npos) {
      ++idx;
    }
    const std::u32string& sep = separators_[idx];

    std::vector<std::u32string_view> pieces;
    if (sep.empty()) {
      for (std::size_t i = 0; i < input.size(); ++i) pieces.push_back(input.substr(i, 1));
    } else {
      std::size_t start = 0;
      while (true) {
        const auto pos = input.find(sep, start);
        const auto piece = input.substr(start, pos == std::u32string_view::npos
                                                   ? std::u32string_view::npos
                                                   : pos - start);
        if (!piece.empty()) pieces.push_back(piece);
        if (pos == std::u32string_view::npos) break;
        start = pos + sep.size();
      }
    }

    std::u32string current;
    for (const auto piece : pieces) {
      if (!current.empty()) {
        if (current.size() + sep.size() + piece.size() <= limit()) {
          current += sep;
          current += piece;
          continue;
        }
        emit(current);
        current.clear();
      }
      if (piece.size() <= limit()) {
        current.assign(piece);
      } else {
        split_recursive(piece, idx + 1);
      }
    }
    if (!current.empty()) emit(current);
  }

  const SplitConfig& cfg_;
  std::vector<std::u32string> separators_;
  std::vector<std::pair<std::u32string, std::size_t>> out_;
};

}  // namespace

void SplitConfig::validate() const {
  if (chunk_size == 0) throw Error(ErrorCode::InvalidConfig, "chunk_size must be > 0");
  if (chunk_overlap >= chunk_size) {
    throw Error(ErrorCode::InvalidConfig, "chunk_overlap must be < chunk_size");
  }
  if (separators.empty() || !separators.back().empty()) {
    throw Error(ErrorCode::InvalidConfig,
                "separators must be non-empty and end with \"\"");
  }
  for (const auto& s : separators) {
    if (!text::is_valid_utf8(s)) {
      throw Error(ErrorCode::InvalidConfig, "separator is not valid UTF-8");
    }
  }
}

std::string chunk_id_for(const std::string& doc_id, std::size_t seq) {
  return doc_id + "#" + std::to_string(seq);
}

std::vector<std::pair<std::string, std::size_t>> split_text(const std::string& input,
                                                            const SplitConfig& cfg) {
  cfg.validate();
  std::vector<std::pair<std::string, std::size_t>> out;
  if (input.empty()) return out;
  Splitter splitter(cfg);
  for (auto& [chunk, overlap] : splitter.run(text::decode_utf8(input))) {
    out.emplace_back(text::encode_utf8(chunk), overlap);
  }
  return out;
}

std::vector<Chunk> split(const Document& doc, const SplitConfig& cfg) {
  std::vector<Chunk> chunks;
  auto pieces = split_text(doc.text, cfg);
  chunks.reserve(pieces.size());
  for (std::size_t seq = 0; seq < pieces.size(); ++seq) {
    Chunk c;
    c.doc_id = doc.id;
    c.seq = seq;
    c.id = chunk_id_for(doc.id, seq);
    c.text = std::move(pieces[seq].first);
    c.overlap = pieces[seq].second;
    c.metadata = doc.metadata;
    c.metadata["seq"] = std::to_string(seq);
    chunks.push_back(std::move(c));
  }
  return chunks;
}

}  // namespace ragsvc

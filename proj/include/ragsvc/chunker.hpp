#pragma once

#include <string>
#include <vector>

#include "ragsvc/ingest.hpp"

namespace ragsvc {

/// A retrievable fragment of a Document. `overlap` is the number of leading
/// characters repeated from the predecessor chunk (0 for the first chunk and
/// whenever chunk_overlap is 0).
struct Chunk {
  std::string id;
  std::string doc_id;
  std::size_t seq = 0;
  std::string text;
  Metadata metadata;
  std::size_t overlap = 0;
};

/// Sizes are in Unicode scalar values.
struct SplitConfig {
  std::size_t chunk_size = 500;
  std::size_t chunk_overlap = 0;
  std::vector<std::string> separators{"\n\n", "\n", " ", ""};

  /// Throws Error{InvalidConfig}.
  void validate() const;
};

std::string chunk_id_for(const std::string& doc_id, std::size_t seq);

/// Recursive separator-hierarchy splitting. Every chunk is at most
/// chunk_size characters, trimmed, and non-empty.
std::vector<Chunk> split(const Document& doc, const SplitConfig& cfg);

/// The same algorithm over bare text, for callers that do not need Chunk
/// records. Returns (text, overlap) pairs.
std::vector<std::pair<std::string, std::size_t>> split_text(const std::string& text,
                                                            const SplitConfig& cfg);

}  // namespace ragsvc

#pragma once

// UTF-8 helpers shared by the loaders, the chunker and the embedders.

#include <cstdint>
#include <string>
#include <string_view>

namespace ragsvc::text {

/// Decodes UTF-8. Throws Error{DecodeError} on malformed input, overlong
/// encodings or surrogate code points.
std::u32string decode_utf8(std::string_view bytes);

std::string encode_utf8(std::u32string_view text);

bool is_valid_utf8(std::string_view bytes);

/// Number of Unicode scalar values; input must be valid UTF-8.
std::size_t char_count(std::string_view utf8);

bool is_space(char32_t c);

std::u32string trim(std::u32string_view s);
std::string trim(std::string_view s);

/// ASCII-only lowercase; other code points pass through unchanged.
char32_t ascii_lower(char32_t c);

/// CRLF and lone CR become LF.
std::string normalize_newlines(std::string_view s);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes,
                      std::uint64_t basis = 0xcbf29ce484222325ULL);

}  // namespace ragsvc::text

#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace hce::utf8 {

/// Decodes UTF-8 into scalar values. Malformed sequences throw hce::ParseError
/// with the byte offset as the token index.
std::u32string decode(std::string_view s);

std::string encode(char32_t cp);
std::string encode(std::u32string_view s);

/// Decodes exactly one scalar; throws if `s` holds zero or several.
char32_t decode_one(std::string_view s);

/// "U+4ED5" style notation.
std::string to_ucs_notation(char32_t cp);

/// Parses "U+XXXX" (4-6 hex digits). Returns false on malformed input.
bool parse_ucs_notation(std::string_view s, char32_t& out);

}  // namespace hce::utf8

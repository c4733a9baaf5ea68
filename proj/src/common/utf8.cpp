#include "hce/common/utf8.hpp"

#include <cstdio>

#include "hce/common/error.hpp"

namespace hce {

const char* category_name(ErrorCategory c) noexcept {
  switch (c) {
    case ErrorCategory::kIo: return "io";
    case ErrorCategory::kParse: return "parse";
    case ErrorCategory::kData: return "data";
    case ErrorCategory::kShape: return "shape";
    case ErrorCategory::kContract: return "contract";
    case ErrorCategory::kValidation: return "validation";
    case ErrorCategory::kCycle: return "cycle";
    case ErrorCategory::kExpansion: return "expansion";
  }
  return "unknown";
}

namespace utf8 {

std::u32string decode(std::string_view s) {
  std::u32string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    char32_t cp = 0;
    std::size_t len = 0;
    if (b0 < 0x80) {
      cp = b0;
      len = 1;
    } else if ((b0 & 0xE0) == 0xC0) {
      cp = b0 & 0x1F;
      len = 2;
    } else if ((b0 & 0xF0) == 0xE0) {
      cp = b0 & 0x0F;
      len = 3;
    } else if ((b0 & 0xF8) == 0xF0) {
      cp = b0 & 0x07;
      len = 4;
    } else {
      throw ParseError("invalid UTF-8 lead byte", i);
    }
    if (i + len > s.size()) throw ParseError("truncated UTF-8 sequence", i);
    for (std::size_t k = 1; k < len; ++k) {
      const auto b = static_cast<unsigned char>(s[i + k]);
      if ((b & 0xC0) != 0x80) throw ParseError("invalid UTF-8 continuation byte", i + k);
      cp = (cp << 6) | (b & 0x3F);
    }
    static constexpr char32_t kMin[] = {0, 0, 0x80, 0x800, 0x10000};
    if (cp < kMin[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
      throw ParseError("invalid UTF-8 scalar value", i);
    }
    out.push_back(cp);
    i += len;
  }
  return out;
}

std::string encode(char32_t cp) {
  std::string out;
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
  return out;
}

std::string encode(std::u32string_view s) {
  std::string out;
  out.reserve(s.size() * 3);
  for (char32_t cp : s) out += encode(cp);
  return out;
}

char32_t decode_one(std::string_view s) {
  const auto cps = decode(s);
  if (cps.size() != 1) {
    throw ParseError("expected exactly one character, got " + std::to_string(cps.size()), 0);
  }
  return cps.front();
}

std::string to_ucs_notation(char32_t cp) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "U+%04X", static_cast<unsigned>(cp));
  return buf;
}

bool parse_ucs_notation(std::string_view s, char32_t& out) {
  if (s.size() < 6 || s.size() > 8 || s[0] != 'U' || s[1] != '+') return false;
  char32_t v = 0;
  for (std::size_t i = 2; i < s.size(); ++i) {
    const char c = s[i];
    v <<= 4;
    if (c >= '0' && c <= '9') v |= static_cast<char32_t>(c - '0');
    else if (c >= 'A' && c <= 'F') v |= static_cast<char32_t>(c - 'A' + 10);
    else if (c >= 'a' && c <= 'f') v |= static_cast<char32_t>(c - 'a' + 10);
    else return false;
  }
  if (v > 0x10FFFF) return false;
  out = v;
  return true;
}

}  // namespace utf8
}  // namespace hce

#pragma once

#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace hce::enc {

/// Dense indexing of input tokens. Row 0 is always UNK; when built with
/// operators the ten binary IDCs follow. Unknown tokens map to UNK.
class TokenVocab {
 public:
  explicit TokenVocab(bool with_operators = true);
  TokenVocab(const std::set<char32_t>& tokens, bool with_operators = true);

  std::size_t add(char32_t token);
  std::size_t index(char32_t token) const;
  bool contains(char32_t token) const { return index_.count(token) != 0; }
  char32_t token(std::size_t i) const { return tokens_[i]; }
  std::size_t size() const { return tokens_.size(); }
  static constexpr std::size_t unk_index() { return 0; }
  const std::vector<char32_t>& tokens() const { return tokens_; }

  /// All tokens in index order as one UTF-8 string (UNK included).
  std::string to_utf8() const;
  /// Inverse of to_utf8; the first scalar must be UNK.
  static TokenVocab from_utf8(std::string_view s);

 private:
  std::vector<char32_t> tokens_;
  std::map<char32_t, std::size_t> index_;
};

}  // namespace hce::enc

#include "hce/enc/vocab.hpp"

#include "hce/common/error.hpp"
#include "hce/common/utf8.hpp"
#include "hce/ids/ids.hpp"

namespace hce::enc {

TokenVocab::TokenVocab(bool with_operators) {
  add(ids::kUnk);
  if (with_operators) {
    for (char32_t op : ids::binary_idcs()) add(op);
  }
}

TokenVocab::TokenVocab(const std::set<char32_t>& tokens, bool with_operators)
    : TokenVocab(with_operators) {
  for (char32_t t : tokens) add(t);
}

std::size_t TokenVocab::add(char32_t token) {
  auto [it, inserted] = index_.emplace(token, tokens_.size());
  if (inserted) tokens_.push_back(token);
  return it->second;
}

std::size_t TokenVocab::index(char32_t token) const {
  auto it = index_.find(token);
  return it == index_.end() ? unk_index() : it->second;
}

std::string TokenVocab::to_utf8() const {
  return utf8::encode(std::u32string_view(tokens_.data(), tokens_.size()));
}

TokenVocab TokenVocab::from_utf8(std::string_view s) {
  const std::u32string cps = utf8::decode(s);
  if (cps.empty() || cps[0] != ids::kUnk) throw DataError("vocabulary must start with UNK");
  TokenVocab v(false);
  for (char32_t c : cps) v.add(c);
  if (v.size() != cps.size()) throw DataError("vocabulary contains duplicate tokens");
  return v;
}

}  // namespace hce::enc

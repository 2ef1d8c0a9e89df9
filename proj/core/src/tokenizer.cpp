#include "parley/tokenizer.hpp"

#include <cctype>

namespace parley {

namespace {

inline bool is_word_char(unsigned char c) {
  return std::isalnum(c) != 0 || c == '_' || c == '\'';
}

}  // namespace

std::vector<TokenSpan> approx_token_spans(std::string_view text) {
  std::vector<TokenSpan> spans;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    const unsigned char c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      ++i;
      continue;
    }
    if (is_word_char(c)) {
      std::size_t j = i + 1;
      while (j < n && is_word_char(static_cast<unsigned char>(text[j]))) ++j;
      spans.push_back({i, j});
      i = j;
    } else {
      // each punctuation/symbol byte is its own token
      spans.push_back({i, i + 1});
      ++i;
    }
  }
  return spans;
}

int approx_token_count(std::string_view text) {
  int count = 0;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    const unsigned char c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      ++i;
      continue;
    }
    ++count;
    if (is_word_char(c)) {
      while (i < n && is_word_char(static_cast<unsigned char>(text[i]))) ++i;
    } else {
      ++i;
    }
  }
  return count;
}

}  // namespace parley

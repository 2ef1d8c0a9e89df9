#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace parley {

// A token with its byte span in the source text.
struct TokenSpan {
  std::size_t begin = 0;  // byte offset of first char
  std::size_t end = 0;    // one past last char
};

// Pluggable token counter. Counts are a comparative metric for context-size
// accounting, not bit-exact model accounting.
using Tokenizer = std::function<int(std::string_view)>;

// Default approximate tokenizer: a token is either a maximal run of
// alphanumeric characters (plus ' and _ inside words) or a single
// non-whitespace punctuation character. "Cooperate." counts as 2.
int approx_token_count(std::string_view text);

// Same rule, but returns every token's byte span. Used by the chunker.
std::vector<TokenSpan> approx_token_spans(std::string_view text);

inline Tokenizer default_tokenizer() { return &approx_token_count; }

}  // namespace parley

#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace multiqa {

/// Splits on whitespace. A word is a maximal run of non-whitespace bytes.
std::vector<std::string> split_words(std::string_view text);

/// Index tokenization: lowercased maximal runs of [a-zA-Z0-9] or any
/// byte >= 0x80 (keeps UTF-8 sequences intact). No stemming or stopwords.
std::vector<std::string> tokenize(std::string_view text);

std::string trim(std::string_view s);

/// trim + collapse internal whitespace runs to single spaces + ASCII casefold.
/// Dedup key for answer candidates and the evaluation match key share this.
std::string normalize_answer(std::string_view s);

/// normalize_answer plus stripping one matching pair of surrounding quotes.
std::string normalize_for_match(std::string_view s);

bool contains_normalized_substring(std::string_view haystack, std::string_view needle);

std::string to_lower(std::string_view s);

}  // namespace multiqa

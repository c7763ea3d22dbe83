#pragma once

#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace kvi::text {

/// ASCII lowercase; bytes >= 0x80 pass through untouched.
std::string casefold(std::string_view s);

std::string_view trim(std::string_view s);

/// Letters, digits, '_' and any non-ASCII byte.
bool is_word_byte(unsigned char c) noexcept;

/// Case-folded word tokens in order of appearance.
std::vector<std::string> words(std::string_view s);

bool is_stopword(std::string_view folded_word);

/// Case-folded, stopword-filtered token set.
std::unordered_set<std::string> content_tokens(std::string_view s);

/// Replace every '_' with ' '.
std::string underscores_to_spaces(std::string_view s);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

/// Collapse whitespace runs to a single space and trim.
std::string collapse_whitespace(std::string_view s);

}  // namespace kvi::text

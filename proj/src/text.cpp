#include "kvi/text.hpp"

#include <algorithm>
#include <array>

namespace kvi::text {

namespace {

constexpr std::array<std::string_view, 64> kStopwords = {
    "a",     "about", "an",    "and",   "are",   "as",    "at",    "be",
    "been",  "but",   "by",    "can",   "did",   "do",    "does",  "for",
    "from",  "had",   "has",   "have",  "he",    "her",   "his",   "how",
    "i",     "in",    "into",  "is",    "it",    "its",   "of",    "on",
    "or",    "our",   "she",   "so",    "that",  "the",   "their", "them",
    "then",  "there", "these", "they",  "this",  "those", "to",    "was",
    "we",    "were",  "what",  "when",  "where", "which", "while", "who",
    "whom",  "why",   "will",  "with",  "would", "you",   "your",  "not",
};

bool is_space(unsigned char c) noexcept {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

}  // namespace

std::string casefold(std::string_view s) {
    std::string out(s);
    for (char& c : out) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    return out;
}

std::string_view trim(std::string_view s) {
    size_t b = 0;
    size_t e = s.size();
    while (b < e && is_space(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && is_space(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

bool is_word_byte(unsigned char c) noexcept {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
           c == '_' || c >= 0x80;
}

std::vector<std::string> words(std::string_view s) {
    std::vector<std::string> out;
    size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && !is_word_byte(static_cast<unsigned char>(s[i]))) ++i;
        size_t start = i;
        while (i < s.size() && is_word_byte(static_cast<unsigned char>(s[i]))) ++i;
        if (i > start) out.push_back(casefold(s.substr(start, i - start)));
    }
    return out;
}

bool is_stopword(std::string_view folded_word) {
    return std::find(kStopwords.begin(), kStopwords.end(), folded_word) != kStopwords.end();
}

std::unordered_set<std::string> content_tokens(std::string_view s) {
    std::unordered_set<std::string> out;
    for (auto& w : words(s)) {
        if (!is_stopword(w)) out.insert(std::move(w));
    }
    return out;
}

std::string underscores_to_spaces(std::string_view s) {
    std::string out(s);
    std::replace(out.begin(), out.end(), '_', ' ');
    return out;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

std::string collapse_whitespace(std::string_view s) {
    std::string out;
    bool pending_space = false;
    for (char c : trim(s)) {
        if (is_space(static_cast<unsigned char>(c))) {
            pending_space = true;
            continue;
        }
        if (pending_space) out += ' ';
        pending_space = false;
        out += c;
    }
    return out;
}

}  // namespace kvi::text

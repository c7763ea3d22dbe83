#include "kvi/segmenter.hpp"

#include <array>
#include <string>

#include "kvi/text.hpp"

namespace kvi {

namespace {

constexpr std::array<std::string_view, 22> kAbbreviations = {
    "e.g.", "i.e.", "al.",   "dr.",  "mr.",  "mrs.", "ms.",   "prof.", "fig.",  "figs.", "vs.",
    "no.",  "cf.",  "approx.", "st.", "jr.", "sr.",  "inc.",  "ltd.",  "eq.",   "ref.",  "vol.",
};

bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool is_terminal(char c) { return c == '.' || c == '!' || c == '?'; }

// The whitespace-delimited word ending at `end` (exclusive), case-folded.
std::string word_before(std::string_view text, size_t end) {
    size_t b = end;
    while (b > 0 && !is_space(text[b - 1])) --b;
    return text::casefold(text.substr(b, end - b));
}

bool is_abbreviation(std::string_view word) {
    for (auto a : kAbbreviations) {
        if (word == a) return true;
    }
    return false;
}

}  // namespace

std::vector<std::string> split_sentences(std::string_view text) {
    std::vector<std::string> out;
    size_t start = 0;
    size_t i = 0;
    auto emit = [&](size_t end) {
        auto piece = text::trim(text.substr(start, end - start));
        if (!piece.empty()) out.emplace_back(piece);
        start = end;
    };
    while (i < text.size()) {
        if (!is_terminal(text[i])) {
            ++i;
            continue;
        }
        size_t j = i;
        while (j < text.size() && is_terminal(text[j])) ++j;
        const bool boundary = j == text.size() || is_space(text[j]);
        const bool single_period = j == i + 1 && text[i] == '.';
        if (boundary && !(single_period && is_abbreviation(word_before(text, j)))) emit(j);
        i = j;
    }
    emit(text.size());
    return out;
}

std::vector<Sentence> segment_sentences(std::string_view document_text, std::string_view doc_id) {
    std::vector<Sentence> out;
    const std::string block = std::string(doc_id) + "#b0";
    for (auto& s : split_sentences(document_text)) {
        std::string id = std::string(doc_id) + "#s" + std::to_string(out.size());
        out.push_back(Sentence{std::move(id), std::move(s), std::string(doc_id), block});
    }
    return out;
}

}  // namespace kvi

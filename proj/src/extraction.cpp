#include "kvi/extraction.hpp"

#include "json.hpp"

#include <array>
#include <set>

#include "kvi/binary_io.hpp"
#include "kvi/errors.hpp"
#include "kvi/text.hpp"

namespace kvi {

namespace {

struct Token {
    size_t begin;
    size_t end;
    std::string folded;  // empty for punctuation
    char punct = 0;
};

// Subject scan stops here; the conjunctions keep "A, and B causes C" from
// pulling the first clause into the subject.
constexpr std::array<std::string_view, 12> kClauseWords = {
    "that", "which", "who", "whereas", "while", "because", "although", "since", "when", "and", "or", "but",
};

constexpr std::array<std::string_view, 25> kObjectStops = {
    "in",      "among", "during", "after",   "before", "with",   "when",  "which",  "that",
    "who",     "because", "while", "at",     "on",     "for",    "from",  "whereas", "via",
    "through", "near",  "within", "across",  "under",  "throughout", "into",
};

constexpr std::array<std::string_view, 6> kDeterminers = {"the", "a", "an", "this", "these", "those"};

constexpr std::array<std::string_view, 12> kTrailingModifiers = {
    "often", "also", "usually", "may", "can", "might", "sometimes", "always", "still", "could",
    "will", "typically",
};

template <size_t N>
bool contains(const std::array<std::string_view, N>& set, std::string_view w) {
    for (auto s : set) {
        if (s == w) return true;
    }
    return false;
}

bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

// Words keep interior hyphens/apostrophes/periods so "multi-organ" and "3.5"
// stay single tokens.
std::vector<Token> tokenize(std::string_view s) {
    std::vector<Token> out;
    size_t i = 0;
    auto word_byte = [&](size_t k) { return text::is_word_byte(static_cast<unsigned char>(s[k])); };
    while (i < s.size()) {
        if (is_space(s[i])) {
            ++i;
            continue;
        }
        if (word_byte(i)) {
            size_t b = i;
            while (i < s.size()) {
                if (word_byte(i)) {
                    ++i;
                } else if ((s[i] == '-' || s[i] == '\'' || s[i] == '.') && i + 1 < s.size() &&
                           word_byte(i + 1)) {
                    i += 2;
                } else {
                    break;
                }
            }
            out.push_back(Token{b, i, text::casefold(s.substr(b, i - b))});
        } else {
            out.push_back(Token{i, i + 1, {}, s[i]});
            ++i;
        }
    }
    return out;
}

bool is_adverb(std::string_view w) {
    return (w.size() > 3 && w.substr(w.size() - 2) == "ly") || contains(kTrailingModifiers, w);
}

std::string span_text(std::string_view s, const std::vector<Token>& toks, size_t first, size_t last) {
    return std::string(s.substr(toks[first].begin, toks[last].end - toks[first].begin));
}

// Token range [b, e) trimmed of leading determiners and trailing adverbs.
bool clean_range(const std::vector<Token>& toks, size_t& b, size_t& e, bool strip_adverbs) {
    while (b < e && contains(kDeterminers, toks[b].folded)) ++b;
    if (strip_adverbs) {
        while (e > b && is_adverb(toks[e - 1].folded)) --e;
    }
    while (b < e && toks[b].punct) ++b;
    while (e > b && toks[e - 1].punct) --e;
    return b < e;
}

}  // namespace

ExtractionRuleset::ExtractionRuleset(std::vector<ExtractionRule> rules) {
    if (rules.empty()) throw ConfigError("extraction ruleset is empty");
    for (const auto& r : rules) {
        const auto pat = text::trim(r.pattern);
        const std::string_view S = "{S}";
        const std::string_view O = "{O}";
        if (pat.size() < S.size() + O.size() || pat.substr(0, S.size()) != S ||
            pat.substr(pat.size() - O.size()) != O) {
            throw ConfigError("malformed pattern '" + r.pattern + "': expected '{S} <relation> {O}'");
        }
        const auto middle = text::trim(pat.substr(S.size(), pat.size() - S.size() - O.size()));
        if (middle.empty() || middle.find('{') != std::string_view::npos ||
            middle.find('}') != std::string_view::npos) {
            throw ConfigError("malformed pattern '" + r.pattern + "': bad relation phrase");
        }
        auto phrase = text::words(middle);
        if (phrase.empty()) {
            throw ConfigError("malformed pattern '" + r.pattern + "': relation phrase has no words");
        }
        if (r.predicate.empty() || r.predicate.find_first_of(" \t\n") != std::string::npos) {
            throw ConfigError("pattern '" + r.pattern + "' has an invalid predicate label");
        }
        compiled_.push_back(Compiled{std::move(phrase), r.predicate});
    }
}

ExtractionRuleset ExtractionRuleset::from_json_text(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("ruleset: ") + e.what());
    }
    if (!doc.is_array()) throw ConfigError("ruleset must be a JSON array");
    std::vector<ExtractionRule> rules;
    for (const auto& r : doc) {
        if (!r.is_object() || !r.contains("pattern") || !r.contains("predicate") ||
            !r["pattern"].is_string() || !r["predicate"].is_string()) {
            throw ConfigError("ruleset entries need string 'pattern' and 'predicate'");
        }
        rules.push_back({r["pattern"].get<std::string>(), r["predicate"].get<std::string>()});
    }
    return ExtractionRuleset(std::move(rules));
}

ExtractionRuleset ExtractionRuleset::from_json_file(const std::string& path) {
    return from_json_text(read_file_text(path));
}

std::vector<Capsule> PatternExtractor::extract(const Sentence& sentence) const {
    const std::string_view s = sentence.text;
    const auto toks = tokenize(s);
    std::vector<Capsule> out;
    std::set<std::string> seen;

    for (const auto& rule : rules_.rules()) {
        const size_t n = rule.phrase.size();
        for (size_t at = 0; at + n <= toks.size(); ++at) {
            bool hit = true;
            for (size_t k = 0; k < n && hit; ++k) hit = toks[at + k].folded == rule.phrase[k];
            if (!hit) continue;

            size_t sb = at;
            while (sb > 0) {
                const auto& t = toks[sb - 1];
                if ((t.punct && t.punct != '-') || contains(kClauseWords, t.folded)) break;
                --sb;
            }
            size_t se = at;
            if (!clean_range(toks, sb, se, true)) continue;

            size_t ob = at + n;
            size_t oe = ob;
            while (oe < toks.size()) {
                const auto& t = toks[oe];
                if ((t.punct && t.punct != '-') || contains(kObjectStops, t.folded)) break;
                ++oe;
            }

            const std::string subject = span_text(s, toks, sb, se - 1);
            size_t cb = ob;
            for (size_t k = ob; k <= oe; ++k) {
                if (k < oe && toks[k].folded != "and" && toks[k].folded != "or") continue;
                size_t b = cb;
                size_t e = k;
                cb = k + 1;
                if (!clean_range(toks, b, e, false)) continue;
                Capsule c;
                c.subject = subject;
                c.predicate = rule.predicate;
                c.object = span_text(s, toks, b, e - 1);
                c.provenance_sentence_id = sentence.sentence_id;
                c.provenance_doc_id = sentence.doc_id;
                c.capsule_id = make_capsule_id(c.subject, c.predicate, c.object, c.provenance_sentence_id);
                if (seen.insert(c.capsule_id).second) out.push_back(std::move(c));
            }
        }
    }
    return out;
}

std::vector<Capsule> extract_triples(const Sentence& sentence, const ExtractionRuleset& ruleset) {
    return PatternExtractor(ruleset).extract(sentence);
}

CapsuleSet extract_corpus(std::span<const Sentence> sentences, const TripleExtractor& extractor) {
    CapsuleSet out;
    for (const auto& s : sentences) {
        for (auto& c : extractor.extract(s)) out.insert(std::move(c));
    }
    return out;
}

}  // namespace kvi

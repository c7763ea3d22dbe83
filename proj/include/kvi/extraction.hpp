#pragma once

#include <span>
#include <string>
#include <vector>

#include "kvi/capsule.hpp"

namespace kvi {

/// One extraction pattern, written "{S} <relation phrase> {O}", mapped to a
/// predicate label.
struct ExtractionRule {
    std::string pattern;
    std::string predicate;
};

/// Validated, ordered set of extraction rules.
class ExtractionRuleset {
public:
    struct Compiled {
        std::vector<std::string> phrase;  // case-folded words of the relation phrase
        std::string predicate;
    };

    /// Throws ConfigError on an empty ruleset or a malformed pattern.
    explicit ExtractionRuleset(std::vector<ExtractionRule> rules);

    static ExtractionRuleset from_json_file(const std::string& path);
    static ExtractionRuleset from_json_text(const std::string& text);

    std::span<const Compiled> rules() const noexcept { return compiled_; }

private:
    std::vector<Compiled> compiled_;
};

/// Abstract sentence-to-triples extractor.
class TripleExtractor {
public:
    virtual ~TripleExtractor() = default;
    virtual std::vector<Capsule> extract(const Sentence& sentence) const = 0;
};

/// Deterministic lexicon matcher.
///
/// For every occurrence of a rule's relation phrase (word-aligned,
/// case-insensitive) the subject is the clause fragment to its left, cut at
/// punctuation or a clause word such as "that", with leading determiners and
/// trailing adverbs/auxiliaries removed. The object is the fragment to its
/// right, cut at punctuation or a preposition/clause word, and split on
/// "and"/"or" into one capsule per conjunct.
class PatternExtractor final : public TripleExtractor {
public:
    explicit PatternExtractor(ExtractionRuleset rules) : rules_(std::move(rules)) {}
    std::vector<Capsule> extract(const Sentence& sentence) const override;

private:
    ExtractionRuleset rules_;
};

std::vector<Capsule> extract_triples(const Sentence& sentence, const ExtractionRuleset& ruleset);

/// Runs the extractor over every sentence in order; duplicates (same id) are dropped.
CapsuleSet extract_corpus(std::span<const Sentence> sentences, const TripleExtractor& extractor);

}  // namespace kvi

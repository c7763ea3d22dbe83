#pragma once

#include <array>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kvi/graph.hpp"

namespace kvi {

inline constexpr std::string_view kMedhopMode = "medhop-id";

struct Query {
    std::string text;
    std::optional<std::string> dataset_hint{};

    bool medhop() const { return dataset_hint && *dataset_hint == kMedhopMode; }
};

using RelationSet = std::set<std::string>;

/// Longest case-insensitive, word-aligned mention of a graph node; ties go to
/// the earliest start, then the lexicographically smaller node.
std::optional<std::string> link_entity(const Query& query, const KnowledgeGraph& graph);

struct IntentRule {
    std::string match;                   // ECMAScript regex, case-insensitive; "*" matches anything
    std::vector<std::string> relations;  // "*" (or empty) means every graph relation
};

/// Ordered keyword/regex -> relation-set table. A catch-all rule is appended
/// when the table does not end with one.
class IntentRules {
public:
    explicit IntentRules(std::vector<IntentRule> rules = {});

    static IntentRules from_json_text(const std::string& text);
    static IntentRules from_json_file(const std::string& path);

    std::span<const IntentRule> rules() const noexcept { return rules_; }

private:
    std::vector<IntentRule> rules_;
};

/// In medhop-id mode a relation label written literally in the query
/// ("interacts_with") wins. Otherwise the first matching rule applies.
RelationSet classify_intent(const Query& query, const IntentRules& rules, const KnowledgeGraph& graph);

inline constexpr int kEmbeddingDim = 256;
using Embedding = std::array<double, kEmbeddingDim>;

/// Signed feature hashing of case-folded word counts: FNV-1a 64 of the word,
/// bucket = low 8 bits, sign = top bit.
Embedding hashed_embedding(std::string_view text);

/// Cosine in [-1, 1]; two zero vectors give 1, one zero vector gives 0.
double cosine(const Embedding& a, const Embedding& b);

/// Query/evidence relevance in [0, 1].
class RelevanceScorer {
public:
    virtual ~RelevanceScorer() = default;
    virtual double score(std::string_view query, std::string_view evidence) const = 0;
};

/// 0.5 * Jaccard(content tokens) + 0.5 * (1 + cosine(hashed embeddings)) / 2.
/// Empty content-token sets compare equal only when the case-folded texts match.
class DrmScorer final : public RelevanceScorer {
public:
    double score(std::string_view query, std::string_view evidence) const override;
};

double drm_score(std::string_view query, std::string_view evidence);

struct ScoredTriple {
    std::string capsule_id;
    double score = 0.0;
    std::string evidence_sentence_id;
    int hop = 1;
    std::string predicate;

    bool operator==(const ScoredTriple&) const = default;
};

/// Scores each traversal hit against its evidence sentence; hits scoring
/// below `min_score` are dropped.
std::vector<ScoredTriple> score_candidates(const Query& query, std::span<const TraversalHit> hits,
                                           const GraphIndex& index, const RelevanceScorer& scorer,
                                           double min_score = 0.0);

/// Descending score, then ascending hop, then capsule_id; at most k items.
std::vector<ScoredTriple> select_topk(std::vector<ScoredTriple> scored, size_t k);

struct RankedSentence {
    std::string sentence_id;
    double score = 0.0;

    bool operator==(const RankedSentence&) const = default;
};

/// Exact nearest neighbours by hashed-embedding cosine; ties by sentence_id.
std::vector<RankedSentence> dense_retrieve(std::string_view query, std::span<const Sentence> sentences, size_t k);

}  // namespace kvi

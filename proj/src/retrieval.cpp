#include "kvi/retrieval.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <regex>
#include <tuple>

#include "kvi/binary_io.hpp"
#include "kvi/errors.hpp"
#include "kvi/hashing.hpp"
#include "kvi/text.hpp"

namespace kvi {

namespace {

bool word_aligned(std::string_view hay, size_t pos, size_t len) {
    const bool left = pos == 0 || !text::is_word_byte(static_cast<unsigned char>(hay[pos - 1]));
    const bool right = pos + len == hay.size() || !text::is_word_byte(static_cast<unsigned char>(hay[pos + len]));
    return left && right;
}

// First word-aligned occurrence of `needle` in `hay`.
std::optional<size_t> find_mention(std::string_view hay, std::string_view needle) {
    if (needle.empty()) return std::nullopt;
    for (size_t pos = hay.find(needle); pos != std::string_view::npos; pos = hay.find(needle, pos + 1)) {
        if (word_aligned(hay, pos, needle.size())) return pos;
    }
    return std::nullopt;
}

bool is_wildcard(const std::vector<std::string>& relations) {
    return relations.empty() || (relations.size() == 1 && relations[0] == "*");
}

}  // namespace

std::optional<std::string> link_entity(const Query& query, const KnowledgeGraph& graph) {
    const std::string hay = text::casefold(query.text);
    std::optional<std::tuple<size_t, size_t, std::string>> best;  // (-len via compare, start, name)
    for (const auto& node : graph.nodes()) {
        const std::string needle = text::casefold(node);
        auto pos = find_mention(hay, needle);
        if (!pos) continue;
        if (!best) {
            best.emplace(needle.size(), *pos, node);
            continue;
        }
        const auto& [blen, bstart, bname] = *best;
        const bool better = needle.size() != blen ? needle.size() > blen
                            : *pos != bstart      ? *pos < bstart
                                                  : node < bname;
        if (better) best.emplace(needle.size(), *pos, node);
    }
    if (!best) return std::nullopt;
    return std::get<2>(*best);
}

IntentRules::IntentRules(std::vector<IntentRule> rules) : rules_(std::move(rules)) {
    for (const auto& r : rules_) {
        if (r.match.empty()) throw ConfigError("intent rule with empty match");
        if (r.match != "*") {
            try {
                std::regex(r.match, std::regex::ECMAScript | std::regex::icase);
            } catch (const std::regex_error& e) {
                throw ConfigError("intent rule '" + r.match + "' is not a valid regex: " + e.what());
            }
        }
    }
    if (rules_.empty() || rules_.back().match != "*") rules_.push_back(IntentRule{"*", {"*"}});
}

IntentRules IntentRules::from_json_text(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("intent rules: ") + e.what());
    }
    if (!doc.is_array()) throw ConfigError("intent rules must be a JSON array");
    std::vector<IntentRule> rules;
    for (const auto& r : doc) {
        if (!r.is_object() || !r.contains("match") || !r["match"].is_string()) {
            throw ConfigError("intent rule needs a string 'match'");
        }
        IntentRule rule{r["match"].get<std::string>(), {}};
        if (r.contains("relations")) {
            for (const auto& rel : r["relations"]) {
                if (!rel.is_string()) throw ConfigError("intent rule relations must be strings");
                rule.relations.push_back(rel.get<std::string>());
            }
        }
        rules.push_back(std::move(rule));
    }
    return IntentRules(std::move(rules));
}

IntentRules IntentRules::from_json_file(const std::string& path) { return from_json_text(read_file_text(path)); }

RelationSet classify_intent(const Query& query, const IntentRules& rules, const KnowledgeGraph& graph) {
    const auto all = graph.relations();
    if (query.medhop()) {
        const std::string hay = text::casefold(query.text);
        RelationSet named;
        for (const auto& rel : all) {
            if (find_mention(hay, text::casefold(rel))) named.insert(rel);
        }
        if (!named.empty()) return named;
    }
    for (const auto& rule : rules.rules()) {
        const bool hit = rule.match == "*" ||
                         std::regex_search(query.text, std::regex(rule.match, std::regex::ECMAScript | std::regex::icase));
        if (!hit) continue;
        if (is_wildcard(rule.relations)) return all;
        return RelationSet(rule.relations.begin(), rule.relations.end());
    }
    return all;
}

Embedding hashed_embedding(std::string_view text) {
    Embedding v{};
    for (const auto& w : text::words(text)) {
        const std::uint64_t h = fnv1a64(w);
        v[h & 0xff] += (h >> 63) ? -1.0 : 1.0;
    }
    return v;
}

double cosine(const Embedding& a, const Embedding& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (int i = 0; i < kEmbeddingDim; ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 && nb == 0.0) return 1.0;
    if (na == 0.0 || nb == 0.0) return 0.0;
    return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

double DrmScorer::score(std::string_view query, std::string_view evidence) const {
    const auto a = text::content_tokens(query);
    const auto b = text::content_tokens(evidence);
    double jaccard;
    if (a.empty() && b.empty()) {
        jaccard = text::casefold(text::collapse_whitespace(query)) == text::casefold(text::collapse_whitespace(evidence))
                      ? 1.0
                      : 0.0;
    } else {
        size_t inter = 0;
        for (const auto& t : a) inter += b.count(t);
        jaccard = static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
    }
    const auto ea = hashed_embedding(query);
    const auto eb = hashed_embedding(evidence);
    double cos = cosine(ea, eb);
    const bool both_zero = std::all_of(ea.begin(), ea.end(), [](double x) { return x == 0.0; }) &&
                           std::all_of(eb.begin(), eb.end(), [](double x) { return x == 0.0; });
    if (both_zero && jaccard == 0.0) cos = 0.0;
    return std::clamp(0.5 * jaccard + 0.5 * (cos + 1.0) / 2.0, 0.0, 1.0);
}

double drm_score(std::string_view query, std::string_view evidence) { return DrmScorer{}.score(query, evidence); }

std::vector<ScoredTriple> score_candidates(const Query& query, std::span<const TraversalHit> hits,
                                           const GraphIndex& index, const RelevanceScorer& scorer, double min_score) {
    std::map<std::string_view, const Edge*> edge_of;
    for (const auto& e : index.graph.edges()) edge_of.emplace(e.capsule_id, &e);
    std::vector<ScoredTriple> out;
    for (const auto& hit : hits) {
        const Sentence evidence = resolve_provenance(hit.capsule_id, index.provenance);
        const double s = scorer.score(query.text, evidence.text);
        if (s < min_score) continue;
        auto it = edge_of.find(hit.capsule_id);
        if (it == edge_of.end()) throw LookupError("traversal hit " + hit.capsule_id + " is not an edge");
        out.push_back(ScoredTriple{hit.capsule_id, s, evidence.sentence_id, hit.hop, it->second->predicate});
    }
    return out;
}

std::vector<ScoredTriple> select_topk(std::vector<ScoredTriple> scored, size_t k) {
    std::sort(scored.begin(), scored.end(), [](const ScoredTriple& a, const ScoredTriple& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.hop != b.hop) return a.hop < b.hop;
        return a.capsule_id < b.capsule_id;
    });
    if (scored.size() > k) scored.resize(k);
    return scored;
}

std::vector<RankedSentence> dense_retrieve(std::string_view query, std::span<const Sentence> sentences, size_t k) {
    const auto q = hashed_embedding(query);
    std::vector<RankedSentence> out;
    out.reserve(sentences.size());
    for (const auto& s : sentences) out.push_back(RankedSentence{s.sentence_id, cosine(q, hashed_embedding(s.text))});
    std::sort(out.begin(), out.end(), [](const RankedSentence& a, const RankedSentence& b) {
        return a.score != b.score ? a.score > b.score : a.sentence_id < b.sentence_id;
    });
    if (out.size() > k) out.resize(k);
    return out;
}

}  // namespace kvi

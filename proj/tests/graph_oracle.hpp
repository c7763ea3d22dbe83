#pragma once

#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "kvi/graph.hpp"

namespace kvi::test {

struct RandomGraphSpec {
    int max_nodes = 50;
    int max_edges = 200;
    int relations = 4;
};

inline KnowledgeGraph random_graph(std::mt19937_64& rng, const RandomGraphSpec& spec = {}) {
    const int n = std::uniform_int_distribution<int>(1, spec.max_nodes)(rng);
    const int m = std::uniform_int_distribution<int>(0, spec.max_edges)(rng);
    std::set<std::string> nodes;
    for (int i = 0; i < n; ++i) nodes.insert("n" + std::to_string(i));
    std::vector<Edge> edges;
    std::uniform_int_distribution<int> pick(0, n - 1), rel(0, spec.relations - 1);
    for (int i = 0; i < m; ++i) {
        char id[16];
        std::snprintf(id, sizeof id, "e%04d", i);
        edges.push_back(Edge{"n" + std::to_string(pick(rng)), "r" + std::to_string(rel(rng)),
                             "n" + std::to_string(pick(rng)), id});
    }
    return KnowledgeGraph(std::move(nodes), std::move(edges));
}

inline std::set<std::string> random_relation_set(std::mt19937_64& rng, int relations = 4) {
    std::set<std::string> r;
    for (int i = 0; i < relations; ++i) {
        if (rng() & 1) r.insert("r" + std::to_string(i));
    }
    return r;
}

/// Exhaustive walk enumeration: every relation-filtered walk of at most H
/// edges from `start`, scanning the raw edge list at each step. An edge's hop
/// is the smallest walk position at which it occurs. A node already expanded
/// at an equal or smaller depth is not expanded again; whatever it reaches was
/// recorded with hops no larger than a second visit would produce.
inline std::vector<TraversalHit> brute_force_traverse(const KnowledgeGraph& g, const std::string& start,
                                                       const TraversalConfig& cfg) {
    std::map<std::string, int> best;
    std::map<std::string, int> expanded;
    const auto edges = g.edges();
    auto walk = [&](auto&& self, const std::string& at, int depth) -> void {
        auto [seen, first] = expanded.emplace(at, depth);
        if (!first) {
            if (seen->second <= depth) return;
            seen->second = depth;
        }
        for (const auto& e : edges) {
            if (!cfg.relation_set.count(e.predicate)) continue;
            const std::string* next = nullptr;
            if (e.subject == at) next = &e.object;
            if (!next && cfg.direction == Direction::bidirectional && e.object == at) next = &e.subject;
            if (!next) continue;
            auto [it, fresh] = best.emplace(e.capsule_id, depth);
            if (!fresh) it->second = std::min(it->second, depth);
            if (depth < cfg.max_hops) self(self, *next, depth + 1);
            // A self loop in bidirectional mode matches both ends; the second
            // orientation leads back to the same node, so it is already covered.
        }
    };
    walk(walk, start, 1);
    std::vector<TraversalHit> out;
    for (const auto& [id, hop] : best) out.push_back(TraversalHit{id, hop});
    std::sort(out.begin(), out.end(), [](const TraversalHit& a, const TraversalHit& b) {
        return a.hop != b.hop ? a.hop < b.hop : a.capsule_id < b.capsule_id;
    });
    return out;
}

inline std::set<std::string> ids_of(const std::vector<TraversalHit>& hits) {
    std::set<std::string> s;
    for (const auto& h : hits) s.insert(h.capsule_id);
    return s;
}

}  // namespace kvi::test

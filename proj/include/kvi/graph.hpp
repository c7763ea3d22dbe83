#pragma once

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "kvi/capsule.hpp"
#include "kvi/provenance.hpp"

namespace kvi {

struct Edge {
    std::string subject;
    std::string predicate;
    std::string object;
    std::string capsule_id;

    bool operator==(const Edge&) const = default;
};

/// Entity/relation multigraph. Node names are surface strings; matching is
/// case-insensitive, so surfaces that differ only by ASCII case share a node
/// (the first one seen in capsule order names it).
class KnowledgeGraph {
public:
    KnowledgeGraph() = default;

    /// Throws FormatError if an endpoint is missing from `nodes`.
    KnowledgeGraph(std::set<std::string> nodes, std::vector<Edge> edges,
                   std::map<std::string, std::string> entity_types = {});

    const std::set<std::string>& nodes() const noexcept { return nodes_; }
    std::span<const Edge> edges() const noexcept { return edges_; }

    /// Canonical node name for a case-insensitive lookup.
    std::optional<std::string> find_node(std::string_view name) const;
    bool has_node(std::string_view name) const { return find_node(name).has_value(); }

    std::span<const size_t> out_edges(std::string_view node) const;
    std::span<const size_t> in_edges(std::string_view node) const;

    /// All predicate labels, sorted.
    std::set<std::string> relations() const;

    /// Optional entity type hints, keyed by canonical node name.
    const std::map<std::string, std::string>& entity_types() const noexcept { return types_; }
    std::optional<std::string> type_of(std::string_view node) const;

    bool operator==(const KnowledgeGraph& o) const {
        return nodes_ == o.nodes_ && edges_ == o.edges_ && types_ == o.types_;
    }

private:
    std::set<std::string> nodes_;
    std::vector<Edge> edges_;
    std::map<std::string, std::string> types_;
    std::map<std::string, std::string, std::less<>> folded_;  // casefold -> canonical
    std::map<std::string, std::vector<size_t>, std::less<>> out_;
    std::map<std::string, std::vector<size_t>, std::less<>> in_;
};

/// Graph plus provenance, the on-disk graph_index.json unit.
struct GraphIndex {
    KnowledgeGraph graph;
    ProvenanceIndex provenance;

    bool operator==(const GraphIndex&) const = default;
};

/// One edge per capsule; every sentence (with or without capsules) enters
/// the sentence index. `entity_types` maps entity surface -> type hint and is
/// kept only for entities that are graph nodes. Throws LookupError on dangling
/// provenance.
GraphIndex build_graph(const CapsuleSet& capsules, std::span<const Sentence> sentences,
                       const std::map<std::string, std::string>& entity_types = {});

enum class Direction { outgoing, bidirectional };

struct TraversalConfig {
    int max_hops = 2;
    std::set<std::string> relation_set;
    Direction direction = Direction::outgoing;
};

struct TraversalHit {
    std::string capsule_id;
    int hop = 0;

    bool operator==(const TraversalHit&) const = default;
};

/// Every edge whose predicate is in the relation set and whose tail end is
/// reachable from `start` by a relation-filtered walk of at most
/// max_hops - 1 edges. Each edge is reported once, at the smallest hop at
/// which it is reachable; output sorted by (hop, capsule_id). Throws
/// LookupError when `start` is not a node, ConfigError when max_hops < 1.
std::vector<TraversalHit> traverse(const KnowledgeGraph& graph, std::string_view start,
                                   const TraversalConfig& config);

inline constexpr const char* kDefaultGraphFile = "graph_index.json";

/// Serialized with sorted keys so output is byte-stable.
std::string graph_to_json(const GraphIndex& index);
GraphIndex graph_from_json(const std::string& text);

void save_graph(const GraphIndex& index, const std::string& path);
GraphIndex load_graph(const std::string& path);

/// Canonical sentence of a triple: "<subject> <verbalized predicate> <object>."
std::string verbalize_predicate(std::string_view predicate);
std::string triple_statement(std::string_view subject, std::string_view predicate,
                             std::string_view object);
/// "<entity> is a <type>." or "<entity>." without a type.
std::string anchor_statement(std::string_view entity, const std::optional<std::string>& type_hint);

}  // namespace kvi

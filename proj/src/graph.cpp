#include "kvi/graph.hpp"

#include "json.hpp"

#include <algorithm>
#include <deque>
#include <map>

#include "kvi/binary_io.hpp"
#include "kvi/errors.hpp"
#include "kvi/text.hpp"

namespace kvi {

using nlohmann::json;

KnowledgeGraph::KnowledgeGraph(std::set<std::string> nodes, std::vector<Edge> edges,
                               std::map<std::string, std::string> entity_types)
    : nodes_(std::move(nodes)), edges_(std::move(edges)), types_(std::move(entity_types)) {
    for (const auto& n : nodes_) {
        auto [it, fresh] = folded_.emplace(text::casefold(n), n);
        if (!fresh) throw FormatError("/nodes", "nodes '" + it->second + "' and '" + n + "' differ only by case");
    }
    for (size_t i = 0; i < edges_.size(); ++i) {
        const auto& e = edges_[i];
        for (const auto* end : {&e.subject, &e.object}) {
            if (!nodes_.count(*end)) {
                throw FormatError("/edges/" + std::to_string(i) + (end == &e.subject ? "/s" : "/o"),
                                  "node '" + *end + "' is not in nodes");
            }
        }
        out_[e.subject].push_back(i);
        in_[e.object].push_back(i);
    }
    for (const auto& [node, type] : types_) {
        if (!nodes_.count(node)) throw FormatError("/entity_types/" + node, "not a node");
    }
}

std::optional<std::string> KnowledgeGraph::find_node(std::string_view name) const {
    auto it = folded_.find(text::casefold(name));
    if (it == folded_.end()) return std::nullopt;
    return it->second;
}

std::span<const size_t> KnowledgeGraph::out_edges(std::string_view node) const {
    auto it = out_.find(node);
    return it == out_.end() ? std::span<const size_t>{} : std::span<const size_t>(it->second);
}

std::span<const size_t> KnowledgeGraph::in_edges(std::string_view node) const {
    auto it = in_.find(node);
    return it == in_.end() ? std::span<const size_t>{} : std::span<const size_t>(it->second);
}

std::set<std::string> KnowledgeGraph::relations() const {
    std::set<std::string> out;
    for (const auto& e : edges_) out.insert(e.predicate);
    return out;
}

std::optional<std::string> KnowledgeGraph::type_of(std::string_view node) const {
    auto canon = find_node(node);
    if (!canon) return std::nullopt;
    auto it = types_.find(*canon);
    if (it == types_.end()) return std::nullopt;
    return it->second;
}

GraphIndex build_graph(const CapsuleSet& capsules, std::span<const Sentence> sentences,
                       const std::map<std::string, std::string>& entity_types) {
    capsules.validate_provenance(sentences);

    GraphIndex out;
    for (const auto& s : sentences) {
        out.provenance.sentence_index[s.sentence_id] = SentenceRecord{s.text, s.doc_id, s.block_id, {}};
    }

    std::map<std::string, std::string> canonical;  // casefold -> first surface
    auto node_for = [&](const std::string& surface) -> const std::string& {
        return canonical.emplace(text::casefold(surface), surface).first->second;
    };

    std::set<std::string> nodes;
    std::vector<Edge> edges;
    for (const auto& c : capsules.items()) {
        const std::string s = node_for(c.subject);
        const std::string o = node_for(c.object);
        nodes.insert(s);
        nodes.insert(o);
        edges.push_back(Edge{s, c.predicate, o, c.capsule_id});
        out.provenance.triple_sentence_index[c.capsule_id] = c.provenance_sentence_id;
        out.provenance.sentence_index[c.provenance_sentence_id].capsule_ids.push_back(c.capsule_id);
    }

    std::map<std::string, std::string> types;
    for (const auto& [entity, type] : entity_types) {
        auto it = canonical.find(text::casefold(entity));
        if (it != canonical.end() && !type.empty()) types.emplace(it->second, type);
    }
    out.graph = KnowledgeGraph(std::move(nodes), std::move(edges), std::move(types));
    return out;
}

std::vector<TraversalHit> traverse(const KnowledgeGraph& graph, std::string_view start,
                                   const TraversalConfig& config) {
    if (config.max_hops < 1) throw ConfigError("max_hops must be >= 1");
    const auto origin = graph.find_node(start);
    if (!origin) throw LookupError("entity not in graph: " + std::string(start));

    const auto edges = graph.edges();
    std::map<std::string, int, std::less<>> depth{{*origin, 0}};
    std::vector<std::string> frontier{*origin};
    std::vector<bool> emitted(edges.size(), false);
    std::vector<TraversalHit> hits;

    for (int hop = 1; hop <= config.max_hops && !frontier.empty(); ++hop) {
        std::vector<std::string> next;
        auto visit = [&](size_t ei, const std::string& far_end) {
            const Edge& e = edges[ei];
            if (!config.relation_set.count(e.predicate)) return;
            if (!emitted[ei]) {
                emitted[ei] = true;
                hits.push_back(TraversalHit{e.capsule_id, hop});
            }
            if (depth.emplace(far_end, hop).second) next.push_back(far_end);
        };
        for (const auto& v : frontier) {
            for (size_t ei : graph.out_edges(v)) visit(ei, edges[ei].object);
            if (config.direction == Direction::bidirectional) {
                for (size_t ei : graph.in_edges(v)) visit(ei, edges[ei].subject);
            }
        }
        frontier = std::move(next);
    }

    std::sort(hits.begin(), hits.end(), [](const TraversalHit& a, const TraversalHit& b) {
        return a.hop != b.hop ? a.hop < b.hop : a.capsule_id < b.capsule_id;
    });
    return hits;
}

// --- serialization -----------------------------------------------------------

std::string graph_to_json(const GraphIndex& index) {
    json doc;
    doc["nodes"] = json::array();
    for (const auto& n : index.graph.nodes()) doc["nodes"].push_back(n);
    doc["edges"] = json::array();
    for (const auto& e : index.graph.edges()) {
        doc["edges"].push_back({{"s", e.subject}, {"r", e.predicate}, {"o", e.object}, {"capsule_id", e.capsule_id}});
    }
    doc["sentence_index"] = json::object();
    for (const auto& [id, rec] : index.provenance.sentence_index) {
        doc["sentence_index"][id] = {{"text", rec.text},
                                     {"doc_id", rec.doc_id},
                                     {"block_id", rec.block_id},
                                     {"capsule_ids", rec.capsule_ids}};
    }
    doc["triple_sentence_index"] = json::object();
    for (const auto& [cid, sid] : index.provenance.triple_sentence_index) {
        doc["triple_sentence_index"][cid] = sid;
    }
    doc["entity_types"] = json::object();
    for (const auto& [node, type] : index.graph.entity_types()) doc["entity_types"][node] = type;
    return doc.dump(2) + "\n";
}

namespace {

const json& member(const json& obj, const char* key, const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end()) throw FormatError(where + "/" + key, "missing");
    return *it;
}

std::string as_string(const json& v, const std::string& where) {
    if (!v.is_string()) throw FormatError(where, "expected string");
    return v.get<std::string>();
}

}  // namespace

GraphIndex graph_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError("", e.what());
    }
    if (!doc.is_object()) throw FormatError("", "expected top-level object");

    std::set<std::string> nodes;
    const json& jn = member(doc, "nodes", "");
    if (!jn.is_array()) throw FormatError("/nodes", "expected array");
    for (size_t i = 0; i < jn.size(); ++i) {
        if (!nodes.insert(as_string(jn[i], "/nodes/" + std::to_string(i))).second) {
            throw FormatError("/nodes/" + std::to_string(i), "duplicate node");
        }
    }

    std::vector<Edge> edges;
    const json& je = member(doc, "edges", "");
    if (!je.is_array()) throw FormatError("/edges", "expected array");
    for (size_t i = 0; i < je.size(); ++i) {
        const std::string w = "/edges/" + std::to_string(i);
        if (!je[i].is_object()) throw FormatError(w, "expected object");
        edges.push_back(Edge{as_string(member(je[i], "s", w), w + "/s"), as_string(member(je[i], "r", w), w + "/r"),
                             as_string(member(je[i], "o", w), w + "/o"),
                             as_string(member(je[i], "capsule_id", w), w + "/capsule_id")});
    }

    GraphIndex out;
    const json& js = member(doc, "sentence_index", "");
    if (!js.is_object()) throw FormatError("/sentence_index", "expected object");
    for (const auto& [sid, rec] : js.items()) {
        const std::string w = "/sentence_index/" + sid;
        if (!rec.is_object()) throw FormatError(w, "expected object");
        SentenceRecord r{as_string(member(rec, "text", w), w + "/text"),
                         as_string(member(rec, "doc_id", w), w + "/doc_id"),
                         as_string(member(rec, "block_id", w), w + "/block_id"),
                         {}};
        const json& ids = member(rec, "capsule_ids", w);
        if (!ids.is_array()) throw FormatError(w + "/capsule_ids", "expected array");
        for (size_t i = 0; i < ids.size(); ++i) {
            r.capsule_ids.push_back(as_string(ids[i], w + "/capsule_ids/" + std::to_string(i)));
        }
        out.provenance.sentence_index.emplace(sid, std::move(r));
    }
    const json& jt = member(doc, "triple_sentence_index", "");
    if (!jt.is_object()) throw FormatError("/triple_sentence_index", "expected object");
    for (const auto& [cid, sid] : jt.items()) {
        out.provenance.triple_sentence_index.emplace(cid, as_string(sid, "/triple_sentence_index/" + cid));
    }

    std::map<std::string, std::string> types;
    if (auto it = doc.find("entity_types"); it != doc.end()) {
        if (!it->is_object()) throw FormatError("/entity_types", "expected object");
        for (const auto& [node, type] : it->items()) types.emplace(node, as_string(type, "/entity_types/" + node));
    }

    out.graph = KnowledgeGraph(std::move(nodes), std::move(edges), std::move(types));
    out.provenance.check_consistency();
    for (size_t i = 0; i < out.graph.edges().size(); ++i) {
        if (!out.provenance.triple_sentence_index.count(out.graph.edges()[i].capsule_id)) {
            throw FormatError("/edges/" + std::to_string(i) + "/capsule_id", "no provenance entry");
        }
    }
    if (out.provenance.triple_sentence_index.size() != out.graph.edges().size()) {
        throw FormatError("/triple_sentence_index", "entry count differs from edge count");
    }
    return out;
}

void save_graph(const GraphIndex& index, const std::string& path) {
    write_file_text(path, graph_to_json(index));
}

GraphIndex load_graph(const std::string& path) { return graph_from_json(read_file_text(path)); }

// --- canonical statements -----------------------------------------------------

std::string verbalize_predicate(std::string_view predicate) {
    static const std::map<std::string, std::string, std::less<>> kTable = {
        {"has_symptom", "has symptom"},
        {"causes", "causes"},
        {"interacts_with", "interacts with"},
        {"transmitted_by", "is transmitted by"},
        {"reported_in", "was reported in"},
        {"located_in", "is located in"},
        {"treated_with", "is treated with"},
    };
    if (auto it = kTable.find(predicate); it != kTable.end()) return it->second;
    return text::collapse_whitespace(text::underscores_to_spaces(predicate));
}

std::string triple_statement(std::string_view subject, std::string_view predicate,
                             std::string_view object) {
    const std::string rel = verbalize_predicate(predicate);
    if (rel.empty()) throw ConfigError("predicate '" + std::string(predicate) + "' verbalizes to nothing");
    return std::string(subject) + " " + rel + " " + std::string(object) + ".";
}

std::string anchor_statement(std::string_view entity, const std::optional<std::string>& type_hint) {
    if (type_hint && !type_hint->empty()) return std::string(entity) + " is a " + *type_hint + ".";
    return std::string(entity) + ".";
}

}  // namespace kvi

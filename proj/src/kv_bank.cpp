#include "kvi/kv_bank.hpp"

#include <algorithm>

#include "kvi/binary_io.hpp"
#include "kvi/errors.hpp"
#include "kvi/parallel.hpp"

namespace kvi {

namespace {

constexpr char kBankMagic[4] = {'K', 'V', 'I', 'B'};
constexpr char kTextMagic[4] = {'T', 'E', 'X', 'T'};
constexpr std::uint32_t kBankVersion = 1;

}  // namespace

std::string_view to_string(EntryKind kind) {
    switch (kind) {
        case EntryKind::anchor: return "anchor";
        case EntryKind::triple: return "triple";
        case EntryKind::sentence: return "sentence";
    }
    return "unknown";
}

std::string anchor_entry_id(std::string_view entity) { return "anchor:" + std::string(entity); }
std::string triple_entry_id(std::string_view capsule_id) { return "triple:" + std::string(capsule_id); }

void KvBank::add(KvEntry entry) {
    if (entry.kind == EntryKind::sentence) throw ConfigError("sentence entries are not stored in a bank");
    auto& index = entry.kind == EntryKind::anchor ? anchor_index_ : triple_index_;
    if (entries_.count(entry.entry_id)) throw ConfigError("duplicate bank entry " + entry.entry_id);
    if (index.count(entry.source_ref)) {
        throw ConfigError("second " + std::string(to_string(entry.kind)) + " entry for " + entry.source_ref);
    }
    index.emplace(entry.source_ref, entry.entry_id);
    std::string id = entry.entry_id;
    entries_.emplace(std::move(id), std::move(entry));
}

const KvEntry* KvBank::find(std::string_view entry_id) const {
    auto it = entries_.find(entry_id);
    return it == entries_.end() ? nullptr : &it->second;
}

const KvEntry* KvBank::anchor(std::string_view entity) const {
    auto it = anchor_index_.find(entity);
    return it == anchor_index_.end() ? nullptr : find(it->second);
}

const KvEntry* KvBank::triple(std::string_view capsule_id) const {
    auto it = triple_index_.find(capsule_id);
    return it == triple_index_.end() ? nullptr : find(it->second);
}

void KvBank::check_model(const FrozenModel& model) const {
    if (fingerprint_ != model.fingerprint()) {
        throw ConfigError("KV bank was compiled by model " + to_hex(fingerprint_) + " but the live model is " +
                          to_hex(model.fingerprint()));
    }
}

KvEntry compile_statement(std::string entry_id, EntryKind kind, std::string source_ref, std::string text,
                          const FrozenModel& model) {
    const auto tokens = tokenize(text);
    if (static_cast<int>(tokens.size()) > model.config().max_positions) {
        throw OverflowError("statement for " + entry_id + " has " + std::to_string(tokens.size()) +
                            " tokens, more than max_positions");
    }
    auto fwd = model.forward(tokens, {}, 0);
    KvEntry e;
    e.entry_id = std::move(entry_id);
    e.kind = kind;
    e.source_ref = std::move(source_ref);
    e.canonical_text = std::move(text);
    e.layers = std::move(fwd.new_kv);
    e.token_len = static_cast<int>(tokens.size());
    return e;
}

KvEntry compile_anchor(std::string_view entity, const std::optional<std::string>& type_hint,
                       const FrozenModel& model) {
    if (entity.empty()) throw ConfigError("anchor entity must be non-empty");
    return compile_statement(anchor_entry_id(entity), EntryKind::anchor, std::string(entity),
                             anchor_statement(entity, type_hint), model);
}

KvEntry compile_triple(const Capsule& capsule, const FrozenModel& model) {
    return compile_statement(triple_entry_id(capsule.capsule_id), EntryKind::triple, capsule.capsule_id,
                             triple_statement(capsule.subject, capsule.predicate, capsule.object), model);
}

CapsuleSet capsules_from_graph(const GraphIndex& index) {
    CapsuleSet out;
    for (const auto& e : index.graph.edges()) {
        const auto& ts = index.provenance.triple_sentence_index;
        auto it = ts.find(e.capsule_id);
        Capsule c{e.capsule_id, e.subject, e.predicate, e.object, it == ts.end() ? "" : it->second, ""};
        if (it != ts.end()) {
            if (auto s = index.provenance.sentence_index.find(it->second); s != index.provenance.sentence_index.end()) {
                c.provenance_doc_id = s->second.doc_id;
            }
        }
        out.insert(std::move(c));
    }
    return out;
}

namespace {

// Query time only sees the graph, so the statement uses the node names the
// graph settled on rather than the capsule's own casing.
Capsule graph_surface(const KnowledgeGraph& graph, Capsule c) {
    if (auto s = graph.find_node(c.subject)) c.subject = *s;
    if (auto o = graph.find_node(c.object)) c.object = *o;
    return c;
}

}  // namespace

KvBank compile_bank(const KnowledgeGraph& graph, const CapsuleSet& capsules, const FrozenModel& model, int jobs) {
    struct Job {
        bool anchor;
        std::string ref;
    };
    std::vector<Job> work;
    for (const auto& n : graph.nodes()) work.push_back({true, n});
    for (const auto& c : capsules.items()) work.push_back({false, c.capsule_id});

    std::vector<KvEntry> compiled(work.size());
    parallel_for(work.size(), jobs, [&](size_t i) {
        const auto& job = work[i];
        try {
            compiled[i] = job.anchor ? compile_anchor(job.ref, graph.type_of(job.ref), model)
                                     : compile_triple(graph_surface(graph, capsules.at(job.ref)), model);
        } catch (const Error& e) {
            throw Error(std::string(job.anchor ? "anchor '" : "capsule '") + job.ref + "': " + e.what());
        }
    });

    KvBank bank(model.fingerprint());
    for (auto& e : compiled) bank.add(std::move(e));
    return bank;
}

std::vector<std::uint8_t> serialize_bank(const KvBank& bank, bool strip_text) {
    ByteWriter w;
    w.bytes(kBankMagic, 4);
    w.u32(kBankVersion);
    w.bytes(bank.model_fingerprint().data(), bank.model_fingerprint().size());
    w.u32(static_cast<std::uint32_t>(bank.size()));
    for (const auto& [id, e] : bank.entries()) {
        w.str(id);
        w.u8(static_cast<std::uint8_t>(e.kind));
        w.str(e.source_ref);
        w.u32(static_cast<std::uint32_t>(e.token_len));
        for (const auto& layer : e.layers) {
            w.floats(layer.keys);
            w.floats(layer.values);
        }
    }
    if (!strip_text) {
        w.bytes(kTextMagic, 4);
        w.u32(static_cast<std::uint32_t>(bank.size()));
        for (const auto& [id, e] : bank.entries()) {
            w.str(id);
            w.str(e.canonical_text);
        }
    }
    return w.take();
}

void save_bank(const KvBank& bank, const std::string& path, bool strip_text) {
    write_file_bytes(path, serialize_bank(bank, strip_text));
}

KvBank deserialize_bank(std::span<const std::uint8_t> bytes, const FrozenModel& model) {
    ByteReader r(bytes);
    char magic[4];
    r.bytes(magic, 4);
    if (!std::equal(magic, magic + 4, kBankMagic)) throw FormatError("byte 0", "not a KVIB bank file");
    if (const auto v = r.u32(); v != kBankVersion) {
        throw FormatError("byte 4", "unsupported bank version " + std::to_string(v));
    }
    Sha256Digest fp;
    r.bytes(fp.data(), fp.size());
    KvBank bank(fp);
    bank.check_model(model);

    const auto& cfg = model.config();
    const auto count = r.u32();
    std::vector<std::string> order;
    for (std::uint32_t i = 0; i < count; ++i) {
        KvEntry e;
        e.entry_id = r.str();
        const size_t kind_at = r.offset();
        const auto kind = r.u8();
        if (kind > static_cast<std::uint8_t>(EntryKind::triple)) {
            throw FormatError("byte " + std::to_string(kind_at), "bad entry kind");
        }
        e.kind = static_cast<EntryKind>(kind);
        e.source_ref = r.str();
        e.token_len = static_cast<int>(r.u32());
        if (e.token_len > cfg.max_positions) {
            throw FormatError("byte " + std::to_string(r.offset()), "entry longer than max_positions");
        }
        const size_t n = static_cast<size_t>(cfg.num_heads) * e.token_len * cfg.head_dim;
        for (int l = 0; l < cfg.num_layers; ++l) {
            LayerKV kv = LayerKV::empty(cfg.num_heads, cfg.head_dim);
            kv.seq_len = e.token_len;
            kv.keys.resize(n);
            kv.values.resize(n);
            r.floats(kv.keys);
            r.floats(kv.values);
            e.layers.push_back(std::move(kv));
        }
        order.push_back(e.entry_id);
        bank.add(std::move(e));
    }
    if (!r.at_end()) {
        char tm[4];
        const size_t at = r.offset();
        r.bytes(tm, 4);
        if (!std::equal(tm, tm + 4, kTextMagic)) throw FormatError("byte " + std::to_string(at), "unknown trailer");
        if (r.u32() != count) throw FormatError("byte " + std::to_string(at + 4), "text section count mismatch");
        KvBank with_text(fp);
        std::map<std::string, std::string> texts;
        for (std::uint32_t i = 0; i < count; ++i) {
            auto id = r.str();
            texts[id] = r.str();
        }
        for (const auto& id : order) {
            KvEntry e = *bank.find(id);
            auto it = texts.find(id);
            if (it == texts.end()) throw FormatError("TEXT", "no text for " + id);
            e.canonical_text = it->second;
            with_text.add(std::move(e));
        }
        bank = std::move(with_text);
        if (!r.at_end()) throw FormatError("byte " + std::to_string(r.offset()), "trailing data");
    }
    return bank;
}

KvBank load_bank(const std::string& path, const FrozenModel& model) {
    return deserialize_bank(read_file_bytes(path), model);
}

PrefixKV compose_entries(std::span<const KvEntry* const> entries, const FrozenModel& model, bool reposition) {
    const auto& cfg = model.config();
    PrefixKV out;
    for (int l = 0; l < cfg.num_layers; ++l) out.layers.push_back(LayerKV::empty(cfg.num_heads, cfg.head_dim));
    for (const KvEntry* e : entries) {
        if (static_cast<int>(e->layers.size()) != cfg.num_layers) {
            throw ShapeError("entry " + e->entry_id + " has the wrong layer count");
        }
        for (int l = 0; l < cfg.num_layers; ++l) {
            const LayerKV& src = e->layers[l];
            if (src.seq_len != e->token_len) throw ShapeError("entry " + e->entry_id + " has inconsistent length");
            if (reposition) {
                out.layers[l].append(model.rotate_keys(src, out.token_len));
            } else {
                out.layers[l].append(src);
            }
        }
        out.segments.push_back(PrefixSegment{e->entry_id, out.token_len, e->token_len});
        out.token_len += e->token_len;
    }
    return out;
}

PrefixKV compose_prefix(const KvBank& bank, const FrozenModel& model, std::string_view anchor_entity,
                        std::span<const std::string> ranked_capsule_ids, bool reposition) {
    bank.check_model(model);
    std::vector<const KvEntry*> parts;
    const KvEntry* a = bank.anchor(anchor_entity);
    if (!a) throw LookupError("no anchor entry for " + anchor_entry_id(anchor_entity));
    parts.push_back(a);
    for (const auto& cid : ranked_capsule_ids) {
        const KvEntry* t = bank.triple(cid);
        if (!t) throw LookupError("no triple entry for " + triple_entry_id(cid));
        parts.push_back(t);
    }
    return compose_entries(parts, model, reposition);
}

}  // namespace kvi

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kvi/capsule.hpp"
#include "kvi/graph.hpp"
#include "kvi/model.hpp"

namespace kvi {

enum class EntryKind : std::uint8_t {
    anchor = 0,
    triple = 1,
    sentence = 2,  // query-time only, never stored in a bank
};

std::string_view to_string(EntryKind kind);

/// Precompiled per-layer KV of one canonical statement. The statement text is
/// kept for audit; nothing at query time reads it.
struct KvEntry {
    std::string entry_id;
    EntryKind kind = EntryKind::triple;
    std::string source_ref;  // entity name or capsule_id
    std::string canonical_text;
    KvState layers;
    int token_len = 0;

    bool operator==(const KvEntry&) const = default;
};

std::string anchor_entry_id(std::string_view entity);
std::string triple_entry_id(std::string_view capsule_id);

class KvBank {
public:
    KvBank() = default;
    explicit KvBank(const Sha256Digest& fingerprint) : fingerprint_(fingerprint) {}

    const Sha256Digest& model_fingerprint() const noexcept { return fingerprint_; }

    /// Throws ConfigError on a duplicate id or a second anchor/triple for the same source.
    void add(KvEntry entry);

    const KvEntry* find(std::string_view entry_id) const;
    const KvEntry* anchor(std::string_view entity) const;
    const KvEntry* triple(std::string_view capsule_id) const;

    const std::map<std::string, KvEntry, std::less<>>& entries() const noexcept { return entries_; }
    size_t size() const noexcept { return entries_.size(); }

    /// Throws ConfigError when the bank was compiled by different weights.
    void check_model(const FrozenModel& model) const;

    bool operator==(const KvBank&) const = default;

private:
    Sha256Digest fingerprint_{};
    std::map<std::string, KvEntry, std::less<>> entries_;
    std::map<std::string, std::string, std::less<>> anchor_index_;
    std::map<std::string, std::string, std::less<>> triple_index_;
};

/// One forward pass over `text` at base position 0.
KvEntry compile_statement(std::string entry_id, EntryKind kind, std::string source_ref,
                          std::string text, const FrozenModel& model);

KvEntry compile_anchor(std::string_view entity, const std::optional<std::string>& type_hint,
                       const FrozenModel& model);
KvEntry compile_triple(const Capsule& capsule, const FrozenModel& model);

/// One anchor per graph node (type hints from the graph) plus one triple
/// entry per capsule, verbalized with the graph's node names. `jobs` <= 0 uses the hardware concurrency; output does
/// not depend on it.
KvBank compile_bank(const KnowledgeGraph& graph, const CapsuleSet& capsules, const FrozenModel& model,
                    int jobs = 0);

/// Capsules reconstructed from graph edges (subject/predicate/object/id),
/// for compiling a bank from graph_index.json alone.
CapsuleSet capsules_from_graph(const GraphIndex& index);

void save_bank(const KvBank& bank, const std::string& path, bool strip_text = false);
std::vector<std::uint8_t> serialize_bank(const KvBank& bank, bool strip_text = false);
/// Verifies the fingerprint against `model` before reading any entry.
KvBank load_bank(const std::string& path, const FrozenModel& model);
KvBank deserialize_bank(std::span<const std::uint8_t> bytes, const FrozenModel& model);

struct PrefixSegment {
    std::string entry_id;
    int offset = 0;
    int length = 0;

    bool operator==(const PrefixSegment&) const = default;
};

/// Concatenated external KV: per layer [entry_0 ; entry_1 ; ...].
struct PrefixKV {
    KvState layers;
    int token_len = 0;
    std::vector<PrefixSegment> segments;

    bool empty() const noexcept { return token_len == 0; }
};

/// Concatenates entries in order. With `reposition`, entry i's keys are
/// rotated so that it starts at the running token offset.
PrefixKV compose_entries(std::span<const KvEntry* const> entries, const FrozenModel& model, bool reposition);

/// Anchor of `anchor_entity`, then triple entries of `ranked_capsule_ids` in order.
PrefixKV compose_prefix(const KvBank& bank, const FrozenModel& model, std::string_view anchor_entity,
                        std::span<const std::string> ranked_capsule_ids, bool reposition = true);

}  // namespace kvi

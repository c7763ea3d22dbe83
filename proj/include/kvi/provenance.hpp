#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "kvi/capsule.hpp"

namespace kvi {

struct SentenceRecord {
    std::string text;
    std::string doc_id;
    std::string block_id;
    std::vector<std::string> capsule_ids;

    bool operator==(const SentenceRecord&) const = default;
};

/// Sentence store plus the capsule -> sentence join.
struct ProvenanceIndex {
    std::map<std::string, SentenceRecord, std::less<>> sentence_index;
    std::map<std::string, std::string, std::less<>> triple_sentence_index;

    bool operator==(const ProvenanceIndex&) const = default;

    /// All sentences in id order.
    std::vector<Sentence> sentences() const;

    /// Throws FormatError if the two maps do not close into a bijective join.
    void check_consistency() const;
};

/// Evidence sentence of a capsule. Throws LookupError for unknown ids.
Sentence resolve_provenance(std::string_view capsule_id, const ProvenanceIndex& index);

}  // namespace kvi

#include "kvi/provenance.hpp"

#include <algorithm>

#include "kvi/errors.hpp"

namespace kvi {

std::vector<Sentence> ProvenanceIndex::sentences() const {
    std::vector<Sentence> out;
    out.reserve(sentence_index.size());
    for (const auto& [id, rec] : sentence_index) {
        out.push_back(Sentence{id, rec.text, rec.doc_id, rec.block_id});
    }
    return out;
}

void ProvenanceIndex::check_consistency() const {
    for (const auto& [cid, sid] : triple_sentence_index) {
        auto it = sentence_index.find(sid);
        if (it == sentence_index.end()) {
            throw FormatError("/triple_sentence_index/" + cid, "unknown sentence " + sid);
        }
        const auto& ids = it->second.capsule_ids;
        if (std::find(ids.begin(), ids.end(), cid) == ids.end()) {
            throw FormatError("/sentence_index/" + sid + "/capsule_ids", "missing " + cid);
        }
    }
    for (const auto& [sid, rec] : sentence_index) {
        for (size_t i = 0; i < rec.capsule_ids.size(); ++i) {
            auto it = triple_sentence_index.find(rec.capsule_ids[i]);
            if (it == triple_sentence_index.end() || it->second != sid) {
                throw FormatError("/sentence_index/" + sid + "/capsule_ids/" + std::to_string(i),
                                  "not joined back to this sentence");
            }
        }
    }
}

Sentence resolve_provenance(std::string_view capsule_id, const ProvenanceIndex& index) {
    auto it = index.triple_sentence_index.find(capsule_id);
    if (it == index.triple_sentence_index.end()) {
        throw LookupError("unknown capsule_id: " + std::string(capsule_id));
    }
    auto s = index.sentence_index.find(it->second);
    if (s == index.sentence_index.end()) {
        throw LookupError("capsule " + std::string(capsule_id) + " points at missing sentence " +
                          it->second);
    }
    return Sentence{s->first, s->second.text, s->second.doc_id, s->second.block_id};
}

}  // namespace kvi

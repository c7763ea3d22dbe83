#include "kvi/capsule.hpp"

#include "json.hpp"

#include <set>

#include "kvi/binary_io.hpp"
#include "kvi/errors.hpp"
#include "kvi/hashing.hpp"

namespace kvi {

using nlohmann::json;

std::string make_capsule_id(std::string_view subject, std::string_view predicate,
                            std::string_view object, std::string_view sentence_id) {
    std::string key;
    key.reserve(subject.size() + predicate.size() + object.size() + sentence_id.size() + 3);
    key.append(subject).append("\x1f").append(predicate).append("\x1f");
    key.append(object).append("\x1f").append(sentence_id);
    const auto digest = sha256(key);
    return "c" + to_hex(std::span(digest).first(8));
}

CapsuleSet::CapsuleSet(std::vector<Capsule> capsules) {
    for (auto& c : capsules) {
        std::string id = c.capsule_id;
        if (!insert(std::move(c))) throw ConfigError("duplicate capsule_id: " + id);
    }
}

bool CapsuleSet::insert(Capsule capsule) {
    if (by_id_.count(capsule.capsule_id)) return false;
    by_id_.emplace(capsule.capsule_id, items_.size());
    items_.push_back(std::move(capsule));
    return true;
}

const Capsule* CapsuleSet::find(std::string_view capsule_id) const {
    auto it = by_id_.find(capsule_id);
    return it == by_id_.end() ? nullptr : &items_[it->second];
}

const Capsule& CapsuleSet::at(std::string_view capsule_id) const {
    if (const auto* c = find(capsule_id)) return *c;
    throw LookupError("unknown capsule_id: " + std::string(capsule_id));
}

void CapsuleSet::validate_provenance(std::span<const Sentence> sentences) const {
    std::set<std::string_view> ids;
    for (const auto& s : sentences) ids.insert(s.sentence_id);
    std::string missing;
    for (const auto& c : items_) {
        if (!ids.count(c.provenance_sentence_id)) {
            if (!missing.empty()) missing += ", ";
            missing += c.capsule_id + " -> " + c.provenance_sentence_id;
        }
    }
    if (!missing.empty()) throw LookupError("dangling provenance: " + missing);
}

namespace {

const std::string& require_string(const json& obj, const char* key, const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end() || !it->is_string()) {
        throw FormatError(where + "/" + key, "expected string");
    }
    return it->get_ref<const std::string&>();
}

json parse_json_file(const std::string& path) {
    try {
        return json::parse(read_file_text(path));
    } catch (const json::parse_error& e) {
        throw FormatError("", path + ": " + e.what());
    }
}

}  // namespace

void save_capsules(const CapsuleSet& capsules, const std::string& path) {
    json arr = json::array();
    for (const auto& c : capsules.items()) {
        arr.push_back({{"id", c.capsule_id},
                       {"subject", c.subject},
                       {"predicate", c.predicate},
                       {"object", c.object},
                       {"provenance",
                        {{"sentence_id", c.provenance_sentence_id},
                         {"doc_id", c.provenance_doc_id}}}});
    }
    write_file_text(path, arr.dump(2) + "\n");
}

CapsuleSet load_capsules(const std::string& path, std::span<const Sentence> sentences) {
    const json doc = parse_json_file(path);
    if (!doc.is_array()) throw FormatError("", "capsule file must be a JSON array");
    CapsuleSet out;
    for (size_t i = 0; i < doc.size(); ++i) {
        const std::string where = "/" + std::to_string(i);
        const json& rec = doc[i];
        if (!rec.is_object()) throw FormatError(where, "expected object");
        Capsule c;
        c.capsule_id = require_string(rec, "id", where);
        c.subject = require_string(rec, "subject", where);
        c.predicate = require_string(rec, "predicate", where);
        c.object = require_string(rec, "object", where);
        auto prov = rec.find("provenance");
        if (prov == rec.end() || !prov->is_object()) {
            throw FormatError(where + "/provenance", "expected object");
        }
        c.provenance_sentence_id = require_string(*prov, "sentence_id", where + "/provenance");
        c.provenance_doc_id = require_string(*prov, "doc_id", where + "/provenance");
        if (c.subject.empty() || c.predicate.empty() || c.object.empty()) {
            throw FormatError(where, "subject, predicate and object must be non-empty");
        }
        std::string id = c.capsule_id;
        if (!out.insert(std::move(c))) throw FormatError(where + "/id", "duplicate capsule_id " + id);
    }
    out.validate_provenance(sentences);
    return out;
}

void save_sentences(std::span<const Sentence> sentences, const std::string& path) {
    json arr = json::array();
    for (const auto& s : sentences) {
        arr.push_back({{"sentence_id", s.sentence_id},
                       {"text", s.text},
                       {"doc_id", s.doc_id},
                       {"block_id", s.block_id}});
    }
    write_file_text(path, arr.dump(2) + "\n");
}

std::vector<Sentence> load_sentences(const std::string& path) {
    const json doc = parse_json_file(path);
    if (!doc.is_array()) throw FormatError("", "sentence file must be a JSON array");
    std::vector<Sentence> out;
    std::set<std::string> seen;
    for (size_t i = 0; i < doc.size(); ++i) {
        const std::string where = "/" + std::to_string(i);
        if (!doc[i].is_object()) throw FormatError(where, "expected object");
        Sentence s{require_string(doc[i], "sentence_id", where), require_string(doc[i], "text", where),
                   require_string(doc[i], "doc_id", where), require_string(doc[i], "block_id", where)};
        if (!seen.insert(s.sentence_id).second) {
            throw FormatError(where + "/sentence_id", "duplicate sentence_id " + s.sentence_id);
        }
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace kvi

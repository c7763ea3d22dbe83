#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace kvi {

struct Sentence {
    std::string sentence_id;
    std::string text;
    std::string doc_id;
    std::string block_id;

    bool operator==(const Sentence&) const = default;
};

/// Symbolic knowledge unit: (subject, predicate, object) plus the id of the
/// sentence it was read from.
struct Capsule {
    std::string capsule_id;
    std::string subject;
    std::string predicate;
    std::string object;
    std::string provenance_sentence_id;
    std::string provenance_doc_id;

    bool operator==(const Capsule&) const = default;
};

/// Content address of a capsule: first 16 hex digits of
/// sha256(subject \x1f predicate \x1f object \x1f sentence_id), prefixed "c".
std::string make_capsule_id(std::string_view subject, std::string_view predicate,
                            std::string_view object, std::string_view sentence_id);

/// Ordered capsule collection with unique ids.
class CapsuleSet {
public:
    CapsuleSet() = default;
    /// Throws ConfigError naming the first duplicated id.
    explicit CapsuleSet(std::vector<Capsule> capsules);

    /// Returns false (and leaves the set unchanged) if the id already exists.
    bool insert(Capsule capsule);

    const Capsule* find(std::string_view capsule_id) const;
    const Capsule& at(std::string_view capsule_id) const;

    std::span<const Capsule> items() const noexcept { return items_; }
    size_t size() const noexcept { return items_.size(); }
    bool empty() const noexcept { return items_.empty(); }

    /// Throws LookupError listing every capsule whose provenance is absent.
    void validate_provenance(std::span<const Sentence> sentences) const;

    bool operator==(const CapsuleSet& other) const { return items_ == other.items_; }

private:
    std::vector<Capsule> items_;
    std::map<std::string, size_t, std::less<>> by_id_;
};

void save_capsules(const CapsuleSet& capsules, const std::string& path);
/// Validates ids and provenance against `sentences`.
CapsuleSet load_capsules(const std::string& path, std::span<const Sentence> sentences);

void save_sentences(std::span<const Sentence> sentences, const std::string& path);
std::vector<Sentence> load_sentences(const std::string& path);

}  // namespace kvi

#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "kvi/capsule.hpp"
#include "kvi/extraction.hpp"
#include "kvi/graph.hpp"
#include "kvi/segmenter.hpp"
#include "kvi/binary_io.hpp"
#include "kvi/hashing.hpp"

namespace kvi::test {

inline std::string data_path(const std::string& rel) { return std::string(KVI_SOURCE_DIR) + "/data/" + rel; }

/// Fresh, empty scratch directory under the build tree.
inline std::string scratch_dir(const std::string& name) {
    const auto p = std::filesystem::path(KVI_TEST_TMP) / name;
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p.string();
}

struct Corpus {
    std::vector<Sentence> sentences;
    CapsuleSet capsules;
    GraphIndex index;
};

inline std::map<std::string, std::string> load_type_map(const std::string& path) {
    std::map<std::string, std::string> out;
    const auto j = nlohmann::json::parse(read_file_text(path));
    for (const auto& [k, v] : j.items()) out[k] = v.get<std::string>();
    return out;
}

/// Builds a corpus from a data/ fixture directory (docs/, rules.json, types.json).
inline Corpus load_corpus(const std::string& name) {
    namespace fs = std::filesystem;
    const fs::path root = data_path(name);
    std::vector<fs::path> docs;
    for (const auto& e : fs::directory_iterator(root / "docs")) docs.push_back(e.path());
    std::sort(docs.begin(), docs.end());
    Corpus c;
    for (const auto& d : docs) {
        auto s = segment_sentences(read_file_text(d.string()), d.stem().string());
        c.sentences.insert(c.sentences.end(), s.begin(), s.end());
    }
    const auto rules = ExtractionRuleset::from_json_file((root / "rules.json").string());
    c.capsules = extract_corpus(c.sentences, PatternExtractor(rules));
    c.index = build_graph(c.capsules, c.sentences, load_type_map((root / "types.json").string()));
    return c;
}

inline const Capsule* find_capsule(const CapsuleSet& set, std::string_view s, std::string_view p, std::string_view o) {
    for (const auto& c : set.items()) {
        if (c.subject == s && c.predicate == p && c.object == o) return &c;
    }
    return nullptr;
}

inline std::vector<int> random_tokens(std::mt19937_64& rng, int n, int vocab = 256) {
    std::uniform_int_distribution<int> d(0, vocab - 1);
    std::vector<int> out(static_cast<size_t>(n));
    for (auto& t : out) t = d(rng);
    return out;
}

inline std::string random_words(std::mt19937_64& rng, int n) {
    static const char* kWords[] = {"fever", "tick", "virus", "patient", "rash", "China", "cough", "severe",
                                   "liver", "blood", "case", "report", "onset", "dog", "mosquito", "rice"};
    std::uniform_int_distribution<int> d(0, 15);
    std::string out;
    for (int i = 0; i < n; ++i) {
        if (i) out += ' ';
        out += kWords[d(rng)];
    }
    return out;
}

}  // namespace kvi::test

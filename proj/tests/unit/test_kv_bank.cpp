#include "doctest.h"

#include "model_oracle.hpp"
#include "support.hpp"

#include "kvi/errors.hpp"
#include "kvi/kv_bank.hpp"

using namespace kvi;

namespace {

const FrozenModel& model() {
    static const FrozenModel m{ModelConfig{}};
    return m;
}

const test::Corpus& mini() {
    static const auto c = test::load_corpus("sftsv_mini");
    return c;
}

const KvBank& mini_bank() {
    static const auto b = compile_bank(mini().index.graph, mini().capsules, model(), 1);
    return b;
}

const Capsule& c1() { return *test::find_capsule(mini().capsules, "SFTSV infection", "has_symptom", "fever"); }

}  // namespace

TEST_CASE("compile_anchor") {
    const auto a = compile_anchor("SFTSV infection", std::string("viral disease"), model());
    CHECK(a.canonical_text == "SFTSV infection is a viral disease.");
    CHECK(a.entry_id == "anchor:SFTSV infection");
    CHECK(a.kind == EntryKind::anchor);
    CHECK(a.token_len == static_cast<int>(a.canonical_text.size()));
    CHECK(compile_anchor("fever", std::nullopt, model()).canonical_text == "fever.");

    const auto direct = model().forward(tokenize(a.canonical_text), {}, 0).new_kv;
    CHECK(a.layers == direct);
    for (const auto& l : a.layers) {
        CHECK(l.seq_len == a.token_len);
        CHECK(l.base_position == 0);
    }
    ModelConfig tiny;
    tiny.max_positions = 8;
    CHECK_THROWS_AS(compile_anchor("SFTSV infection", std::nullopt, FrozenModel{tiny}), OverflowError);
}

TEST_CASE("compile_triple") {
    const auto e = compile_triple(c1(), model());
    CHECK(e.canonical_text == "SFTSV infection has symptom fever.");
    CHECK(e.source_ref == c1().capsule_id);
    CHECK(e.entry_id == "triple:" + c1().capsule_id);

    Capsule caused{"", "SFTSV infection", "causes", "fever", "x#s0", "x"};
    caused.capsule_id = make_capsule_id(caused.subject, caused.predicate, caused.object, "x#s0");
    CHECK(compile_triple(caused, model()).canonical_text == "SFTSV infection causes fever.");

    Capsule twin = caused;
    twin.provenance_sentence_id = "y#s3";
    twin.capsule_id = make_capsule_id(twin.subject, twin.predicate, twin.object, "y#s3");
    const auto a = compile_triple(caused, model());
    const auto b = compile_triple(twin, model());
    CHECK(a.layers == b.layers);
    CHECK(a.entry_id != b.entry_id);

    Capsule empty_rel = caused;
    empty_rel.predicate = "__";
    CHECK_THROWS_AS(compile_triple(empty_rel, model()), ConfigError);
}

TEST_CASE("compile_bank") {
    const auto& bank = mini_bank();
    int anchors = 0, triples = 0;
    for (const auto& [id, e] : bank.entries()) (e.kind == EntryKind::anchor ? anchors : triples)++;
    CHECK(anchors == 4);
    CHECK(triples == 3);
    CHECK(bank.model_fingerprint() == model().fingerprint());
    CHECK(bank.anchor("SFTSV infection") != nullptr);
    CHECK(bank.triple(c1().capsule_id) != nullptr);

    const auto empty_graph = build_graph(CapsuleSet{}, {});
    const auto empty = compile_bank(empty_graph.graph, CapsuleSet{}, model());
    CHECK(empty.size() == 0);
    CHECK(empty.model_fingerprint() == model().fingerprint());

    const auto parallel = compile_bank(mini().index.graph, mini().capsules, model(), 4);
    CHECK(serialize_bank(parallel) == serialize_bank(bank));
}

TEST_CASE("triple statements use graph node names") {
    // "dengue fever" and "Dengue fever" share one node; the statement must be
    // the one query time rebuilds from the edge.
    const auto c = test::load_corpus("sftsv_corpus");
    const auto bank = compile_bank(c.index.graph, c.capsules, model());
    bool folded = false;
    for (const auto& e : c.index.graph.edges()) {
        CHECK(bank.triple(e.capsule_id)->canonical_text == triple_statement(e.subject, e.predicate, e.object));
        folded |= c.capsules.at(e.capsule_id).subject != e.subject;
    }
    CHECK(folded);
}

TEST_CASE("bank rejects duplicates and query-time kinds") {
    KvBank bank(model().fingerprint());
    bank.add(compile_triple(c1(), model()));
    CHECK_THROWS_AS(bank.add(compile_triple(c1(), model())), ConfigError);
    CHECK_THROWS_AS(bank.add(compile_statement("sentence:x", EntryKind::sentence, "x", "text", model())), ConfigError);
}

TEST_CASE("bank file round trip, strip-text and binding") {
    const auto dir = test::scratch_dir("bank_io");
    const auto& bank = mini_bank();
    save_bank(bank, dir + "/kv_bank.bin");
    const auto loaded = load_bank(dir + "/kv_bank.bin", model());
    CHECK(loaded == bank);

    save_bank(bank, dir + "/again.bin");
    CHECK(read_file_bytes(dir + "/again.bin") == read_file_bytes(dir + "/kv_bank.bin"));
    const auto recompiled = compile_bank(mini().index.graph, mini().capsules, FrozenModel{ModelConfig{}});
    CHECK(serialize_bank(recompiled) == read_file_bytes(dir + "/kv_bank.bin"));

    save_bank(bank, dir + "/stripped.bin", true);
    const auto stripped = load_bank(dir + "/stripped.bin", model());
    CHECK(read_file_bytes(dir + "/stripped.bin").size() < read_file_bytes(dir + "/kv_bank.bin").size());
    for (const auto& [id, e] : stripped.entries()) {
        CHECK(e.canonical_text.empty());
        CHECK(e.layers == bank.find(id)->layers);
    }
    const auto blob = read_file_bytes(dir + "/stripped.bin");
    const std::string as_text(blob.begin(), blob.end());
    CHECK(as_text.find("has symptom") == std::string::npos);

    // Different weights: rejected on the header, even if entries are garbage.
    ModelConfig other;
    other.seed = 8;
    auto truncated = read_file_bytes(dir + "/kv_bank.bin");
    truncated.resize(4 + 4 + 32 + 4 + 10);
    CHECK_THROWS_AS(deserialize_bank(truncated, FrozenModel{other}), ConfigError);
    CHECK_THROWS_AS(deserialize_bank(truncated, model()), FormatError);
    auto bad_magic = read_file_bytes(dir + "/kv_bank.bin");
    bad_magic[1] = 'Z';
    CHECK_THROWS_AS(deserialize_bank(bad_magic, model()), FormatError);
    CHECK_THROWS_AS(bank.check_model(FrozenModel{other}), ConfigError);
}

TEST_CASE("compose_prefix ordering, additivity and errors") {
    const auto& bank = mini_bank();
    const auto* anchor = bank.anchor("SFTSV infection");
    const auto* t1 = bank.triple(c1().capsule_id);
    const std::vector<std::string> ranked = {c1().capsule_id};
    const auto p = compose_prefix(bank, model(), "SFTSV infection", ranked);
    CHECK(p.token_len == anchor->token_len + t1->token_len);
    REQUIRE(p.segments.size() == 2);
    CHECK(p.segments[0] == PrefixSegment{anchor->entry_id, 0, anchor->token_len});
    CHECK(p.segments[1] == PrefixSegment{t1->entry_id, anchor->token_len, t1->token_len});
    for (const auto& l : p.layers) CHECK(l.seq_len == p.token_len);

    const auto alone = compose_prefix(bank, model(), "SFTSV infection", {});
    CHECK(alone.token_len == anchor->token_len);
    CHECK(alone.layers == anchor->layers);

    const std::vector<std::string> missing = {"cdeadbeefdeadbeef"};
    try {
        compose_prefix(bank, model(), "SFTSV infection", missing);
        FAIL("missing entry accepted");
    } catch (const LookupError& e) {
        CHECK(std::string(e.what()).find("cdeadbeefdeadbeef") != std::string::npos);
    }
    CHECK_THROWS_AS(compose_prefix(bank, model(), "malaria", {}), LookupError);
    ModelConfig other;
    other.seed = 99;
    CHECK_THROWS_AS(compose_prefix(bank, FrozenModel{other}, "SFTSV infection", ranked), ConfigError);
}

TEST_CASE("entry independence and the masked-forward oracle") {
    const auto& bank = mini_bank();
    std::vector<std::string> all;
    for (const auto& c : mini().capsules.items()) all.push_back(c.capsule_id);
    const auto* anchor = bank.anchor("SFTSV infection");
    const auto one = compose_prefix(bank, model(), "SFTSV infection", std::span(all).first(1));
    const auto three = compose_prefix(bank, model(), "SFTSV infection", all);
    const int off = anchor->token_len;
    const int len = bank.triple(all[0])->token_len;
    for (size_t l = 0; l < one.layers.size(); ++l) {
        CHECK(three.layers[l].slice(off, len).values == one.layers[l].slice(off, len).values);
        CHECK(test::max_abs_diff(three.layers[l].slice(off, len).keys, one.layers[l].slice(off, len).keys) <= 1e-5f);
    }

    const auto flat = compose_prefix(bank, model(), "SFTSV infection", all, false);
    const auto* last = bank.triple(all[2]);
    const int loff = flat.segments[3].offset;
    for (size_t l = 0; l < flat.layers.size(); ++l) {
        CHECK(flat.layers[l].slice(loff, last->token_len).keys == last->layers[l].keys);
    }

    std::vector<std::string> texts = {anchor->canonical_text};
    for (const auto& id : all) texts.push_back(bank.triple(id)->canonical_text);
    const auto ref = test::masked_reference(model(), texts);
    CHECK(test::max_abs_diff(three.layers, ref.kv) <= 1e-5f);
}

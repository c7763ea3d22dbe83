#include "doctest.h"

#include <algorithm>
#include <random>

#include "support.hpp"

#include "kvi/errors.hpp"
#include "kvi/retrieval.hpp"

using namespace kvi;

namespace {

const test::Corpus& mini() {
    static const auto c = test::load_corpus("sftsv_mini");
    return c;
}

KnowledgeGraph graph_with(std::set<std::string> nodes) { return KnowledgeGraph(std::move(nodes), {}); }

}  // namespace

TEST_CASE("link_entity") {
    const auto& g = mini().index.graph;
    CHECK(link_entity({"What symptom does SFTSV infection cause?"}, g) == std::optional<std::string>("SFTSV infection"));
    CHECK_FALSE(link_entity({"what is love"}, g));
    CHECK(link_entity({"Is fever typical of sftsv INFECTION?"}, g) == std::optional<std::string>("SFTSV infection"));
    CHECK_FALSE(link_entity({"feverish patients"}, g));

    CHECK_FALSE(link_entity({"SFTSV distribution in China in 2012"}, g));
    const auto with_short = graph_with({"SFTSV", "China", "fever"});
    CHECK(link_entity({"SFTSV distribution in China in 2012"}, with_short) == std::optional<std::string>("SFTSV"));
    const auto tie = graph_with({"tick", "bite"});
    CHECK(link_entity({"bite of a tick"}, tie) == std::optional<std::string>("bite"));
    const auto lex = graph_with({"ab cd", "ab"});
    CHECK(link_entity({"ab cd"}, lex) == std::optional<std::string>("ab cd"));
}

TEST_CASE("classify_intent") {
    const auto& g = mini().index.graph;
    const IntentRules rules(std::vector<IntentRule>{{"symptom", {"has_symptom", "causes"}}});
    CHECK(classify_intent({"what symptoms does X cause"}, rules, g) == RelationSet{"has_symptom", "causes"});
    CHECK(classify_intent({"tell me about X"}, rules, g) == RelationSet{"has_symptom", "causes"});

    const IntentRules only(std::vector<IntentRule>{{"vector", {"transmitted_by"}}});
    CHECK(classify_intent({"nothing matches"}, only, g) == RelationSet{"has_symptom", "causes"});
    CHECK(only.rules().size() == 2);

    const KnowledgeGraph drugs({"DB001", "DB002"}, {Edge{"DB001", "interacts_with", "DB002", "c1"},
                                                    Edge{"DB001", "binds", "DB002", "c2"}});
    Query med{"DB001 interacts_with DBxxxx?", std::string(kMedhopMode)};
    CHECK(classify_intent(med, IntentRules{}, drugs) == RelationSet{"interacts_with"});
    CHECK(classify_intent(Query{med.text, std::nullopt}, IntentRules{}, drugs) == RelationSet{"binds", "interacts_with"});

    CHECK_THROWS_AS(IntentRules(std::vector<IntentRule>{{"(unclosed", {"x"}}}), ConfigError);
    CHECK_THROWS_AS(IntentRules::from_json_text("[{\"match\": 3}]"), ConfigError);
    CHECK(IntentRules::from_json_file(test::data_path("sftsv_corpus/intent_rules.json")).rules().size() == 5);
}

TEST_CASE("drm_score matches the scripted recomputation") {
    const auto j = nlohmann::json::parse(read_file_text(std::string(KVI_SOURCE_DIR) + "/tests/oracles/drm_expected.json"));
    const auto query = j["query"].get<std::string>();
    std::vector<Sentence> sentences;
    for (const auto& s : j["sentences"]) {
        const auto text = s["text"].get<std::string>();
        CHECK(drm_score(query, text) == doctest::Approx(s["drm"].get<double>()).epsilon(1e-15));
        sentences.push_back(Sentence{s["id"].get<std::string>(), text, "d", "d#b0"});
    }
    for (const auto& p : j["pairs"]) {
        CHECK(drm_score(p["a"].get<std::string>(), p["b"].get<std::string>()) ==
              doctest::Approx(p["drm"].get<double>()).epsilon(1e-15));
    }
    const auto ranked = dense_retrieve(query, sentences, 100);
    REQUIRE(ranked.size() == sentences.size());
    for (size_t i = 0; i < ranked.size(); ++i) {
        CHECK(ranked[i].sentence_id == j["dense_order"][i].get<std::string>());
        CHECK(ranked[i].score == doctest::Approx(j["dense_scores"][i].get<double>()).epsilon(1e-15));
    }
}

TEST_CASE("drm_score properties") {
    CHECK(drm_score("SFTSV infection causes fever", "SFTSV infection causes fever") == 1.0);
    // Token-disjoint pair: J = 0 and the hashed cosine sits near 0.
    const double d = drm_score("alpha beta gamma", "delta epsilon zeta");
    CHECK(d == doctest::Approx(0.25).epsilon(0.05 / 0.25));
    std::mt19937_64 rng(4);
    for (int i = 0; i < 2000; ++i) {
        const auto a = test::random_words(rng, 1 + static_cast<int>(rng() % 8));
        const auto b = test::random_words(rng, static_cast<int>(rng() % 8));
        const double s = drm_score(a, b);
        REQUIRE(std::isfinite(s));
        REQUIRE(s >= 0.0);
        REQUIRE(s <= 1.0);
    }
}

TEST_CASE("select_topk") {
    std::vector<ScoredTriple> in = {
        {"c3", 0.5, "s", 2, "r"}, {"c1", 0.5, "s", 1, "r"}, {"c2", 0.9, "s", 2, "r"}, {"c0", 0.5, "s", 1, "r"}};
    CHECK(select_topk(in, 0).empty());
    const auto all = select_topk(in, 10);
    REQUIRE(all.size() == 4);
    CHECK(all[0].capsule_id == "c2");
    CHECK(all[1].capsule_id == "c0");
    CHECK(all[2].capsule_id == "c1");
    CHECK(all[3].capsule_id == "c3");
    std::mt19937_64 rng(1);
    for (int i = 0; i < 50; ++i) {
        std::shuffle(in.begin(), in.end(), rng);
        REQUIRE(select_topk(in, 3) == std::vector<ScoredTriple>(all.begin(), all.begin() + 3));
    }
}

TEST_CASE("score_candidates respects the relation filter") {
    const auto& c = mini();
    const Query q{"What symptom does SFTSV infection cause?"};
    const auto rels = classify_intent(q, IntentRules::from_json_file(test::data_path("sftsv_mini/intent_rules.json")),
                                      c.index.graph);
    CHECK(rels == RelationSet{"has_symptom"});
    const auto hits = traverse(c.index.graph, "SFTSV infection", TraversalConfig{2, rels, Direction::outgoing});
    const auto scored = score_candidates(q, hits, c.index, DrmScorer{});
    CHECK(scored.size() == 2);
    for (const auto& s : scored) {
        CHECK(rels.count(s.predicate) == 1);
        CHECK(s.score >= 0.0);
        CHECK(s.score <= 1.0);
        CHECK(s.evidence_sentence_id == c.index.provenance.triple_sentence_index.at(s.capsule_id));
    }
    CHECK(score_candidates(q, hits, c.index, DrmScorer{}, 1.1).empty());
}

TEST_CASE("dense_retrieve") {
    const auto& s = mini().sentences;
    const auto top = dense_retrieve(s[1].text, s, 1);
    REQUIRE(top.size() == 1);
    CHECK(top[0].sentence_id == s[1].sentence_id);
    const auto all = dense_retrieve("fever", s, 99);
    CHECK(all.size() == s.size());

    // Brute force over the same embedding.
    std::mt19937_64 rng(8);
    std::vector<Sentence> corpus;
    for (int i = 0; i < 40; ++i) corpus.push_back(Sentence{"s" + std::to_string(100 + i), test::random_words(rng, 6), "d", "b"});
    const auto q = test::random_words(rng, 4);
    std::vector<std::pair<double, std::string>> expect;
    for (const auto& c : corpus) expect.push_back({-cosine(hashed_embedding(q), hashed_embedding(c.text)), c.sentence_id});
    std::sort(expect.begin(), expect.end());
    const auto got = dense_retrieve(q, corpus, 10);
    for (size_t i = 0; i < got.size(); ++i) CHECK(got[i].sentence_id == expect[i].second);
}

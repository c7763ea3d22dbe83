#include "doctest.h"

#include <random>

#include "support.hpp"

#include "kvi/errors.hpp"
#include "kvi/eval.hpp"
#include "kvi/stats.hpp"

using namespace kvi;

TEST_CASE("canonicalize") {
    CHECK(canonicalize("  Fever \n") == "fever");
    CHECK(canonicalize("Multi-Organ   Failure") == "multi-organ failure");
    CHECK(canonicalize("The answer is DB00316.", true) == "db00316");
    CHECK(canonicalize("no id here", true) == "");
    CHECK(canonicalize("xdb12 then DB7 and DB8", true) == "db7");
    std::mt19937_64 rng(2);
    const std::string alphabet = "aB \t\nDb0123.,xYZ";
    for (int i = 0; i < 2000; ++i) {
        std::string s;
        for (int k = static_cast<int>(rng() % 30); k > 0; --k) s += alphabet[rng() % alphabet.size()];
        for (bool med : {false, true}) REQUIRE(canonicalize(canonicalize(s, med), med) == canonicalize(s, med));
    }
}

TEST_CASE("exact_match") {
    const std::vector<std::string> gold = {"fever"};
    CHECK(exact_match("Fever", gold) == 1);
    CHECK(exact_match("fevers", gold) == 0);
    CHECK(exact_match(" fever ", std::vector<std::string>{"chills", "FEVER"}) == 1);
    CHECK(exact_match("It is DB00316", std::vector<std::string>{"db00316"}, true) == 1);

    // Hand-scored fixture: 12 of 20 match. Punctuation is kept, so "X." misses.
    const std::vector<std::pair<std::string, std::vector<std::string>>> fx = {
        {"fever", {"fever"}}, {"Fever", {"fever"}}, {"  fever", {"fever"}}, {"fevers", {"fever"}},
        {"rash", {"rash", "spots"}}, {"spots", {"rash", "spots"}}, {"blots", {"rash", "spots"}},
        {"china", {"China"}}, {"South  Korea", {"south korea"}}, {"Korea", {"south korea"}},
        {"ticks", {"Haemaphysalis longicornis ticks"}}, {"Haemaphysalis Longicornis ticks", {"haemaphysalis longicornis ticks"}},
        {"", {"x"}}, {"x", {"x"}}, {"X.", {"x"}}, {"multi-organ failure", {"multi-organ failure"}},
        {"multi organ failure", {"multi-organ failure"}}, {"anemia", {"severe anemia"}}, {"severe anemia", {"severe anemia"}},
        {"\tmalaria\n", {"Malaria"}}};
    std::vector<double> scores;
    for (const auto& [p, g] : fx) scores.push_back(exact_match(p, g));
    CHECK(scores.size() == 20);
    CHECK(100.0 * mean(scores) == doctest::Approx(60.0));
}

TEST_CASE("bootstrap_ci") {
    const std::vector<double> zeros(37, 0.0), ones(37, 1.0);
    const auto z = bootstrap_ci(zeros, 1000, 0.95, 7);
    CHECK(z.lo == 0.0);
    CHECK(z.hi == 0.0);
    CHECK(format_em_ci(0.0, z) == "0.0 [0.0, 0.0]");
    const auto o = bootstrap_ci(ones, 1000, 0.95, 7);
    CHECK(o.lo == 100.0);
    CHECK(o.hi == 100.0);
    CHECK(format_em_ci(100.0, o) == "100.0 [100.0, 100.0]");
    CHECK_THROWS_AS(bootstrap_ci(std::vector<double>{}, 1000, 0.95, 7), ConfigError);

    std::vector<double> half(100);
    for (size_t i = 0; i < half.size(); ++i) half[i] = i % 2;
    const auto a = bootstrap_ci(half, 1000, 0.95, 3);
    const auto b = bootstrap_ci(half, 1000, 0.95, 3);
    CHECK(a.lo == b.lo);
    CHECK(a.hi == b.hi);
    CHECK(a.lo <= a.hi);
    CHECK(a.lo < 50.0);
    CHECK(a.hi > 50.0);
}

TEST_CASE("permutation_test") {
    std::mt19937_64 rng(6);
    std::vector<double> a(50), b(50);
    for (auto& x : a) x = static_cast<double>(rng() % 2);
    CHECK(permutation_test(a, a, 2000, 7) == 1.0);
    for (size_t i = 0; i < 50; ++i) b[i] = a[i] + 1.0;
    CHECK(permutation_test(b, a, 2000, 7) <= 0.001);

    for (auto& x : b) x = static_cast<double>(rng() % 2);
    const double p1 = permutation_test(a, b, 2000, 7);
    const double p2 = permutation_test(b, a, 2000, 7);
    CHECK(p1 == p2);
    CHECK(p1 > 0.0);
    CHECK(p1 <= 1.0);
    CHECK_THROWS_AS(permutation_test(a, std::vector<double>(49, 0.0), 2000, 7), ConfigError);
}

TEST_CASE("dataset parsing") {
    const auto ok = parse_dataset(
        "{\"id\": \"a\", \"question\": \"q?\", \"answers\": [\"x\"], \"mode\": \"free\"}\n\n"
        "{\"id\": \"b\", \"question\": \"q2?\", \"answers\": [\"DB1\"], \"mode\": \"medhop-id\"}\n");
    REQUIRE(ok.size() == 2);
    CHECK(ok[1].medhop());
    CHECK(ok[1].query().medhop());
    auto bad = [](const std::string& s) { CHECK_THROWS_AS(parse_dataset(s), FormatError); };
    bad("{\"id\": \"a\", \"question\": \"q\", \"answers\": []}");
    bad("{\"id\": \"a\", \"answers\": [\"x\"]}");
    bad("{\"id\": \"a\", \"question\": \"q\", \"answers\": [\"x\"], \"mode\": \"other\"}");
    bad("{\"id\": \"a\", \"question\": \"q\", \"answers\": [\"x\"]}\n{\"id\": \"a\", \"question\": \"q\", \"answers\": [\"x\"]}");
    bad("not json");
    try {
        parse_dataset("\n{\"id\": 1}");
    } catch (const FormatError& e) {
        CHECK(e.where() == "line 2");
    }
}

TEST_CASE("generated relation questions and the grid") {
    const auto corpus = test::load_corpus("sftsv_mini");
    const FrozenModel model{ModelConfig{}};
    const auto bank = compile_bank(corpus.index.graph, corpus.capsules, model, 1);
    const KnowledgeStores stores(corpus.index, bank, model,
                                 IntentRules::from_json_file(test::data_path("sftsv_mini/intent_rules.json")));
    auto questions = generate_relation_questions(corpus.index);
    REQUIRE(questions.size() == 2);
    CHECK(questions[0].question == "What complication does SFTSV infection cause?");
    CHECK(questions[1].gold_answers == std::vector<std::string>{"fever", "thrombocytopenia"});
    CHECK(questions[1].gold_capsule_ids.size() == 2);

    QAExample broken;
    broken.example_id = "overflow";
    broken.question = "SFTSV infection " + std::string(1100, 'x');
    broken.gold_answers = {"fever"};
    questions.push_back(broken);

    const std::vector<Condition> conds(std::begin(kAllConditions), std::end(kAllConditions));
    EvalConfig cfg;
    cfg.workers = 2;
    const auto r = run_grid("mini", questions, conds, stores, cfg);
    CHECK(r.records.size() == questions.size() * conds.size());
    for (size_t i = 0; i < r.records.size(); ++i) {
        const auto& rec = r.records[i];
        CHECK(rec.example_id == questions[i / conds.size()].example_id);
        CHECK((rec.em == 0 || rec.em == 1));
        if (rec.example_id == "overflow") {
            CHECK(rec.error.has_value());
            CHECK(rec.em == 0);
        } else {
            CHECK_FALSE(rec.error.has_value());
        }
    }
    for (const auto& s : r.summaries) {
        CHECK(s.n == questions.size());
        CHECK(s.errors == 1);
        if (s.condition == "kvi" || s.condition == "graphrag") {
            REQUIRE(s.gold_trace_coverage.has_value());
            CHECK(*s.gold_trace_coverage == 100.0);
        }
        CHECK(s.ci.lo <= s.ci.hi);
        CHECK(s.p_vs_kvi.has_value() == (s.condition != "kvi"));
    }

    cfg.workers = 1;
    const auto serial = run_grid("mini", questions, conds, stores, cfg);
    for (size_t i = 0; i < r.records.size(); ++i) CHECK(serial.records[i].to_json(false) == r.records[i].to_json(false));

    const std::vector<DatasetResult> both = {r, serial};
    auto named = both;
    named[1].name = "mini2";
    const auto table = render_table(named, conds);
    size_t cells = 0, pos = 0;
    const auto main = table.substr(0, table.find("\n## Paired"));
    while ((pos = main.find(" [", pos)) != std::string::npos) {
        ++cells;
        ++pos;
    }
    CHECK(cells == conds.size() * 2);
    CHECK(table.find("| w/o KV (GraphRAG) |") != std::string::npos);
    CHECK(table.find("| w/o Graph (KV Prefix) |") != std::string::npos);
    const auto stats = stats_json(named, cfg);
    CHECK(stats["datasets"]["mini"]["kvi"]["gold_trace_coverage"] == 100.0);
    CHECK(stats["datasets"]["mini2"]["llm"]["ci"].size() == 2);
}

TEST_CASE("table bolds every maximum") {
    DatasetResult r;
    r.name = "d";
    r.summaries = {ConditionSummary{"llm", 2, 0, 50.0, {0.0, 100.0}, 1.0, std::nullopt},
                   ConditionSummary{"kvi", 2, 0, 50.0, {0.0, 100.0}, std::nullopt, std::nullopt},
                   ConditionSummary{"rag", 2, 0, 0.0, {0.0, 0.0}, 0.5, std::nullopt}};
    const std::vector<Condition> conds = {Condition::llm, Condition::rag, Condition::kvi};
    const std::vector<DatasetResult> rs = {r};
    const auto t = render_table(rs, conds);
    CHECK(t.find("| LLM | **50.0 [0.0, 100.0]** |") != std::string::npos);
    CHECK(t.find("| KVI | **50.0 [0.0, 100.0]** |") != std::string::npos);
    CHECK(t.find("| RAG | 0.0 [0.0, 0.0] |") != std::string::npos);
}

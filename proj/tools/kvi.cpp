// kvi: compile a corpus into graph + KV bank, answer queries, run the
// evaluation grid.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "json.hpp"

#include "kvi/binary_io.hpp"
#include "kvi/errors.hpp"
#include "kvi/eval.hpp"
#include "kvi/pipeline.hpp"

namespace {

struct StoreFlags {
    std::string graph = kvi::kDefaultGraphFile;
    std::string bank = kvi::kBankFile;
    std::string weights;
    std::string intent;
    std::uint64_t seed = 7;
    int max_positions = 1024;

    void add(CLI::App* app) {
        app->add_option("--graph", graph, "graph_index.json path")->capture_default_str();
        app->add_option("--bank", bank, "kv_bank.bin path")->capture_default_str();
        app->add_option("--weights", weights, "KVIM weight file (default: seeded reference model)");
        app->add_option("--intent", intent, "intent rules JSON (default: intent_rules.json beside the graph)");
        app->add_option("--seed", seed, "reference model seed")->capture_default_str();
        app->add_option("--max-positions", max_positions, "position budget of the model")->capture_default_str();
    }

    kvi::ModelConfig model() const {
        kvi::ModelConfig c;
        c.seed = seed;
        c.max_positions = max_positions;
        return c;
    }

    std::unique_ptr<kvi::StoreBundle> load() const {
        return kvi::StoreBundle::load(graph, bank, weights, model(), intent);
    }
};

void add_query_flags(CLI::App* app, kvi::QueryConfig& q, bool& bidirectional, bool& no_reposition,
                     std::string& template_path) {
    app->add_option("--hops", q.hops, "maximum traversal depth")->capture_default_str();
    app->add_option("--topk", q.topk, "evidence sentences in the prompt")->capture_default_str();
    app->add_option("--kv-budget", q.kv_budget, "triple entries injected")->capture_default_str();
    app->add_option("--layers", q.layers, "injected layers: all, 0-1, 0,2")->capture_default_str();
    app->add_option("--ground-thresh", q.ground_thresh, "grounding overlap threshold")->capture_default_str();
    app->add_flag("--ground-all", q.ground_all, "apply the grounding filter to the llm condition too");
    app->add_option("--max-new", q.max_new, "generated tokens")->capture_default_str();
    app->add_option("--min-score", q.min_score, "drop candidates scoring below this")->capture_default_str();
    app->add_flag("--bidirectional", bidirectional, "traverse edges in both directions");
    app->add_flag("--no-reposition", no_reposition, "keep every entry at its compile-time positions");
    app->add_option("--template", template_path, "prompt template file with {evidence} and {query}");
}

void finish_query_flags(kvi::QueryConfig& q, bool bidirectional, bool no_reposition, const std::string& template_path) {
    if (bidirectional) q.direction = kvi::Direction::bidirectional;
    if (no_reposition) q.reposition = false;
    if (!template_path.empty()) q.prompt_template = kvi::read_file_text(template_path);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Knowledge capsules with external key-value injection"};
    app.require_subcommand(1);

    // compile
    kvi::CompileOptions copt;
    auto* compile = app.add_subcommand("compile", "documents -> sentences, capsules, graph and KV bank");
    compile->add_option("--docs", copt.docs, "a .txt file or a directory of them")->required();
    compile->add_option("--rules", copt.rules, "extraction rules JSON")->required();
    compile->add_option("--types", copt.types, "entity type hints JSON object");
    compile->add_option("--intent", copt.intent, "intent rules JSON to store beside the graph");
    compile->add_option("--out", copt.out_dir, "output directory")->required();
    compile->add_option("--weights", copt.weights, "KVIM weight file (default: seeded reference model)");
    compile->add_option("--seed", copt.model.seed, "reference model seed")->capture_default_str();
    compile->add_option("--max-positions", copt.model.max_positions, "position budget")->capture_default_str();
    compile->add_option("--jobs", copt.jobs, "compile threads (0 = all cores)")->capture_default_str();
    compile->add_flag("--strip-text", copt.strip_text, "omit the text audit section from the bank");

    // query
    StoreFlags qstores;
    kvi::QueryConfig qcfg;
    bool q_bidir = false, q_norepos = false;
    std::string q_template, q_condition = "kvi", q_mode = "free", question;
    auto* query = app.add_subcommand("query", "answer one question, printing the Answer JSON");
    qstores.add(query);
    add_query_flags(query, qcfg, q_bidir, q_norepos, q_template);
    query->add_option("--condition", q_condition, "llm, rag, graphrag, kvprefix or kvi")->capture_default_str();
    query->add_option("--mode", q_mode, "free or medhop-id")->check(CLI::IsMember({"free", "medhop-id"}));
    query->add_option("question", question, "the question")->required();

    // eval
    StoreFlags estores;
    kvi::EvalOptions eopt;
    bool e_bidir = false, e_norepos = false;
    std::string e_template, e_conditions = "llm,rag,graphrag,kvprefix,kvi";
    std::optional<std::uint64_t> stats_seed;
    auto* eval = app.add_subcommand("eval", "run the condition grid over datasets");
    estores.add(eval);
    add_query_flags(eval, eopt.config.query, e_bidir, e_norepos, e_template);
    eval->add_option("--dataset", eopt.datasets, "dataset JSONL, optionally name=path (repeatable)")->required();
    eval->add_option("--conditions", e_conditions, "comma-separated conditions")->capture_default_str();
    eval->add_option("--out", eopt.out_dir, "results directory")->required();
    eval->add_option("--stats-seed", stats_seed, "seed for bootstrap/permutation (default: --seed)");
    eval->add_option("--resamples", eopt.config.resamples, "bootstrap resamples")->capture_default_str();
    eval->add_option("--permutations", eopt.config.permutations, "permutation test draws")->capture_default_str();
    eval->add_option("--workers", eopt.config.workers, "worker threads (0 = all cores)")->capture_default_str();
    eval->add_option("--timeout-ms", eopt.config.timeout_ms, "per-example limit, 0 = off")->capture_default_str();
    eval->add_flag("--timing", eopt.record_latency, "write latency_ms into records (output no longer byte-stable)");

    // make-questions
    std::string mq_graph = kvi::kDefaultGraphFile, mq_out, mq_templates, mq_prefix = "q";
    auto* mq = app.add_subcommand("make-questions", "one relation-completion question per (subject, relation)");
    mq->add_option("--graph", mq_graph, "graph_index.json path")->capture_default_str();
    mq->add_option("--out", mq_out, "dataset JSONL to write")->required();
    mq->add_option("--templates", mq_templates, "JSON object relation -> question with {S}");
    mq->add_option("--prefix", mq_prefix, "example id prefix")->capture_default_str();

    // export-weights
    kvi::ModelConfig wcfg;
    std::string w_out;
    auto* weights = app.add_subcommand("export-weights", "write the seeded reference model as a KVIM file");
    weights->add_option("--out", w_out, "output path")->required();
    weights->add_option("--seed", wcfg.seed, "model seed")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*compile) {
            const auto s = kvi::run_compile(copt);
            std::printf("compiled %zu documents: %zu sentences, %zu capsules, %zu nodes, %zu edges, %zu bank entries\n",
                        s.documents, s.sentences, s.capsules, s.nodes, s.edges, s.entries);
        } else if (*query) {
            finish_query_flags(qcfg, q_bidir, q_norepos, q_template);
            const auto bundle = qstores.load();
            kvi::Query q{question, std::nullopt};
            if (q_mode != "free") q.dataset_hint = q_mode;
            const auto answer = kvi::answer_query(q, bundle->stores(), qcfg, kvi::parse_condition(q_condition));
            std::cout << kvi::to_json(answer).dump(2, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
        } else if (*eval) {
            finish_query_flags(eopt.config.query, e_bidir, e_norepos, e_template);
            eopt.conditions = kvi::parse_conditions(e_conditions);
            eopt.config.seed = stats_seed.value_or(estores.seed);
            const auto bundle = estores.load();
            const auto results = kvi::run_eval(*bundle, eopt);
            std::cout << kvi::render_table(results, eopt.conditions);
        } else if (*mq) {
            std::map<std::string, std::string> templates;
            if (!mq_templates.empty()) {
                nlohmann::json j = nlohmann::json::parse(kvi::read_file_text(mq_templates));
                if (!j.is_object()) throw kvi::FormatError(mq_templates, "templates must be a JSON object");
                for (const auto& [k, v] : j.items()) templates[k] = v.get<std::string>();
            }
            const auto index = kvi::load_graph(mq_graph);
            const auto questions = kvi::generate_relation_questions(index, templates, mq_prefix);
            kvi::save_dataset(questions, mq_out);
            std::printf("wrote %zu questions to %s\n", questions.size(), mq_out.c_str());
        } else if (*weights) {
            kvi::FrozenModel(wcfg).save_weights(w_out);
        }
    } catch (const kvi::UsageError& e) {
        std::fprintf(stderr, "kvi: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "kvi: %s\n", e.what());
        return 1;
    }
    return 0;
}

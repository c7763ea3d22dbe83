#include "kvi/pipeline.hpp"

#include <algorithm>

#include "json.hpp"

#include "kvi/binary_io.hpp"
#include "kvi/capsule.hpp"
#include "kvi/errors.hpp"
#include "kvi/extraction.hpp"
#include "kvi/segmenter.hpp"
#include "kvi/text.hpp"

namespace fs = std::filesystem;

namespace kvi {

FrozenModel make_model(const std::string& weights, const ModelConfig& config) {
    if (!weights.empty()) return FrozenModel::load_weights(weights, config);
    return FrozenModel(config);
}

namespace {

std::vector<fs::path> document_paths(const std::string& docs) {
    const fs::path root(docs);
    if (!fs::exists(root)) throw ConfigError("documents not found: " + docs);
    std::vector<fs::path> out;
    if (fs::is_directory(root)) {
        for (const auto& e : fs::directory_iterator(root)) {
            if (e.is_regular_file() && e.path().extension() == ".txt") out.push_back(e.path());
        }
        std::sort(out.begin(), out.end());
    } else {
        out.push_back(root);
    }
    if (out.empty()) throw ConfigError("no .txt documents in " + docs);
    return out;
}

std::map<std::string, std::string> load_types(const std::string& path) {
    std::map<std::string, std::string> out;
    if (path.empty()) return out;
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file_text(path));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path, e.what());
    }
    if (!j.is_object()) throw FormatError(path, "entity types must be a JSON object");
    for (const auto& [k, v] : j.items()) {
        if (!v.is_string()) throw FormatError(path + ":/" + k, "type must be a string");
        out[k] = v.get<std::string>();
    }
    return out;
}

}  // namespace

CompileSummary run_compile(const CompileOptions& options) {
    if (options.out_dir.empty()) throw UsageError("compile needs an output directory");
    const auto ruleset = ExtractionRuleset::from_json_file(options.rules);
    const auto types = load_types(options.types);
    const auto model = make_model(options.weights, options.model);

    CompileSummary summary;
    std::vector<Sentence> sentences;
    for (const auto& p : document_paths(options.docs)) {
        auto doc = segment_sentences(read_file_text(p.string()), p.stem().string());
        sentences.insert(sentences.end(), std::make_move_iterator(doc.begin()), std::make_move_iterator(doc.end()));
        ++summary.documents;
    }
    const auto capsules = extract_corpus(sentences, PatternExtractor(ruleset));
    const auto index = build_graph(capsules, sentences, types);
    const auto bank = compile_bank(index.graph, capsules, model, options.jobs);

    const fs::path out(options.out_dir);
    fs::create_directories(out);
    save_sentences(sentences, (out / kSentencesFile).string());
    save_capsules(capsules, (out / kCapsulesFile).string());
    save_graph(index, (out / kDefaultGraphFile).string());
    save_bank(bank, (out / kBankFile).string(), options.strip_text);
    if (!options.intent.empty()) {
        IntentRules::from_json_file(options.intent);  // validate before copying
        write_file_text((out / kIntentFile).string(), read_file_text(options.intent));
    }

    summary.sentences = sentences.size();
    summary.capsules = capsules.size();
    summary.nodes = index.graph.nodes().size();
    summary.edges = index.graph.edges().size();
    summary.entries = bank.size();
    return summary;
}

StoreBundle::StoreBundle(GraphIndex index, FrozenModel model, KvBank bank, IntentRules intent)
    : index_(std::move(index)),
      model_(std::move(model)),
      bank_(std::move(bank)),
      stores_(index_, bank_, model_, std::move(intent)) {
    bank_.check_model(model_);
}

std::unique_ptr<StoreBundle> StoreBundle::load(const std::string& graph_path, const std::string& bank_path,
                                               const std::string& weights, const ModelConfig& config,
                                               const std::string& intent_path) {
    auto index = load_graph(graph_path);
    auto model = make_model(weights, config);
    auto bank = load_bank(bank_path, model);
    IntentRules intent;
    if (!intent_path.empty()) {
        intent = IntentRules::from_json_file(intent_path);
    } else if (const auto beside = fs::path(graph_path).parent_path() / kIntentFile; fs::exists(beside)) {
        intent = IntentRules::from_json_file(beside.string());
    }
    return std::make_unique<StoreBundle>(std::move(index), std::move(model), std::move(bank), std::move(intent));
}

std::vector<Condition> parse_conditions(const std::string& csv) {
    std::vector<Condition> out;
    size_t start = 0;
    while (start <= csv.size()) {
        size_t comma = csv.find(',', start);
        if (comma == std::string::npos) comma = csv.size();
        const auto name = text::trim(std::string_view(csv).substr(start, comma - start));
        if (!name.empty()) {
            const auto c = parse_condition(name);
            if (std::find(out.begin(), out.end(), c) != out.end()) {
                throw UsageError("condition '" + std::string(name) + "' listed twice");
            }
            out.push_back(c);
        }
        start = comma + 1;
    }
    if (out.empty()) throw UsageError("no conditions given");
    return out;
}

std::vector<DatasetResult> run_eval(const StoreBundle& bundle, const EvalOptions& options) {
    if (options.datasets.empty()) throw UsageError("eval needs at least one --dataset");
    if (options.out_dir.empty()) throw UsageError("eval needs --out");
    std::vector<DatasetResult> results;
    std::set<std::string> names;
    for (const auto& spec : options.datasets) {
        // "name=path" overrides the file-stem name.
        std::string name, path = spec;
        const auto eq = spec.find('=');
        if (eq != std::string::npos && eq > 0 && spec.find('/') > eq) {
            name = spec.substr(0, eq);
            path = spec.substr(eq + 1);
        } else {
            name = fs::path(spec).stem().string();
        }
        if (!names.insert(name).second) throw UsageError("two datasets share the name '" + name + "'");
        const auto examples = load_dataset(path);
        results.push_back(run_grid(name, examples, options.conditions, bundle.stores(), options.config));
    }

    const fs::path out(options.out_dir);
    fs::create_directories(out);
    write_file_text((out / "table.md").string(), render_table(results, options.conditions));
    std::string records;
    for (const auto& r : results) {
        for (const auto& rec : r.records) {
            // Generations are raw bytes; invalid UTF-8 is written as U+FFFD.
            records += rec.to_json(options.record_latency).dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
            records += '\n';
        }
    }
    write_file_text((out / "records.jsonl").string(), records);
    write_file_text((out / "stats.json").string(), stats_json(results, options.config).dump(2) + "\n");
    return results;
}

}  // namespace kvi

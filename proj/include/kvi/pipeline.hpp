#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "kvi/eval.hpp"
#include "kvi/graph.hpp"
#include "kvi/injection.hpp"
#include "kvi/kv_bank.hpp"
#include "kvi/model.hpp"

namespace kvi {

inline constexpr const char* kSentencesFile = "sentences.json";
inline constexpr const char* kCapsulesFile = "capsules.json";
inline constexpr const char* kBankFile = "kv_bank.bin";
inline constexpr const char* kIntentFile = "intent_rules.json";

/// Seeded reference model, or the KVIM file at `weights` when non-empty.
FrozenModel make_model(const std::string& weights, const ModelConfig& config);

struct CompileOptions {
    std::string docs;   // a .txt file or a directory of them (doc id = file stem)
    std::string rules;  // extraction rules JSON
    std::string types;  // optional {"entity": "type"} JSON object
    std::string intent; // optional intent rules, copied next to the graph
    std::string out_dir;
    std::string weights;
    ModelConfig model;
    int jobs = 0;
    bool strip_text = false;
};

struct CompileSummary {
    size_t documents = 0;
    size_t sentences = 0;
    size_t capsules = 0;
    size_t nodes = 0;
    size_t edges = 0;
    size_t entries = 0;
};

/// docs -> sentences.json, capsules.json, graph_index.json, kv_bank.bin.
CompileSummary run_compile(const CompileOptions& options);

/// Owns everything a query needs.
class StoreBundle {
public:
    StoreBundle(GraphIndex index, FrozenModel model, KvBank bank, IntentRules intent);
    StoreBundle(const StoreBundle&) = delete;
    StoreBundle& operator=(const StoreBundle&) = delete;

    /// Missing `intent_path` falls back to intent_rules.json beside the graph,
    /// then to a single catch-all rule.
    static std::unique_ptr<StoreBundle> load(const std::string& graph_path, const std::string& bank_path,
                                             const std::string& weights, const ModelConfig& config,
                                             const std::string& intent_path = "");

    const KnowledgeStores& stores() const noexcept { return stores_; }
    const GraphIndex& index() const noexcept { return index_; }
    const FrozenModel& model() const noexcept { return model_; }
    const KvBank& bank() const noexcept { return bank_; }

private:
    GraphIndex index_;
    FrozenModel model_;
    KvBank bank_;
    KnowledgeStores stores_;
};

struct EvalOptions {
    std::vector<std::string> datasets;
    std::vector<Condition> conditions{std::begin(kAllConditions), std::end(kAllConditions)};
    std::string out_dir;
    EvalConfig config;
    bool record_latency = false;
};

/// Runs the grid per dataset and writes table.md, records.jsonl, stats.json.
std::vector<DatasetResult> run_eval(const StoreBundle& bundle, const EvalOptions& options);

std::vector<Condition> parse_conditions(const std::string& csv);

}  // namespace kvi

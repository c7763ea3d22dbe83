#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "kvi/injection.hpp"
#include "kvi/stats.hpp"

namespace kvi {

/// Lowercase, collapse whitespace, trim. In medhop-id mode the result is the
/// first "db<digits>" token, or "" when there is none.
std::string canonicalize(std::string_view text, bool medhop = false);

int exact_match(std::string_view prediction, std::span<const std::string> gold_answers, bool medhop = false);

struct QAExample {
    std::string example_id;
    std::string question;
    std::vector<std::string> gold_answers;
    std::string mode = "free";  // "free" | "medhop-id"
    // Known retrieval targets for generated questions; empty when unknown.
    std::vector<std::string> gold_capsule_ids;
    std::vector<std::string> gold_sentence_ids;

    bool medhop() const { return mode == kMedhopMode; }
    Query query() const;
};

/// JSONL, one example per line. Throws FormatError ("line N: ...") on bad
/// JSON, a missing field, empty answers, an unknown mode or a repeated id.
std::vector<QAExample> load_dataset(const std::string& path);
std::vector<QAExample> parse_dataset(std::string_view jsonl);
void save_dataset(std::span<const QAExample> examples, const std::string& path);

/// One question per (subject, relation) pair of the graph; answers are the
/// objects, gold ids the supporting edges and sentences. Templates map a
/// relation to text with an "{S}" placeholder; relations without a template
/// get "What <verbalized relation> {S}?"-style wording from the default table.
std::vector<QAExample> generate_relation_questions(const GraphIndex& index,
                                                   const std::map<std::string, std::string>& templates = {},
                                                   std::string_view id_prefix = "q");

struct EvalRecord {
    std::string dataset;
    std::string example_id;
    std::string condition;
    std::string prediction;
    int em = 0;
    double latency_ms = 0.0;
    std::optional<std::string> error;
    std::optional<bool> gold_trace;  // graph conditions with known gold ids

    nlohmann::json to_json(bool with_latency) const;
};

struct ConditionSummary {
    std::string condition;
    size_t n = 0;
    size_t errors = 0;
    double em_pct = 0.0;
    Interval ci;
    std::optional<double> p_vs_kvi;
    std::optional<double> gold_trace_coverage;  // percent
};

struct DatasetResult {
    std::string name;
    std::vector<EvalRecord> records;  // example order, then condition order
    std::vector<ConditionSummary> summaries;  // condition order
};

struct EvalConfig {
    QueryConfig query;
    int workers = 0;
    std::uint64_t seed = 7;
    int resamples = 1000;
    int permutations = 2000;
    double timeout_ms = 0.0;  // 0 disables the per-example limit
};

/// Evaluates every (example, condition) cell. A failing cell is recorded as
/// em = 0 with its error text; the grid always completes.
DatasetResult run_grid(std::string name, std::span<const QAExample> dataset, std::span<const Condition> conditions,
                       const KnowledgeStores& stores, const EvalConfig& config);

/// Main table (EM [CI] per condition x dataset, maxima bold), p-values
/// against kvi, and the ablation view derived from the same numbers.
std::string render_table(std::span<const DatasetResult> results, std::span<const Condition> conditions);
nlohmann::json stats_json(std::span<const DatasetResult> results, const EvalConfig& config);

std::string format_em_ci(double em_pct, const Interval& ci);
std::string_view display_name(Condition c);

}  // namespace kvi

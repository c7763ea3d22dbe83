#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "kvi/graph.hpp"
#include "kvi/kv_bank.hpp"
#include "kvi/model.hpp"
#include "kvi/retrieval.hpp"

namespace kvi {

inline constexpr std::string_view kDefaultPromptTemplate = "Evidence:\n{evidence}\nQuestion: {query}\nAnswer:";

struct RenderedPrompt {
    std::string text;
    std::vector<int> tokens;
};

/// Substitutes "{evidence}" (one "- <sentence>" line per evidence sentence)
/// and "{query}" into the template in a single pass. Throws ConfigError when
/// a placeholder is missing and OverflowError when the prompt needs more than
/// `position_budget` tokens.
RenderedPrompt build_prompt(std::span<const std::string> evidence_sentences, std::string_view query,
                            std::string_view task_template = kDefaultPromptTemplate,
                            int position_budget = -1);

/// "all", a range "0-1", or a list "0,2,3". Throws ConfigError for layers
/// outside [0, num_layers).
std::vector<int> parse_layer_mask(std::string_view spec, int num_layers);

struct InjectionPlan {
    PrefixKV prefix;
    std::vector<int> layer_mask;
    std::vector<int> prompt_tokens;
    int prompt_position_offset = 0;

    /// Offset = prefix length on every layer.
    static InjectionPlan make(PrefixKV prefix, std::vector<int> layer_mask, std::vector<int> prompt_tokens);
};

struct InjectionOutput {
    std::string text;
    std::vector<int> tokens;
    KvState cache;  // [external ; prompt ; generated] on injected layers
};

/// Greedy decoding over [external ; prompt-derived] memory on masked layers
/// and prompt-derived memory elsewhere.
InjectionOutput inject_and_generate(const InjectionPlan& plan, const FrozenModel& model, int max_new);

struct GroundedText {
    std::string text;  // kept sentences joined by single spaces
    std::vector<std::string> kept;
    std::vector<std::string> dropped;
};

/// Keeps a generated sentence iff its best overlap ratio against any evidence
/// sentence is >= threshold. The ratio is |G ∩ E| / |G| over case-folded,
/// stopword-filtered tokens; a sentence without content tokens scores 0.
GroundedText grounding_filter(std::string_view generated_text, std::span<const std::string> evidence_sentences,
                              double overlap_threshold);

enum class Condition { llm, rag, graphrag, kvprefix, kvi };

inline constexpr Condition kAllConditions[] = {Condition::llm, Condition::rag, Condition::graphrag,
                                               Condition::kvprefix, Condition::kvi};

std::string_view to_string(Condition c);
/// Throws UsageError for unknown names.
Condition parse_condition(std::string_view name);

/// Read-only query-time state.
struct KnowledgeStores {
    const GraphIndex* index = nullptr;
    const KvBank* bank = nullptr;
    const FrozenModel* model = nullptr;
    IntentRules intent;
    std::vector<Sentence> sentences;  // dense-retrieval corpus

    KnowledgeStores(const GraphIndex& g, const KvBank& b, const FrozenModel& m, IntentRules rules = IntentRules{});
};

struct QueryConfig {
    int hops = 2;
    size_t topk = 5;       // evidence sentences in the prompt / dense neighbours
    size_t kv_budget = 8;  // triple entries selected and injected
    std::string layers = "all";
    double ground_thresh = 0.3;
    bool ground_all = false;  // also filter the llm condition
    int max_new = 16;
    bool reposition = true;
    Direction direction = Direction::outgoing;
    double min_score = 0.0;
    std::string prompt_template = std::string(kDefaultPromptTemplate);
};

struct AnswerTrace {
    std::string condition;
    bool fallback = false;  // no entity linked, plain generation used
    std::optional<std::string> linked_entity;
    std::vector<std::string> relation_set;
    std::vector<ScoredTriple> ranked;
    std::vector<std::string> prompt_evidence;  // sentence ids, prompt channel
    std::vector<std::string> retrieved_sentences;  // dense neighbours (rag, kvprefix)
    std::vector<std::string> prefix_entries;   // entry ids, KV channel, in slot order
    std::vector<std::string> withheld_entries;  // statements already verbatim in the prompt
    int prefix_tokens = 0;
    std::string prompt;
};

struct Answer {
    std::string text;
    std::vector<std::string> kept;
    std::vector<std::string> dropped;
    AnswerTrace trace;
    std::string raw_generation;
};

Answer answer_query(const Query& query, const KnowledgeStores& stores, const QueryConfig& config, Condition condition);

nlohmann::json to_json(const Answer& answer);

}  // namespace kvi

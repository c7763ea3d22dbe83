#include "kvi/injection.hpp"

#include <algorithm>
#include <charconv>
#include <set>

#include "kvi/errors.hpp"
#include "kvi/segmenter.hpp"
#include "kvi/text.hpp"

namespace kvi {

RenderedPrompt build_prompt(std::span<const std::string> evidence_sentences, std::string_view query,
                            std::string_view task_template, int position_budget) {
    constexpr std::string_view kEvidence = "{evidence}";
    constexpr std::string_view kQuery = "{query}";
    if (task_template.find(kEvidence) == std::string_view::npos || task_template.find(kQuery) == std::string_view::npos) {
        throw ConfigError("prompt template needs both {evidence} and {query} placeholders");
    }
    std::string evidence;
    for (size_t i = 0; i < evidence_sentences.size(); ++i) {
        if (i) evidence += '\n';
        evidence += "- ";
        evidence += evidence_sentences[i];
    }
    RenderedPrompt out;
    for (size_t i = 0; i < task_template.size();) {
        if (task_template.compare(i, kEvidence.size(), kEvidence) == 0) {
            out.text += evidence;
            i += kEvidence.size();
        } else if (task_template.compare(i, kQuery.size(), kQuery) == 0) {
            out.text += query;
            i += kQuery.size();
        } else {
            out.text += task_template[i++];
        }
    }
    out.tokens = tokenize(out.text);
    if (position_budget >= 0 && static_cast<int>(out.tokens.size()) > position_budget) {
        throw OverflowError("prompt needs " + std::to_string(out.tokens.size()) + " positions but only " +
                            std::to_string(position_budget) + " remain; reduce --topk or --kv-budget");
    }
    return out;
}

std::vector<int> parse_layer_mask(std::string_view spec, int num_layers) {
    std::set<int> layers;
    auto parse_int = [&](std::string_view s) {
        s = text::trim(s);
        int v = -1;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || p != s.data() + s.size()) throw ConfigError("bad layer spec '" + std::string(spec) + "'");
        return v;
    };
    if (text::trim(spec) == "all") {
        for (int l = 0; l < num_layers; ++l) layers.insert(l);
    } else {
        size_t start = 0;
        while (start <= spec.size()) {
            size_t comma = spec.find(',', start);
            if (comma == std::string_view::npos) comma = spec.size();
            auto part = spec.substr(start, comma - start);
            if (auto dash = part.find('-'); dash != std::string_view::npos) {
                const int a = parse_int(part.substr(0, dash));
                const int b = parse_int(part.substr(dash + 1));
                if (a > b) throw ConfigError("bad layer range '" + std::string(part) + "'");
                for (int l = a; l <= b; ++l) layers.insert(l);
            } else {
                layers.insert(parse_int(part));
            }
            start = comma + 1;
        }
    }
    for (int l : layers) {
        if (l < 0 || l >= num_layers) {
            throw ConfigError("layer " + std::to_string(l) + " does not exist (model has " + std::to_string(num_layers) + ")");
        }
    }
    return {layers.begin(), layers.end()};
}

InjectionPlan InjectionPlan::make(PrefixKV prefix, std::vector<int> layer_mask, std::vector<int> prompt_tokens) {
    InjectionPlan p;
    p.prompt_position_offset = prefix.token_len;
    p.prefix = std::move(prefix);
    p.layer_mask = std::move(layer_mask);
    p.prompt_tokens = std::move(prompt_tokens);
    return p;
}

InjectionOutput inject_and_generate(const InjectionPlan& plan, const FrozenModel& model, int max_new) {
    const auto& cfg = model.config();
    for (int l : plan.layer_mask) {
        if (l < 0 || l >= cfg.num_layers) throw ConfigError("layer mask references layer " + std::to_string(l));
    }
    if (!plan.prefix.empty() && plan.layer_mask.empty()) throw ConfigError("non-empty prefix needs a non-empty layer mask");
    if (plan.prompt_position_offset < plan.prefix.token_len) {
        throw ConfigError("prompt offset must not overlap the injected prefix");
    }

    KvState past;
    if (!plan.prefix.empty()) {
        if (static_cast<int>(plan.prefix.layers.size()) != cfg.num_layers) throw ShapeError("prefix layer count mismatch");
        for (int l = 0; l < cfg.num_layers; ++l) {
            const bool injected = std::find(plan.layer_mask.begin(), plan.layer_mask.end(), l) != plan.layer_mask.end();
            past.push_back(injected ? plan.prefix.layers[l]
                                    : LayerKV::empty(cfg.num_heads, cfg.head_dim, plan.prompt_position_offset));
        }
    }
    auto gen = model.generate(plan.prompt_tokens, past, plan.prompt_position_offset, max_new);
    return InjectionOutput{detokenize(gen.tokens), std::move(gen.tokens), std::move(gen.cache)};
}

GroundedText grounding_filter(std::string_view generated_text, std::span<const std::string> evidence_sentences,
                              double overlap_threshold) {
    if (overlap_threshold < 0.0 || overlap_threshold > 1.0) throw ConfigError("grounding threshold must be in [0, 1]");
    std::vector<std::unordered_set<std::string>> evidence;
    for (const auto& e : evidence_sentences) evidence.push_back(text::content_tokens(e));
    GroundedText out;
    for (auto& s : split_sentences(generated_text)) {
        const auto g = text::content_tokens(s);
        double best = 0.0;
        if (!g.empty()) {
            for (const auto& e : evidence) {
                size_t inter = 0;
                for (const auto& t : g) inter += e.count(t);
                best = std::max(best, static_cast<double>(inter) / static_cast<double>(g.size()));
            }
        }
        (best >= overlap_threshold ? out.kept : out.dropped).push_back(std::move(s));
    }
    out.text = text::join(out.kept, " ");
    return out;
}

std::string_view to_string(Condition c) {
    switch (c) {
        case Condition::llm: return "llm";
        case Condition::rag: return "rag";
        case Condition::graphrag: return "graphrag";
        case Condition::kvprefix: return "kvprefix";
        case Condition::kvi: return "kvi";
    }
    return "?";
}

Condition parse_condition(std::string_view name) {
    for (auto c : kAllConditions) {
        if (to_string(c) == name) return c;
    }
    throw UsageError("unknown condition '" + std::string(name) + "' (expected llm, rag, graphrag, kvprefix or kvi)");
}

KnowledgeStores::KnowledgeStores(const GraphIndex& g, const KvBank& b, const FrozenModel& m, IntentRules rules)
    : index(&g), bank(&b), model(&m), intent(std::move(rules)), sentences(g.provenance.sentences()) {}

namespace {

struct GraphRetrieval {
    std::optional<std::string> entity;
    RelationSet relations;
    std::vector<ScoredTriple> ranked;
    std::vector<std::string> evidence_ids;
};

GraphRetrieval graph_retrieve(const Query& query, const KnowledgeStores& stores, const QueryConfig& config) {
    GraphRetrieval r;
    const auto& graph = stores.index->graph;
    r.entity = link_entity(query, graph);
    if (!r.entity) return r;
    r.relations = classify_intent(query, stores.intent, graph);
    TraversalConfig tc{config.hops, r.relations, config.direction};
    const auto hits = traverse(graph, *r.entity, tc);
    auto scored = score_candidates(query, hits, *stores.index, DrmScorer{}, config.min_score);
    r.ranked = select_topk(std::move(scored), config.kv_budget);
    std::set<std::string> seen;
    for (const auto& t : r.ranked) {
        if (r.evidence_ids.size() >= config.topk) break;
        if (seen.insert(t.evidence_sentence_id).second) r.evidence_ids.push_back(t.evidence_sentence_id);
    }
    return r;
}

std::vector<std::string> sentence_texts(const KnowledgeStores& stores, const std::vector<std::string>& ids) {
    std::vector<std::string> out;
    for (const auto& id : ids) {
        auto it = stores.index->provenance.sentence_index.find(id);
        if (it == stores.index->provenance.sentence_index.end()) throw LookupError("unknown sentence " + id);
        out.push_back(it->second.text);
    }
    return out;
}

int prompt_budget(const FrozenModel& model, int prefix_len, int max_new) {
    return model.config().max_positions - prefix_len - max_new;
}

Answer finish(AnswerTrace trace, const std::string& generated, std::span<const std::string> evidence, double threshold) {
    auto g = grounding_filter(generated, evidence, threshold);
    Answer a;
    a.text = std::move(g.text);
    a.kept = std::move(g.kept);
    a.dropped = std::move(g.dropped);
    a.trace = std::move(trace);
    a.raw_generation = generated;
    return a;
}

Answer plain_generation(const Query& query, const KnowledgeStores& stores, const QueryConfig& config, AnswerTrace trace) {
    const auto& model = *stores.model;
    auto prompt = build_prompt({}, query.text, config.prompt_template, prompt_budget(model, 0, config.max_new));
    trace.prompt = prompt.text;
    auto out = inject_and_generate(InjectionPlan::make({}, {}, prompt.tokens), model, config.max_new);
    return finish(std::move(trace), out.text, {}, config.ground_all ? config.ground_thresh : 0.0);
}

// Channel separation: a statement already present verbatim in the prompt is
// not injected a second time.
bool in_prompt(const std::string& prompt, const std::string& statement) {
    return !statement.empty() && prompt.find(statement) != std::string::npos;
}

}  // namespace

Answer answer_query(const Query& query, const KnowledgeStores& stores, const QueryConfig& config, Condition condition) {
    if (query.text.empty()) throw UsageError("query text must be non-empty");
    const auto& model = *stores.model;
    AnswerTrace trace;
    trace.condition = std::string(to_string(condition));

    switch (condition) {
        case Condition::llm:
            return plain_generation(query, stores, config, std::move(trace));

        case Condition::rag: {
            const auto hits = dense_retrieve(query.text, stores.sentences, config.topk);
            for (const auto& h : hits) trace.retrieved_sentences.push_back(h.sentence_id);
            trace.prompt_evidence = trace.retrieved_sentences;
            const auto evidence = sentence_texts(stores, trace.prompt_evidence);
            auto prompt = build_prompt(evidence, query.text, config.prompt_template, prompt_budget(model, 0, config.max_new));
            trace.prompt = prompt.text;
            auto out = inject_and_generate(InjectionPlan::make({}, {}, prompt.tokens), model, config.max_new);
            return finish(std::move(trace), out.text, evidence, config.ground_thresh);
        }

        case Condition::kvprefix: {
            const size_t n = std::min(config.topk, config.kv_budget);
            const auto hits = dense_retrieve(query.text, stores.sentences, n);
            for (const auto& h : hits) trace.retrieved_sentences.push_back(h.sentence_id);
            const auto evidence = sentence_texts(stores, trace.retrieved_sentences);
            auto prompt = build_prompt({}, query.text, config.prompt_template);
            trace.prompt = prompt.text;
            std::vector<KvEntry> compiled;
            for (size_t i = 0; i < hits.size(); ++i) {
                const std::string id = "sentence:" + hits[i].sentence_id;
                if (in_prompt(prompt.text, evidence[i])) {
                    trace.withheld_entries.push_back(id);
                    continue;
                }
                compiled.push_back(compile_statement(id, EntryKind::sentence, hits[i].sentence_id, evidence[i], model));
            }
            std::vector<const KvEntry*> parts;
            for (const auto& e : compiled) parts.push_back(&e);
            auto prefix = compose_entries(parts, model, config.reposition);
            for (const auto& s : prefix.segments) trace.prefix_entries.push_back(s.entry_id);
            trace.prefix_tokens = prefix.token_len;
            if (static_cast<int>(prompt.tokens.size()) > prompt_budget(model, prefix.token_len, config.max_new)) {
                throw OverflowError("prefix plus prompt exceed max_positions; reduce --topk or --kv-budget");
            }
            auto mask = parse_layer_mask(config.layers, model.config().num_layers);
            auto out = inject_and_generate(InjectionPlan::make(std::move(prefix), std::move(mask), prompt.tokens), model,
                                           config.max_new);
            return finish(std::move(trace), out.text, evidence, config.ground_thresh);
        }

        case Condition::graphrag:
        case Condition::kvi: {
            auto r = graph_retrieve(query, stores, config);
            if (!r.entity) {
                trace.fallback = true;
                return plain_generation(query, stores, config, std::move(trace));
            }
            trace.linked_entity = r.entity;
            trace.relation_set.assign(r.relations.begin(), r.relations.end());
            trace.ranked = r.ranked;
            trace.prompt_evidence = r.evidence_ids;
            const auto evidence = sentence_texts(stores, r.evidence_ids);

            if (condition == Condition::graphrag) {
                auto prompt = build_prompt(evidence, query.text, config.prompt_template,
                                           prompt_budget(model, 0, config.max_new));
                trace.prompt = prompt.text;
                auto out = inject_and_generate(InjectionPlan::make({}, {}, prompt.tokens), model, config.max_new);
                return finish(std::move(trace), out.text, evidence, config.ground_thresh);
            }

            const auto& graph = stores.index->graph;
            auto prompt = build_prompt(evidence, query.text, config.prompt_template);
            trace.prompt = prompt.text;
            stores.bank->check_model(model);

            std::map<std::string_view, const Edge*> edge_of;
            for (const auto& e : graph.edges()) edge_of.emplace(e.capsule_id, &e);

            std::vector<const KvEntry*> parts;
            auto take = [&](const KvEntry* e, const std::string& id, const std::string& statement) {
                if (!e) throw LookupError("bank has no entry " + id);
                if (in_prompt(prompt.text, statement)) {
                    trace.withheld_entries.push_back(id);
                } else {
                    parts.push_back(e);
                }
            };
            take(stores.bank->anchor(*r.entity), anchor_entry_id(*r.entity),
                 anchor_statement(*r.entity, graph.type_of(*r.entity)));
            for (const auto& t : r.ranked) {
                const Edge* e = edge_of.at(t.capsule_id);
                take(stores.bank->triple(t.capsule_id), triple_entry_id(t.capsule_id),
                     triple_statement(e->subject, e->predicate, e->object));
            }
            auto prefix = compose_entries(parts, model, config.reposition);
            for (const auto& s : prefix.segments) trace.prefix_entries.push_back(s.entry_id);
            trace.prefix_tokens = prefix.token_len;
            if (static_cast<int>(prompt.tokens.size()) > prompt_budget(model, prefix.token_len, config.max_new)) {
                throw OverflowError("prefix plus prompt exceed max_positions; reduce --topk or --kv-budget");
            }
            auto mask = parse_layer_mask(config.layers, model.config().num_layers);
            auto out = inject_and_generate(InjectionPlan::make(std::move(prefix), std::move(mask), prompt.tokens), model,
                                           config.max_new);
            return finish(std::move(trace), out.text, evidence, config.ground_thresh);
        }
    }
    throw UsageError("unhandled condition");
}

nlohmann::json to_json(const Answer& answer) {
    using nlohmann::json;
    const auto& t = answer.trace;
    json ranked = json::array();
    for (const auto& r : t.ranked) {
        ranked.push_back({{"capsule_id", r.capsule_id},
                          {"score", r.score},
                          {"hop", r.hop},
                          {"predicate", r.predicate},
                          {"evidence_sentence_id", r.evidence_sentence_id}});
    }
    json trace = {{"condition", t.condition},
                  {"fallback", t.fallback},
                  {"linked_entity", t.linked_entity ? json(*t.linked_entity) : json(nullptr)},
                  {"relation_set", t.relation_set},
                  {"ranked", ranked},
                  {"prompt_evidence", t.prompt_evidence},
                  {"retrieved_sentences", t.retrieved_sentences},
                  {"prefix_entries", t.prefix_entries},
                  {"withheld_entries", t.withheld_entries},
                  {"prefix_tokens", t.prefix_tokens},
                  {"prompt", t.prompt}};
    return {{"text", answer.text}, {"kept", answer.kept}, {"dropped", answer.dropped}, {"trace", trace}};
}

}  // namespace kvi

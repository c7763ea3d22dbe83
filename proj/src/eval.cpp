#include "kvi/eval.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "kvi/binary_io.hpp"
#include "kvi/errors.hpp"
#include "kvi/parallel.hpp"
#include "kvi/text.hpp"

namespace kvi {

std::string canonicalize(std::string_view raw, bool medhop) {
    std::string s = text::collapse_whitespace(text::casefold(raw));
    if (!medhop) return s;
    for (size_t i = 0; i + 2 < s.size(); ++i) {
        if (s[i] != 'd' || s[i + 1] != 'b') continue;
        if (i > 0 && std::isalnum(static_cast<unsigned char>(s[i - 1]))) continue;
        size_t j = i + 2;
        while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
        if (j == i + 2) continue;
        return s.substr(i, j - i);
    }
    return "";
}

int exact_match(std::string_view prediction, std::span<const std::string> gold_answers, bool medhop) {
    const auto p = canonicalize(prediction, medhop);
    for (const auto& g : gold_answers) {
        if (canonicalize(g, medhop) == p) return 1;
    }
    return 0;
}

Query QAExample::query() const {
    Query q{question, std::nullopt};
    if (medhop()) q.dataset_hint = std::string(kMedhopMode);
    return q;
}

std::vector<QAExample> parse_dataset(std::string_view jsonl) {
    std::vector<QAExample> out;
    std::set<std::string> ids;
    size_t line_no = 0;
    size_t start = 0;
    while (start < jsonl.size()) {
        size_t end = jsonl.find('\n', start);
        if (end == std::string_view::npos) end = jsonl.size();
        const auto line = text::trim(jsonl.substr(start, end - start));
        start = end + 1;
        ++line_no;
        if (line.empty()) continue;
        const std::string where = "line " + std::to_string(line_no);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(where, e.what());
        }
        if (!j.is_object()) throw FormatError(where, "expected an object");
        auto need_string = [&](const char* key) {
            if (!j.contains(key) || !j[key].is_string()) throw FormatError(where, std::string("missing string field '") + key + "'");
            return j[key].get<std::string>();
        };
        auto string_list = [&](const char* key, bool required) {
            std::vector<std::string> v;
            if (!j.contains(key)) {
                if (required) throw FormatError(where, std::string("missing list field '") + key + "'");
                return v;
            }
            if (!j[key].is_array()) throw FormatError(where, std::string("'") + key + "' must be a list");
            for (const auto& x : j[key]) {
                if (!x.is_string()) throw FormatError(where, std::string("'") + key + "' must hold strings");
                v.push_back(x.get<std::string>());
            }
            return v;
        };
        QAExample ex;
        ex.example_id = need_string("id");
        ex.question = need_string("question");
        ex.gold_answers = string_list("answers", true);
        if (ex.gold_answers.empty()) throw FormatError(where, "answers must be non-empty");
        if (j.contains("mode")) ex.mode = need_string("mode");
        if (ex.mode != "free" && ex.mode != kMedhopMode) throw FormatError(where, "unknown mode '" + ex.mode + "'");
        ex.gold_capsule_ids = string_list("gold_capsule_ids", false);
        ex.gold_sentence_ids = string_list("gold_sentence_ids", false);
        if (!ids.insert(ex.example_id).second) throw FormatError(where, "duplicate id '" + ex.example_id + "'");
        out.push_back(std::move(ex));
    }
    return out;
}

std::vector<QAExample> load_dataset(const std::string& path) {
    try {
        return parse_dataset(read_file_text(path));
    } catch (const FormatError& e) {
        throw FormatError(path + ":" + e.where(), e.what());
    }
}

void save_dataset(std::span<const QAExample> examples, const std::string& path) {
    std::string out;
    for (const auto& ex : examples) {
        nlohmann::json j = {{"id", ex.example_id}, {"question", ex.question}, {"answers", ex.gold_answers}, {"mode", ex.mode}};
        if (!ex.gold_capsule_ids.empty()) j["gold_capsule_ids"] = ex.gold_capsule_ids;
        if (!ex.gold_sentence_ids.empty()) j["gold_sentence_ids"] = ex.gold_sentence_ids;
        out += j.dump();
        out += '\n';
    }
    write_file_text(path, out);
}

namespace {

const std::map<std::string, std::string>& default_templates() {
    static const std::map<std::string, std::string> t = {
        {"has_symptom", "What symptom does {S} present with?"},
        {"causes", "What complication does {S} cause?"},
        {"transmitted_by", "Which vector transmits {S}?"},
        {"reported_in", "Where has {S} been reported?"},
        {"interacts_with", "Which drug interacts with {S}?"},
        {"treated_with", "What is {S} treated with?"},
        {"located_in", "Where is {S} located?"},
    };
    return t;
}

std::string fill(std::string_view tmpl, std::string_view subject) {
    std::string out(tmpl);
    if (auto p = out.find("{S}"); p != std::string::npos) out.replace(p, 3, subject);
    return out;
}

}  // namespace

std::vector<QAExample> generate_relation_questions(const GraphIndex& index,
                                                   const std::map<std::string, std::string>& templates,
                                                   std::string_view id_prefix) {
    struct Group {
        std::vector<std::string> objects, capsules, sentences;
    };
    std::map<std::pair<std::string, std::string>, Group> groups;
    for (const auto& e : index.graph.edges()) {
        auto& g = groups[{e.subject, e.predicate}];
        if (std::find(g.objects.begin(), g.objects.end(), e.object) == g.objects.end()) g.objects.push_back(e.object);
        g.capsules.push_back(e.capsule_id);
        auto it = index.provenance.triple_sentence_index.find(e.capsule_id);
        if (it != index.provenance.triple_sentence_index.end() &&
            std::find(g.sentences.begin(), g.sentences.end(), it->second) == g.sentences.end()) {
            g.sentences.push_back(it->second);
        }
    }
    std::vector<QAExample> out;
    size_t i = 0;
    for (auto& [key, g] : groups) {
        const auto& [subject, relation] = key;
        std::string tmpl;
        if (auto it = templates.find(relation); it != templates.end()) {
            tmpl = it->second;
        } else if (auto d = default_templates().find(relation); d != default_templates().end()) {
            tmpl = d->second;
        } else {
            tmpl = "{S} " + verbalize_predicate(relation) + " what?";
        }
        QAExample ex;
        char buf[32];
        std::snprintf(buf, sizeof buf, "%03zu", i++);
        ex.example_id = std::string(id_prefix) + buf;
        ex.question = fill(tmpl, subject);
        ex.gold_answers = std::move(g.objects);
        ex.gold_capsule_ids = std::move(g.capsules);
        ex.gold_sentence_ids = std::move(g.sentences);
        out.push_back(std::move(ex));
    }
    return out;
}

nlohmann::json EvalRecord::to_json(bool with_latency) const {
    nlohmann::json j = {{"dataset", dataset},
                        {"example_id", example_id},
                        {"condition", condition},
                        {"prediction", prediction},
                        {"em", em}};
    if (error) j["error"] = *error;
    if (gold_trace) j["gold_trace"] = *gold_trace;
    if (with_latency) j["latency_ms"] = latency_ms;
    return j;
}

namespace {

bool covers_gold(const QAExample& ex, const AnswerTrace& trace) {
    for (const auto& c : ex.gold_capsule_ids) {
        if (std::none_of(trace.ranked.begin(), trace.ranked.end(), [&](const auto& r) { return r.capsule_id == c; })) {
            return false;
        }
    }
    for (const auto& s : ex.gold_sentence_ids) {
        if (std::find(trace.prompt_evidence.begin(), trace.prompt_evidence.end(), s) == trace.prompt_evidence.end()) {
            return false;
        }
    }
    return true;
}

}  // namespace

DatasetResult run_grid(std::string name, std::span<const QAExample> dataset, std::span<const Condition> conditions,
                       const KnowledgeStores& stores, const EvalConfig& config) {
    if (conditions.empty()) throw UsageError("no conditions selected");
    DatasetResult result;
    result.name = std::move(name);
    const size_t nc = conditions.size();
    result.records.resize(dataset.size() * nc);

    parallel_for(result.records.size(), config.workers, [&](size_t cell) {
        const auto& ex = dataset[cell / nc];
        const Condition cond = conditions[cell % nc];
        EvalRecord& rec = result.records[cell];
        rec.dataset = result.name;
        rec.example_id = ex.example_id;
        rec.condition = std::string(to_string(cond));
        const auto t0 = std::chrono::steady_clock::now();
        try {
            const auto answer = answer_query(ex.query(), stores, config.query, cond);
            rec.prediction = answer.text;
            rec.em = exact_match(answer.text, ex.gold_answers, ex.medhop());
            const bool graph = cond == Condition::graphrag || cond == Condition::kvi;
            if (graph && (!ex.gold_capsule_ids.empty() || !ex.gold_sentence_ids.empty())) {
                rec.gold_trace = covers_gold(ex, answer.trace);
            }
        } catch (const std::exception& e) {
            rec.em = 0;
            rec.error = e.what();
        }
        rec.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        if (config.timeout_ms > 0.0 && rec.latency_ms > config.timeout_ms && !rec.error) {
            rec.em = 0;
            rec.error = "timeout after " + std::to_string(config.timeout_ms) + " ms";
        }
    });

    std::map<Condition, std::vector<double>> scores;
    for (size_t i = 0; i < result.records.size(); ++i) {
        scores[conditions[i % nc]].push_back(result.records[i].em);
    }
    const bool has_kvi = std::find(conditions.begin(), conditions.end(), Condition::kvi) != conditions.end();
    for (size_t c = 0; c < nc; ++c) {
        const Condition cond = conditions[c];
        ConditionSummary s;
        s.condition = std::string(to_string(cond));
        s.n = dataset.size();
        size_t traced = 0, covered = 0;
        for (size_t e = 0; e < dataset.size(); ++e) {
            const auto& rec = result.records[e * nc + c];
            if (rec.error) ++s.errors;
            if (rec.gold_trace) {
                ++traced;
                covered += *rec.gold_trace;
            }
        }
        if (traced) s.gold_trace_coverage = 100.0 * static_cast<double>(covered) / static_cast<double>(traced);
        const auto& sc = scores[cond];
        if (!sc.empty()) {
            s.em_pct = 100.0 * mean(sc);
            s.ci = bootstrap_ci(sc, config.resamples, 0.95, config.seed);
            if (has_kvi && cond != Condition::kvi) {
                s.p_vs_kvi = permutation_test(sc, scores[Condition::kvi], config.permutations, config.seed);
            }
        }
        result.summaries.push_back(std::move(s));
    }
    return result;
}

std::string format_em_ci(double em_pct, const Interval& ci) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.1f [%.1f, %.1f]", em_pct + 0.0, ci.lo + 0.0, ci.hi + 0.0);
    return buf;
}

std::string_view display_name(Condition c) {
    switch (c) {
        case Condition::llm: return "LLM";
        case Condition::rag: return "RAG";
        case Condition::graphrag: return "GraphRAG";
        case Condition::kvprefix: return "KV Prefix";
        case Condition::kvi: return "KVI";
    }
    return "?";
}

namespace {

const ConditionSummary* summary_of(const DatasetResult& r, Condition c) {
    for (const auto& s : r.summaries) {
        if (s.condition == to_string(c)) return &s;
    }
    return nullptr;
}

std::string em_cell(const DatasetResult& r, const ConditionSummary& s, std::span<const Condition> conditions) {
    auto rounded = [](double v) {
        char b[32];
        std::snprintf(b, sizeof b, "%.1f", v + 0.0);
        return std::string(b);
    };
    double best = -1.0;
    for (auto c : conditions) {
        if (const auto* o = summary_of(r, c)) best = std::max(best, o->em_pct);
    }
    auto cell = format_em_ci(s.em_pct, s.ci);
    return rounded(s.em_pct) == rounded(best) ? "**" + cell + "**" : cell;
}

void header(std::ostringstream& os, std::string_view first, std::span<const DatasetResult> results) {
    os << "| " << first << " |";
    for (const auto& r : results) os << ' ' << r.name << " |";
    os << "\n|---|";
    for (size_t i = 0; i < results.size(); ++i) os << "---|";
    os << '\n';
}

}  // namespace

std::string render_table(std::span<const DatasetResult> results, std::span<const Condition> conditions) {
    std::ostringstream os;
    os << "## Exact match (%, 95% bootstrap CI)\n\n";
    header(os, "Condition", results);
    for (auto c : conditions) {
        os << "| " << display_name(c) << " |";
        for (const auto& r : results) {
            const auto* s = summary_of(r, c);
            os << ' ' << (s ? em_cell(r, *s, conditions) : "-") << " |";
        }
        os << '\n';
    }

    const bool has_kvi = std::find(conditions.begin(), conditions.end(), Condition::kvi) != conditions.end();
    if (has_kvi && conditions.size() > 1) {
        os << "\n## Paired permutation test against KVI (p)\n\n";
        header(os, "Condition", results);
        for (auto c : conditions) {
            if (c == Condition::kvi) continue;
            os << "| " << display_name(c) << " |";
            for (const auto& r : results) {
                const auto* s = summary_of(r, c);
                char buf[32] = "-";
                if (s && s->p_vs_kvi) std::snprintf(buf, sizeof buf, "%.4f", *s->p_vs_kvi);
                os << ' ' << buf << " |";
            }
            os << '\n';
        }
    }

    // The ablation view reuses the grid's own rows; nothing is re-run.
    const std::pair<Condition, std::string_view> ablation[] = {
        {Condition::kvi, "KVI (Full)"},
        {Condition::kvprefix, "w/o Graph (KV Prefix)"},
        {Condition::graphrag, "w/o KV (GraphRAG)"},
    };
    if (has_kvi) {
        os << "\n## Ablation\n\n";
        header(os, "Variant", results);
        for (const auto& [c, label] : ablation) {
            if (std::find(conditions.begin(), conditions.end(), c) == conditions.end()) continue;
            os << "| " << label << " |";
            for (const auto& r : results) {
                const auto* s = summary_of(r, c);
                os << ' ' << (s ? format_em_ci(s->em_pct, s->ci) : "-") << " |";
            }
            os << '\n';
        }
    }
    return os.str();
}

nlohmann::json stats_json(std::span<const DatasetResult> results, const EvalConfig& config) {
    using nlohmann::json;
    json datasets = json::object();
    for (const auto& r : results) {
        json conds = json::object();
        for (const auto& s : r.summaries) {
            json j = {{"n", s.n}, {"errors", s.errors}, {"em", s.em_pct}, {"ci", {s.ci.lo, s.ci.hi}}};
            j["p_vs_kvi"] = s.p_vs_kvi ? json(*s.p_vs_kvi) : json(nullptr);
            j["gold_trace_coverage"] = s.gold_trace_coverage ? json(*s.gold_trace_coverage) : json(nullptr);
            conds[s.condition] = std::move(j);
        }
        datasets[r.name] = std::move(conds);
    }
    const auto& q = config.query;
    return {{"datasets", datasets},
            {"config",
             {{"seed", config.seed},
              {"resamples", config.resamples},
              {"permutations", config.permutations},
              {"level", 0.95},
              {"hops", q.hops},
              {"topk", q.topk},
              {"kv_budget", q.kv_budget},
              {"layers", q.layers},
              {"ground_thresh", q.ground_thresh},
              {"ground_all", q.ground_all},
              {"max_new", q.max_new}}}};
}

}  // namespace kvi

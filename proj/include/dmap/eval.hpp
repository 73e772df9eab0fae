#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "dmap/detail/parallel.hpp"
#include "dmap/embed.hpp"
#include "dmap/llm.hpp"
#include "dmap/map_builder.hpp"
#include "dmap/prompts.hpp"
#include "dmap/reflective_qa.hpp"
#include "dmap/text.hpp"

namespace dmap::eval {

struct QARecord {
    std::string id;
    std::string doc_id;
    std::string question;
    std::string reference;
    // Evidence-source tags: pure_text, layout, table, chart, figure.
    std::vector<std::string> sources;
    std::optional<bool> answerable;

    bool is_unanswerable() const { return answerable.has_value() && !*answerable; }
};

/// Parses dataset.jsonl. Accepts `question_id`, `answer`, and
/// `evidence_sources` as aliases of `id`, `reference`, and `sources`.
inline std::vector<QARecord> parse_dataset(std::string_view jsonl) {
    std::vector<QARecord> out;
    std::size_t line_no = 0, offset = 0;
    for (auto line : text::split_lines(jsonl)) {
        ++line_no;
        const auto line_offset = offset;
        offset += line.size() + 1;
        if (text::trim(line).empty()) continue;
        auto j = nlohmann::json::parse(line.begin(), line.end(), nullptr, false);
        auto bad = [&](const std::string& field, const std::string& what) {
            return ParseError(line_offset, "/" + std::to_string(line_no) + "/" + field, what);
        };
        if (j.is_discarded() || !j.is_object()) throw bad("", "line is not a JSON object");
        auto str = [&](std::initializer_list<const char*> keys, bool required) -> std::string {
            for (const char* k : keys) {
                if (!j.contains(k) || j[k].is_null()) continue;
                if (j[k].is_string()) return j[k].get<std::string>();
                if (j[k].is_number()) return j[k].dump();
                throw bad(k, "expected string");
            }
            if (required) throw bad(*keys.begin(), "missing field");
            return {};
        };
        QARecord r;
        r.id = str({"id", "question_id"}, true);
        r.doc_id = str({"doc_id"}, true);
        r.question = str({"question"}, false);
        r.reference = str({"reference", "answer"}, false);
        for (const char* k : {"sources", "evidence_sources"}) {
            if (!j.contains(k)) continue;
            if (j[k].is_string()) r.sources.push_back(j[k].get<std::string>());
            else if (j[k].is_array())
                for (const auto& v : j[k])
                    if (v.is_string()) r.sources.push_back(v.get<std::string>());
            break;
        }
        if (j.contains("answerable") && j["answerable"].is_boolean()) r.answerable = j["answerable"].get<bool>();
        if (!r.is_unanswerable() && (text::trim(r.question).empty() || text::trim(r.reference).empty()))
            throw bad("question", "question and reference must be non-empty for answerable records");
        out.push_back(std::move(r));
    }
    return out;
}

struct JudgeResult {
    bool correct = false;
    // False when the unanswerable shortcut decided without a judge call.
    bool judged = false;
    std::string raw;
    bool warning = false;
};

/// Scores one answer. Unanswerable records are correct exactly when the
/// system flagged the answer unanswerable, without consulting the judge.
inline JudgeResult judge(llm::ChatBackend& llm, const QARecord& record, std::string_view candidate,
                         bool flagged_unanswerable) {
    JudgeResult r;
    if (record.is_unanswerable()) {
        r.correct = flagged_unanswerable;
        return r;
    }
    r.judged = true;
    auto req = prompts::render_prompt("judge_agent", {{"question", record.question},
                                                      {"reference", record.reference},
                                                      {"candidate", std::string(candidate)}});
    for (int attempt = 0; attempt < 2; ++attempt) {
        r.raw = llm.chat(req);
        if (auto yes = text::parse_yes_no(r.raw)) {
            r.correct = *yes;
            return r;
        }
    }
    r.warning = true;
    r.correct = false;
    return r;
}

struct Verdict {
    std::string question_id;
    bool correct = false;
    std::string judged_by;
    std::string system_answer;
    bool reflection_fired = false;
};

/// Fraction of correct verdicts.
inline double accuracy(const std::vector<Verdict>& verdicts) {
    if (verdicts.empty()) throw Error("accuracy of an empty verdict list");
    std::size_t correct = 0;
    for (const auto& v : verdicts) correct += v.correct ? 1 : 0;
    return static_cast<double>(correct) / static_cast<double>(verdicts.size());
}

struct AblationConfig {
    bool enable_text = true;
    bool enable_visual = true;
    bool enable_structured = true;
};

/// Everything needed to answer questions about one built document.
struct DocResources {
    DMap map;
    Index index;
    SummaryTree tree;
    fs::path bundle_root;
};

struct EvalOptions {
    std::size_t topk = 4;
    int max_rounds = 2;
    std::size_t concurrency = 1;
};

struct Backends {
    llm::ChatBackend& system;
    llm::ChatBackend& judge;
    EmbeddingBackend& text_embedder;
    EmbeddingBackend& visual_embedder;
};

struct Tally {
    std::size_t correct = 0;
    std::size_t total = 0;

    void add(bool ok) {
        ++total;
        correct += ok ? 1 : 0;
    }
    nlohmann::json to_json() const {
        nlohmann::json j = {{"correct", correct}, {"total", total}};
        j["accuracy"] = total ? nlohmann::json(static_cast<double>(correct) / static_cast<double>(total))
                              : nlohmann::json(nullptr);
        return j;
    }
};

struct QuestionResult {
    QARecord record;
    Verdict verdict;
    JudgeResult judgement;
    FinalAnswer answer;
};

struct Report {
    AblationConfig config;
    EvalOptions options;
    std::vector<QuestionResult> questions;
    std::vector<std::pair<std::string, std::string>> skipped;  // (question id, reason)
    Tally overall;
    std::map<std::string, Tally> per_source;
    // Questions whose first verdict triggered expansion.
    Tally reflection;

    std::vector<Verdict> verdicts() const {
        std::vector<Verdict> out;
        for (const auto& q : questions) out.push_back(q.verdict);
        return out;
    }
};

inline RetrievalConfig retrieval_config(const AblationConfig& cfg, std::size_t topk) {
    if (!cfg.enable_text && !cfg.enable_visual && !cfg.enable_structured)
        throw Error("ablation config must enable at least one retrieval path");
    auto r = RetrievalConfig::top(topk);
    r.enable_text = cfg.enable_text;
    r.enable_visual = cfg.enable_visual;
    r.enable_structured = cfg.enable_structured;
    return r;
}

/// Answers and judges every record. Records whose document is missing are
/// skipped and listed in the report.
inline Report evaluate(const std::vector<QARecord>& dataset, const std::map<std::string, DocResources>& docs,
                       Backends backends, const AblationConfig& cfg, const EvalOptions& opts = {}) {
    Report report;
    report.config = cfg;
    report.options = opts;
    const auto rcfg = retrieval_config(cfg, opts.topk);

    std::vector<const QARecord*> runnable;
    for (const auto& r : dataset) {
        if (docs.count(r.doc_id)) runnable.push_back(&r);
        else report.skipped.push_back({r.id, "document '" + r.doc_id + "' not built"});
    }

    std::vector<QuestionResult> results(runnable.size());
    detail::parallel_for(runnable.size(), opts.concurrency, [&](std::size_t i) {
        const auto& rec = *runnable[i];
        const auto& doc = docs.at(rec.doc_id);
        QueryContext ctx{doc.map, doc.index, doc.tree, backends.system, backends.text_embedder,
                         backends.visual_embedder};
        AnswerConfig acfg{rcfg, opts.max_rounds, doc.bundle_root};
        auto& out = results[i];
        out.record = rec;
        out.answer = answer_query(rec.question, ctx, acfg);
        out.judgement = judge(backends.judge, rec, out.answer.answer, out.answer.unanswerable);
        out.verdict = {rec.id, out.judgement.correct, out.judgement.judged ? backends.judge.name() : "rule",
                       out.answer.answer, out.answer.reflection_fired()};
    });

    for (auto& q : results) {
        report.overall.add(q.verdict.correct);
        for (const auto& tag : q.record.sources) report.per_source[tag].add(q.verdict.correct);
        if (q.verdict.reflection_fired) report.reflection.add(q.verdict.correct);
        report.questions.push_back(std::move(q));
    }
    return report;
}

inline nlohmann::json to_json(const Report& r) {
    using nlohmann::json;
    json per_source = json::object();
    for (const auto& [tag, t] : r.per_source) per_source[tag] = t.to_json();
    json skipped = json::array();
    for (const auto& [id, why] : r.skipped) skipped.push_back({{"id", id}, {"reason", why}});
    json questions = json::array();
    for (const auto& q : r.questions) {
        questions.push_back({{"id", q.record.id},
                             {"doc_id", q.record.doc_id},
                             {"question", q.record.question},
                             {"reference", q.record.reference},
                             {"answer", q.verdict.system_answer},
                             {"correct", q.verdict.correct},
                             {"judged_by", q.verdict.judged_by},
                             {"judge_raw", q.judgement.raw},
                             {"reflection_fired", q.verdict.reflection_fired},
                             {"trace", to_json(q.answer)}});
    }
    auto reflection = r.reflection.to_json();
    reflection["fired"] = r.reflection.total;
    reflection["error"] = r.reflection.total - r.reflection.correct;
    return {{"config",
             {{"enable_text", r.config.enable_text},
              {"enable_visual", r.config.enable_visual},
              {"enable_structured", r.config.enable_structured},
              {"topk", r.options.topk},
              {"max_rounds", r.options.max_rounds}}},
            {"overall", r.overall.to_json()},
            {"per_source", per_source},
            {"reflection", reflection},
            {"skipped", skipped},
            {"questions", questions}};
}

}  // namespace dmap::eval

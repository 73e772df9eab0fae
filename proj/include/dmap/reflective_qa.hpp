#pragma once

#include <future>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "dmap/doc_model.hpp"
#include "dmap/llm.hpp"
#include "dmap/prompts.hpp"
#include "dmap/retrieval.hpp"
#include "dmap/text.hpp"

namespace dmap {

struct TextBlock {
    std::string element_id;
    std::string text;
    bool operator==(const TextBlock&) const = default;
};

struct ImageRef {
    std::string element_id;
    std::string path;
    bool operator==(const ImageRef&) const = default;
};

/// Per-element text and image inputs handed to the generator agents.
struct EvidenceFeatures {
    std::vector<TextBlock> text_blocks;
    std::vector<ImageRef> image_refs;
};

inline EvidenceFeatures gather_features(const DMap& m, const std::vector<std::string>& ids) {
    EvidenceFeatures f;
    std::set<std::string> seen_ids, seen_images;
    for (const auto& id : ids) {
        const Element* e = m.element(id);
        if (!e) throw Error("gather_features: unknown element id " + id);
        if (!seen_ids.insert(id).second) continue;
        auto t = element_text(m, *e);
        if (!text::trim(t).empty()) f.text_blocks.push_back({id, t});
        if (e->image_ref && seen_images.insert(*e->image_ref).second) f.image_refs.push_back({id, *e->image_ref});
    }
    return f;
}

struct CandidateAnswer {
    std::string text;
    std::map<std::string, std::string> transcripts;
    int round = 0;
    std::vector<std::string> warnings;
};

struct ReflectVerdict {
    bool done = false;
    std::string raw;
    bool warning = false;
};

struct GenerateOptions {
    // Root for resolving image refs into attachments.
    fs::path bundle_root;
};

namespace detail {

inline std::string render_context(const EvidenceFeatures& f) {
    if (f.text_blocks.empty()) return "(no reference text)";
    std::string out;
    for (const auto& b : f.text_blocks) {
        if (!out.empty()) out += "\n\n";
        out += "[" + b.element_id + "]\n" + b.text;
    }
    return out;
}

inline std::optional<std::string> summarizer_answer(std::string_view response) {
    auto j = llm::extract_json_object(response);
    if (!j) return std::nullopt;
    for (const char* key : {"Answer", "answer"}) {
        if (!j->contains(key)) continue;
        const auto& v = (*j)[key];
        if (v.is_string()) return v.get<std::string>();
        if (!v.is_null()) return v.dump();
    }
    return std::nullopt;
}

}  // namespace detail

/// One generation round: text and image agents in parallel, then the
/// summarize agent merges their answers into {"Answer": ...}.
inline CandidateAnswer generate(llm::ChatBackend& llm, std::string_view question, const DMap& m,
                                const EvidenceFeatures& feats, const GenerateOptions& opts = {}) {
    CandidateAnswer c;
    const std::string q(question);

    auto text_req = prompts::render_prompt("text_agent", {{"question", q}, {"context", detail::render_context(feats)}});

    const bool attach = llm.supports_images();
    std::string images;
    std::vector<llm::Attachment> attachments;
    for (const auto& ref : feats.image_refs) {
        const Element* e = m.element(ref.element_id);
        std::string desc = e ? text::collapse_whitespace(element_text(m, *e)) : std::string{};
        if (!images.empty()) images += '\n';
        images += "[" + ref.element_id + "] " + (attach ? std::string("(attached image)") : desc);
        attachments.push_back({ref.element_id, opts.bundle_root / ref.path, desc});
    }
    if (images.empty()) images = "(no images)";
    auto image_req = prompts::render_prompt("image_agent", {{"question", q}, {"images", images}});
    image_req.attachments = std::move(attachments);

    auto text_future = std::async(std::launch::async, [&] { return llm.chat(text_req); });
    auto image_answer = llm.chat(image_req);
    auto text_answer = text_future.get();
    c.transcripts["text_agent"] = text_answer;
    c.transcripts["image_agent"] = image_answer;

    auto answers = "Text Agent: " + std::string(text::trim(text_answer)) +
                   "\nImage Agent: " + std::string(text::trim(image_answer));
    auto sum_req = prompts::render_prompt("gen_summarize_agent", {{"question", q}, {"answers", answers}});

    std::optional<std::string> final_answer;
    for (int attempt = 0; attempt < 2 && !final_answer; ++attempt) {
        auto response = llm.chat(sum_req);
        c.transcripts[attempt == 0 ? "gen_summarize_agent" : "gen_summarize_agent_retry"] = response;
        final_answer = detail::summarizer_answer(response);
    }
    if (!final_answer) {
        c.warnings.push_back("summarize agent output unparseable; falling back to agent answers");
        if (!text::is_not_answerable(text_answer) && !text::trim(text_answer).empty())
            final_answer = std::string(text::trim(text_answer));
        else if (!text::is_not_answerable(image_answer) && !text::trim(image_answer).empty())
            final_answer = std::string(text::trim(image_answer));
        else
            final_answer = std::string(text::kNotAnswerable);
    }
    c.text = std::string(text::trim(*final_answer));
    if (c.text.empty()) c.text = std::string(text::kNotAnswerable);
    return c;
}

/// Asks the reflect agent whether `answer` addresses `question`. A response
/// other than yes/no is retried once and then counts as "no".
inline ReflectVerdict reflect(llm::ChatBackend& llm, std::string_view question, std::string_view answer) {
    auto req = prompts::render_prompt("reflect_agent", {{"question", std::string(question)}, {"answer", std::string(answer)}});
    ReflectVerdict v;
    for (int attempt = 0; attempt < 2; ++attempt) {
        v.raw = llm.chat(req);
        if (auto yes = text::parse_yes_no(v.raw)) {
            v.done = *yes;
            return v;
        }
    }
    v.done = false;
    v.warning = true;
    return v;
}

struct AnswerConfig {
    RetrievalConfig retrieval;
    int max_rounds = 2;
    fs::path bundle_root;
};

struct RoundTrace {
    int round = 0;
    EvidenceSet evidence;
    std::vector<std::string> added;
    CandidateAnswer answer;
    ReflectVerdict verdict;
};

struct FinalAnswer {
    std::string answer;
    bool unanswerable = false;
    RetrievalResult retrieval;
    std::vector<RoundTrace> rounds;
    std::vector<std::string> warnings;

    /// Whether the first verdict asked for more evidence.
    bool reflection_fired() const { return rounds.size() > 1; }
};

inline constexpr std::uint8_t kExpansionFlag = 8;

/// Expansion candidates for one round: hierarchy neighbours of every current
/// evidence id, excluding current evidence, capped at `cap`.
inline std::vector<std::string> expand_evidence(const DMap& m, const EvidenceSet& evidence, std::size_t cap) {
    ExpansionPolicy policy;
    for (const auto& i : evidence.items) policy.seen.insert(i.element_id);
    std::vector<std::string> added;
    for (const auto& i : evidence.items) {
        for (auto& id : neighborhood(m, i.element_id, policy)) {
            if (added.size() >= cap) return added;
            policy.seen.insert(id);
            added.push_back(std::move(id));
        }
    }
    return added;
}

/// Retrieve, generate, and reflect; while the reflect agent says "no" and
/// rounds remain, widen the evidence through the map hierarchy and generate
/// again. Performs at most max_rounds + 1 generations.
inline FinalAnswer answer_query(std::string_view question, const QueryContext& ctx, const AnswerConfig& cfg) {
    if (cfg.max_rounds < 0) throw Error("max_rounds must be non-negative");
    FinalAnswer out;
    out.retrieval = retrieve(question, ctx, cfg.retrieval);
    out.warnings = out.retrieval.warnings;

    GenerateOptions gen_opts{cfg.bundle_root};
    EvidenceSet evidence = out.retrieval.evidence;
    const std::size_t cap = cfg.retrieval.k_text + cfg.retrieval.k_visual;
    for (int round = 0; round <= cfg.max_rounds; ++round) {
        RoundTrace t;
        t.round = round;
        if (round > 0) {
            t.added = expand_evidence(ctx.map, evidence, cap);
            for (const auto& id : t.added) evidence.items.push_back({id, kExpansionFlag});
        }
        t.evidence = evidence;
        t.answer = generate(ctx.llm, question, ctx.map, gather_features(ctx.map, evidence.ids()), gen_opts);
        t.answer.round = round;
        t.verdict = reflect(ctx.llm, question, t.answer.text);
        for (const auto& w : t.answer.warnings) out.warnings.push_back("round " + std::to_string(round) + ": " + w);
        if (t.verdict.warning)
            out.warnings.push_back("round " + std::to_string(round) + ": reflect verdict unparseable: " + t.verdict.raw);
        const bool done = t.verdict.done;
        out.rounds.push_back(std::move(t));
        if (done) break;
    }
    const auto& last = out.rounds.back();
    out.answer = last.answer.text;
    out.unanswerable = !last.verdict.done && text::is_not_answerable(last.answer.text);
    return out;
}

inline nlohmann::json to_json(const FinalAnswer& a) {
    using nlohmann::json;
    auto flags = [](const EvidenceItem& i) {
        json paths = json::array();
        for (auto p : {RetrievalPath::structured, RetrievalPath::textual, RetrievalPath::visual})
            if (i.from(p)) paths.push_back(std::string(to_string(p)));
        if (i.provenance & kExpansionFlag) paths.push_back("expansion");
        return paths;
    };
    auto hits = [](const PathResult& r) {
        json out = json::array();
        for (const auto& h : r.hits) {
            json hj = {{"id", h.element_id}};
            hj["score"] = h.score ? json(*h.score) : json(nullptr);
            out.push_back(std::move(hj));
        }
        return out;
    };
    json locations = json::array();
    for (const auto& l : a.retrieval.structured.locations) locations.push_back(l.display());
    json rounds = json::array();
    for (const auto& r : a.rounds) {
        json evidence = json::array();
        for (const auto& i : r.evidence.items) evidence.push_back({{"id", i.element_id}, {"paths", flags(i)}});
        rounds.push_back({{"round", r.round},
                          {"evidence", evidence},
                          {"added", r.added},
                          {"transcripts", r.answer.transcripts},
                          {"answer", r.answer.text},
                          {"verdict", {{"done", r.verdict.done}, {"raw", r.verdict.raw}}}});
    }
    return {{"answer", a.answer},
            {"unanswerable", a.unanswerable},
            {"retrieval",
             {{"structured", hits(a.retrieval.structured.path)},
              {"locations", locations},
              {"textual", hits(a.retrieval.textual)},
              {"visual", hits(a.retrieval.visual)}}},
            {"rounds", rounds},
            {"warnings", a.warnings}};
}

}  // namespace dmap

#pragma once

#include <cstdint>
#include <future>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "dmap/doc_model.hpp"
#include "dmap/embed.hpp"
#include "dmap/llm.hpp"
#include "dmap/map_builder.hpp"
#include "dmap/prompts.hpp"
#include "dmap/text.hpp"

namespace dmap {

// ---------------------------------------------------------------------------
// Location parsing

/// Maps "page 7", "Page ii", "Table 3", "figure 12" (any case) to a location;
/// everything else, including "not mentioned", is NotMentioned.
inline LocationRef normalize_location(std::string_view raw) {
    auto tokens = text::split_whitespace(text::trim(raw));
    if (tokens.size() < 2) return LocationRef::not_mentioned();
    auto kind = text::to_lower(tokens[0]);
    auto number = tokens[1];
    while (!number.empty() && std::ispunct(static_cast<unsigned char>(number.back()))) number.remove_suffix(1);
    std::optional<int> n = text::parse_positive_int(number);
    if (!n) n = text::roman_to_int(number);
    if (!n) return LocationRef::not_mentioned();
    if (kind == "page") return LocationRef::page(*n);
    if (kind == "table") return LocationRef::table(*n);
    if (kind == "figure") return LocationRef::figure(*n);
    return LocationRef::not_mentioned();
}

struct LocationParse {
    std::vector<LocationRef> refs;
    // Set when the output had no JSON object with a "location" key.
    bool warning = false;
};

/// Reads the "location" array of the first JSON object that has one, keeping
/// relevance order and dropping entries that do not name a location.
inline LocationParse parse_locations(std::string_view output) {
    LocationParse r;
    auto stripped = llm::strip_code_fences(output);
    const nlohmann::json* locations = nullptr;
    nlohmann::json holder;
    for (auto block : llm::balanced_objects(stripped)) {
        auto j = nlohmann::json::parse(block.begin(), block.end(), nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("location")) continue;
        holder = std::move(j);
        locations = &holder["location"];
        break;
    }
    if (!locations) {
        r.warning = true;
        return r;
    }
    std::vector<std::string> raw;
    if (locations->is_string()) raw.push_back(locations->get<std::string>());
    else if (locations->is_array())
        for (const auto& v : *locations)
            if (v.is_string()) raw.push_back(v.get<std::string>());
    for (const auto& s : raw) {
        auto loc = normalize_location(s);
        if (loc.kind != LocationRef::Kind::not_mentioned) r.refs.push_back(loc);
    }
    return r;
}

// ---------------------------------------------------------------------------
// Paths and fusion

enum class RetrievalPath : std::uint8_t { structured = 1, textual = 2, visual = 4 };

inline std::string_view to_string(RetrievalPath p) {
    switch (p) {
        case RetrievalPath::structured: return "structured";
        case RetrievalPath::textual: return "textual";
        case RetrievalPath::visual: return "visual";
    }
    return "structured";
}

struct PathHit {
    std::string element_id;
    // Absent on the structured path, where rank is list order.
    std::optional<double> score;
    bool operator==(const PathHit&) const = default;
};

struct PathResult {
    RetrievalPath path = RetrievalPath::structured;
    std::vector<PathHit> hits;

    std::vector<std::string> ids() const {
        std::vector<std::string> out;
        for (const auto& h : hits) out.push_back(h.element_id);
        return out;
    }
    bool operator==(const PathResult&) const = default;
};

struct EvidenceItem {
    std::string element_id;
    std::uint8_t provenance = 0;

    bool from(RetrievalPath p) const { return provenance & static_cast<std::uint8_t>(p); }
    bool operator==(const EvidenceItem&) const = default;
};

/// The fused retrieval result: ordered, duplicate-free, with per-path flags.
struct EvidenceSet {
    std::vector<EvidenceItem> items;

    std::vector<std::string> ids() const {
        std::vector<std::string> out;
        for (const auto& i : items) out.push_back(i.element_id);
        return out;
    }
    std::size_t size() const { return items.size(); }
    bool empty() const { return items.empty(); }
    bool operator==(const EvidenceSet&) const = default;
};

/// Union of the three paths: structured hits in relevance order, then the
/// remaining textual hits, then the remaining visual hits.
inline EvidenceSet fuse(const PathResult& structured, const PathResult& textual, const PathResult& visual) {
    EvidenceSet out;
    auto add = [&](const PathResult& r, RetrievalPath flag) {
        for (const auto& h : r.hits) {
            auto it = std::find_if(out.items.begin(), out.items.end(),
                                   [&](const EvidenceItem& i) { return i.element_id == h.element_id; });
            if (it == out.items.end()) out.items.push_back({h.element_id, static_cast<std::uint8_t>(flag)});
            else it->provenance |= static_cast<std::uint8_t>(flag);
        }
    };
    add(structured, RetrievalPath::structured);
    add(textual, RetrievalPath::textual);
    add(visual, RetrievalPath::visual);
    return out;
}

struct RetrievalConfig {
    std::size_t k_text = 4;
    std::size_t k_visual = 4;
    std::size_t k_structured = 4;
    bool enable_text = true;
    bool enable_visual = true;
    bool enable_structured = true;

    static RetrievalConfig top(std::size_t k) { return {k, k, k}; }
};

/// Read-only inputs of one query.
struct QueryContext {
    const DMap& map;
    const Index& index;
    const SummaryTree& tree;
    llm::ChatBackend& llm;
    EmbeddingBackend& text_embedder;
    EmbeddingBackend& visual_embedder;
};

struct StructuredResult {
    PathResult path{RetrievalPath::structured, {}};
    std::vector<LocationRef> locations;
    std::string raw;
    std::vector<std::string> warnings;
};

/// Asks the locate agent for locations and resolves them to elements in
/// relevance order, deduplicated and capped at k_structured.
inline StructuredResult structured_retrieve(llm::ChatBackend& llm, std::string_view question, const SummaryTree& tree,
                                            const DMap& m, const RetrievalConfig& cfg) {
    StructuredResult r;
    auto req = prompts::render_prompt(
        "locate_agent", {{"summary", tree.summaries}, {"outline", tree.outline}, {"question", std::string(question)}});
    try {
        r.raw = llm.chat(req);
    } catch (const BackendError& e) {
        r.warnings.push_back(std::string("locate agent failed: ") + e.what());
        return r;
    }
    auto parsed = parse_locations(r.raw);
    if (parsed.warning) r.warnings.push_back("locate agent output has no location list");
    r.locations = parsed.refs;
    std::set<std::string> seen;
    for (const auto& loc : parsed.refs) {
        auto resolved = resolve_location(m, loc);
        if (resolved.out_of_range) r.warnings.push_back("locate agent named nonexistent " + loc.display());
        for (auto& id : resolved.ids) {
            if (r.path.hits.size() >= cfg.k_structured) return r;
            if (seen.insert(id).second) r.path.hits.push_back({id, std::nullopt});
        }
    }
    return r;
}

inline PathResult dense_retrieve(const Index& index, EmbeddingBackend& embedder, std::string_view question,
                                 Modality modality, std::size_t k) {
    PathResult r{modality == Modality::text ? RetrievalPath::textual : RetrievalPath::visual, {}};
    if (index.records(modality).empty()) return r;
    auto q = embedder.embed_queries({std::string(question)});
    if (q.size() != 1) throw Error("query embedding returned " + std::to_string(q.size()) + " matrices");
    for (auto& s : topk(index, q.front(), modality, k)) r.hits.push_back({s.element_id, s.score});
    return r;
}

struct RetrievalResult {
    EvidenceSet evidence;
    StructuredResult structured;
    PathResult textual{RetrievalPath::textual, {}};
    PathResult visual{RetrievalPath::visual, {}};
    std::vector<std::string> warnings;
};

/// Runs the enabled paths concurrently and fuses them. A disabled path
/// contributes an empty result and makes no backend calls.
inline RetrievalResult retrieve(std::string_view question, const QueryContext& ctx, const RetrievalConfig& cfg) {
    RetrievalResult r;
    const std::string q(question);
    std::future<StructuredResult> structured;
    std::future<PathResult> textual, visual;
    if (cfg.enable_structured)
        structured = std::async(std::launch::async, [&] { return structured_retrieve(ctx.llm, q, ctx.tree, ctx.map, cfg); });
    if (cfg.enable_text)
        textual = std::async(std::launch::async,
                             [&] { return dense_retrieve(ctx.index, ctx.text_embedder, q, Modality::text, cfg.k_text); });
    if (cfg.enable_visual)
        visual = std::async(std::launch::async, [&] {
            return dense_retrieve(ctx.index, ctx.visual_embedder, q, Modality::visual, cfg.k_visual);
        });

    if (structured.valid()) {
        r.structured = structured.get();
        r.warnings.insert(r.warnings.end(), r.structured.warnings.begin(), r.structured.warnings.end());
    }
    auto collect = [&](std::future<PathResult>& f, PathResult& into, std::string_view label) {
        if (!f.valid()) return;
        try {
            into = f.get();
        } catch (const std::exception& e) {
            r.warnings.push_back(std::string(label) + " retrieval failed: " + e.what());
        }
    };
    collect(textual, r.textual, "textual");
    collect(visual, r.visual, "visual");
    r.evidence = fuse(r.structured.path, r.textual, r.visual);
    return r;
}

}  // namespace dmap

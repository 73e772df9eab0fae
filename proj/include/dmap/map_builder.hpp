#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "dmap/bundle.hpp"
#include "dmap/detail/parallel.hpp"
#include "dmap/doc_model.hpp"
#include "dmap/error.hpp"
#include "dmap/llm.hpp"
#include "dmap/prompts.hpp"
#include "dmap/text.hpp"

namespace dmap {

struct OutlineEntry {
    std::string number;
    std::string title;
    std::vector<int> pages;

    bool operator==(const OutlineEntry&) const = default;
};

/// The cumulative outline threaded through page-by-page construction.
struct OutlineState {
    std::vector<OutlineEntry> entries;
    int step = 0;

    bool operator==(const OutlineState& o) const { return entries == o.entries; }
};

struct PageSummary {
    int page_no = 0;
    std::string sentence;
    std::vector<ElementNote> element_notes;
};

inline constexpr std::string_view kNoContent = "no content";
inline constexpr std::string_view kDocumentRootNumber = "0";
inline constexpr std::string_view kDocumentRootTitle = "Document";

namespace outline {

inline void sort_unique(std::vector<int>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
}

inline std::string render_pages(const std::vector<int>& pages) {
    std::string out;
    for (std::size_t i = 0; i < pages.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(pages[i]);
    }
    return out;
}

inline std::string render_line(const OutlineEntry& e) {
    return e.number + ":" + e.title + " < > " + render_pages(e.pages);
}

/// A dotted section number: alphanumeric components separated by '.'.
inline bool valid_number(std::string_view s) {
    if (s.empty() || s.front() == '.' || s.back() == '.') return false;
    bool prev_dot = false;
    for (char c : s) {
        if (c == '.') {
            if (prev_dot) return false;
            prev_dot = true;
        } else if (std::isalnum(static_cast<unsigned char>(c))) {
            prev_dot = false;
        } else {
            return false;
        }
    }
    return true;
}

inline std::string normalize_number(std::string_view s) {
    s = text::trim(s);
    while (!s.empty() && s.back() == '.') s.remove_suffix(1);
    return std::string(s);
}

inline std::string parent_number(std::string_view number) {
    auto dot = number.rfind('.');
    return dot == std::string_view::npos ? std::string{} : std::string(number.substr(0, dot));
}

inline int depth(std::string_view number) {
    return static_cast<int>(std::count(number.begin(), number.end(), '.'));
}

/// Orders dotted numbers component-wise, numerically where both are digits.
inline bool number_less(std::string_view a, std::string_view b) {
    auto next = [](std::string_view& s) {
        auto dot = s.find('.');
        auto part = s.substr(0, dot);
        s = dot == std::string_view::npos ? std::string_view{} : s.substr(dot + 1);
        return part;
    };
    while (!a.empty() && !b.empty()) {
        auto pa = next(a), pb = next(b);
        auto na = text::parse_positive_int(pa), nb = text::parse_positive_int(pb);
        bool za = pa == "0", zb = pb == "0";
        if ((na || za) && (nb || zb)) {
            int ia = za ? 0 : *na, ib = zb ? 0 : *nb;
            if (ia != ib) return ia < ib;
        } else if (pa != pb) {
            return pa < pb;
        }
    }
    return a.empty() && !b.empty();
}

/// Parses "1,2, 5" and ranges such as "3-5". Non-numeric items are skipped.
inline std::vector<int> parse_pages(std::string_view s, std::vector<std::string>& warnings) {
    std::vector<int> pages;
    std::size_t start = 0;
    while (start <= s.size()) {
        auto comma = s.find(',', start);
        if (comma == std::string_view::npos) comma = s.size();
        auto item = text::trim(s.substr(start, comma - start));
        start = comma + 1;
        if (item.empty()) continue;
        if (auto v = text::parse_positive_int(item)) {
            pages.push_back(*v);
            continue;
        }
        auto dash = item.find('-');
        if (dash != std::string_view::npos) {
            auto lo = text::parse_positive_int(item.substr(0, dash));
            auto hi = text::parse_positive_int(item.substr(dash + 1));
            if (lo && hi && *lo <= *hi && *hi - *lo < 10000) {
                for (int p = *lo; p <= *hi; ++p) pages.push_back(p);
                continue;
            }
        }
        warnings.push_back("outline: ignoring page item '" + std::string(item) + "'");
    }
    sort_unique(pages);
    return pages;
}

/// Parses one outline line: "{number}:{title} < > {pages}". Also accepts the
/// "<|>" separator and a space in place of the colon.
inline std::optional<OutlineEntry> parse_line(std::string_view line, std::vector<std::string>& warnings) {
    line = text::trim(line);
    if (line.empty()) return std::nullopt;
    std::size_t sep = line.find("<|>");
    if (sep == std::string_view::npos) sep = line.find("< >");
    if (sep == std::string_view::npos) {
        warnings.push_back("outline: line without page separator skipped: " + std::string(line));
        return std::nullopt;
    }
    auto head = text::trim(line.substr(0, sep));
    auto pages = line.substr(sep + 3);

    auto colon = head.find(':');
    auto space = head.find_first_of(" \t");
    std::size_t split = colon != std::string_view::npos ? colon : space;
    if (split == std::string_view::npos) {
        warnings.push_back("outline: line without section number skipped: " + std::string(line));
        return std::nullopt;
    }
    OutlineEntry e;
    e.number = normalize_number(head.substr(0, split));
    e.title = std::string(text::trim(head.substr(split + 1)));
    if (!valid_number(e.number)) {
        warnings.push_back("outline: invalid section number skipped: " + std::string(line));
        return std::nullopt;
    }
    e.pages = parse_pages(pages, warnings);
    return e;
}

}  // namespace outline

inline std::string render_outline(const OutlineState& s) {
    std::string out;
    for (const auto& e : s.entries) {
        if (!out.empty()) out += '\n';
        out += outline::render_line(e);
    }
    return out;
}

struct OutlineParse {
    OutlineState state;
    std::vector<std::string> warnings;
};

/// Extracts the outline block of a summarize-agent response: the lines after
/// "Outline:" up to "Current page summary:". Throws ParseError when there is
/// no outline block.
inline OutlineParse parse_outline(std::string_view response) {
    OutlineParse r;
    auto lines = text::split_lines(response);
    std::size_t i = 0;
    for (; i < lines.size(); ++i) {
        auto t = text::trim(lines[i]);
        if (text::starts_with_icase(t, "Outline:")) break;
    }
    if (i == lines.size()) throw ParseError(0, "Outline", "response has no 'Outline:' block");
    auto rest = text::trim(text::trim(lines[i]).substr(8));
    std::vector<std::string_view> block;
    if (!rest.empty()) block.push_back(rest);
    for (++i; i < lines.size(); ++i) {
        if (text::starts_with_icase(text::trim(lines[i]), "Current page summary:")) break;
        block.push_back(lines[i]);
    }
    for (auto line : block) {
        if (text::trim(line).empty()) continue;
        if (auto e = outline::parse_line(line, r.warnings)) r.state.entries.push_back(std::move(*e));
    }
    return r;
}

/// Parses the "Current page summary:" block for page `page_no`.
inline PageSummary parse_page_summary(std::string_view response, int page_no) {
    PageSummary s;
    s.page_no = page_no;
    auto lines = text::split_lines(response);
    std::size_t i = 0;
    while (i < lines.size() && !text::starts_with_icase(text::trim(lines[i]), "Current page summary:")) ++i;
    for (++i; i < lines.size(); ++i) {
        auto t = text::trim(lines[i]);
        if (t.empty()) continue;
        if (text::starts_with_icase(t, "Page")) {
            auto colon = t.find(':');
            if (colon != std::string_view::npos && s.sentence.empty())
                s.sentence = std::string(text::trim(t.substr(colon + 1)));
            continue;
        }
        if (text::starts_with_icase(t, "Figure") || text::starts_with_icase(t, "Table")) {
            auto colon = t.rfind(": ");
            if (colon == std::string_view::npos) colon = t.rfind(':');
            if (colon == std::string_view::npos) continue;
            auto name = text::trim(t.substr(0, colon));
            auto desc = text::trim(t.substr(colon + 1));
            if (desc.empty()) continue;
            s.element_notes.push_back({std::string(name), std::string(desc)});
        }
    }
    return s;
}

namespace outline {

/// Entries of `prev` that `next` dropped or shrank (matched by number).
inline std::vector<std::string> missing_entries(const OutlineState& prev, const OutlineState& next) {
    std::vector<std::string> missing;
    for (const auto& e : prev.entries) {
        bool kept = std::any_of(next.entries.begin(), next.entries.end(), [&](const OutlineEntry& n) {
            return n.number == e.number &&
                   std::includes(n.pages.begin(), n.pages.end(), e.pages.begin(), e.pages.end());
        });
        if (!kept) missing.push_back(e.number);
    }
    return missing;
}

inline bool covers_page(const OutlineState& s, int page) {
    return std::any_of(s.entries.begin(), s.entries.end(), [&](const OutlineEntry& e) {
        return std::binary_search(e.pages.begin(), e.pages.end(), page);
    });
}

/// Appends `page` to the last entry and its ancestors; creates the synthetic
/// document root when the outline is empty.
inline OutlineState append_to_last(OutlineState s, int page) {
    if (s.entries.empty()) {
        s.entries.push_back({std::string(kDocumentRootNumber), std::string(kDocumentRootTitle), {page}});
        return s;
    }
    std::string number = s.entries.back().number;
    while (!number.empty()) {
        for (auto& e : s.entries) {
            if (e.number == number) {
                e.pages.push_back(page);
                sort_unique(e.pages);
            }
        }
        number = parent_number(number);
    }
    return s;
}

}  // namespace outline

struct StepResult {
    OutlineState state;
    PageSummary summary;
    bool fallback = false;
    std::vector<std::string> warnings;
};

namespace detail {

inline bool blank(std::string_view s) { return text::trim(s).empty(); }

inline std::string first_sentence(std::string_view s, std::size_t max_len = 200) {
    auto t = text::collapse_whitespace(s);
    auto end = t.find_first_of(".!?");
    if (end != std::string::npos) t = t.substr(0, end + 1);
    if (t.size() > max_len) t = t.substr(0, max_len);
    return t;
}

}  // namespace detail

/// One construction step: asks the summarize agent to fold `current` into the
/// outline. A response that loses prior sections or omits the current page
/// gets one repair round; after that the page is appended to the last entry.
inline StepResult summarize_step(llm::ChatBackend& backend, const OutlineState& prev,
                                 const Page* previous, const Page& current, bool has_elements = false) {
    StepResult r;
    const auto rendered = render_outline(prev);
    prompts::Vars vars = {
        {"outline", rendered.empty() ? "(empty)" : rendered},
        {"previous_page", previous ? previous->text : std::string("(none)")},
        {"page_number", std::to_string(current.number)},
        {"current_page", current.text},
    };
    auto request = prompts::render_prompt("summarize_agent", vars);

    auto call = [&](const llm::ChatRequest& req) {
        try {
            return backend.chat(req);
        } catch (const BackendError& e) {
            throw ConstructionError(current.number, std::string("summarize agent failed: ") + e.what());
        }
    };

    // Returns an empty string when the response is usable.
    auto check = [&](const std::string& response, OutlineState& parsed) -> std::string {
        try {
            auto p = parse_outline(response);
            r.warnings.insert(r.warnings.end(), p.warnings.begin(), p.warnings.end());
            parsed = std::move(p.state);
        } catch (const ParseError&) {
            return "the response has no 'Outline:' block.";
        }
        auto missing = outline::missing_entries(prev, parsed);
        if (!missing.empty())
            return "sections " + text::join(missing, ", ") + " were dropped or lost pages.";
        if (!outline::covers_page(parsed, current.number))
            return "page " + std::to_string(current.number) + " is not listed in any section.";
        return {};
    };

    std::string response = call(request);
    OutlineState parsed;
    std::string problem = check(response, parsed);
    std::string summary_source = response;
    if (!problem.empty()) {
        auto repair_vars = vars;
        repair_vars["problem"] = problem;
        auto repair = prompts::render_prompt("summarize_repair", repair_vars);
        llm::ChatRequest retry = request;
        retry.template_id = "summarize_repair";
        retry.vars = repair_vars;
        retry.messages.push_back({"assistant", response});
        retry.messages.push_back(repair.messages.front());
        auto second = call(retry);
        problem = check(second, parsed);
        if (parse_page_summary(second, current.number).sentence.size() > 0) summary_source = second;
        if (!problem.empty()) {
            r.warnings.push_back("page " + std::to_string(current.number) +
                                 ": outline unusable after repair (" + problem + "); appended to last section");
            parsed = outline::append_to_last(prev, current.number);
            r.fallback = true;
        }
    }
    r.state = std::move(parsed);
    r.state.step = prev.step + 1;

    r.summary = parse_page_summary(summary_source, current.number);
    if (detail::blank(current.text) && !has_elements) {
        r.summary.sentence = std::string(kNoContent);
        r.summary.element_notes.clear();
    }
    if (r.summary.sentence.empty()) {
        r.warnings.push_back("page " + std::to_string(current.number) + ": summary missing from response");
        r.summary.sentence =
            detail::blank(current.text) ? std::string(kNoContent) : detail::first_sentence(current.text);
    }
    return r;
}

namespace detail {

struct FlatSection {
    std::string number;
    std::string title;
    std::vector<int> pages;
};

inline SectionNode assemble(const std::string& number, const std::map<std::string, FlatSection>& flat,
                            const std::map<std::string, std::vector<std::string>>& children) {
    const auto& f = flat.at(number);
    SectionNode node{f.number, f.title, f.pages, {}};
    if (auto it = children.find(number); it != children.end()) {
        for (const auto& c : it->second) {
            node.children.push_back(assemble(c, flat, children));
            node.pages.insert(node.pages.end(), node.children.back().pages.begin(),
                              node.children.back().pages.end());
        }
    }
    outline::sort_unique(node.pages);
    return node;
}

}  // namespace detail

/// Nests a flat outline into a section tree by dotted numbers. Missing
/// ancestors are synthesized with empty titles, duplicate numbers merge, pages
/// outside 1..page_count are dropped, and child pages propagate upward. Pages
/// no root covers are attached to the preceding root section.
inline std::vector<SectionNode> outline_to_sections(const OutlineState& state, int page_count,
                                                    std::vector<std::string>* warnings = nullptr) {
    std::map<std::string, detail::FlatSection> flat;
    for (const auto& e : state.entries) {
        auto number = outline::normalize_number(e.number);
        if (!outline::valid_number(number)) continue;
        auto& f = flat[number];
        if (f.number.empty()) {
            f.number = number;
            f.title = e.title;
        }
        for (int p : e.pages) {
            if (p >= 1 && p <= page_count) f.pages.push_back(p);
            else if (warnings) warnings->push_back("outline: section " + number + " lists nonexistent page " + std::to_string(p));
        }
    }
    // Synthesize missing ancestors.
    std::vector<std::string> numbers;
    for (const auto& [n, f] : flat) numbers.push_back(n);
    for (const auto& n : numbers) {
        for (auto p = outline::parent_number(n); !p.empty(); p = outline::parent_number(p)) {
            auto& f = flat[p];
            if (f.number.empty()) f.number = p;
        }
    }
    std::vector<std::string> roots;
    std::map<std::string, std::vector<std::string>> children;
    for (const auto& [n, f] : flat) {
        auto parent = outline::parent_number(n);
        (parent.empty() ? roots : children[parent]).push_back(n);
    }
    auto by_number = [](const std::string& a, const std::string& b) { return outline::number_less(a, b); };
    std::sort(roots.begin(), roots.end(), by_number);
    for (auto& [p, c] : children) std::sort(c.begin(), c.end(), by_number);

    std::vector<SectionNode> sections;
    for (const auto& r : roots) sections.push_back(detail::assemble(r, flat, children));

    std::set<int> covered;
    for (const auto& s : sections) covered.insert(s.pages.begin(), s.pages.end());
    for (int p = 1; p <= page_count; ++p) {
        if (covered.count(p)) continue;
        if (warnings) warnings->push_back("outline: page " + std::to_string(p) + " uncovered; attached to preceding section");
        if (sections.empty()) {
            sections.push_back({std::string(kDocumentRootNumber), std::string(kDocumentRootTitle), {}, {}});
        }
        SectionNode* target = &sections.front();
        for (auto& s : sections)
            if (!s.pages.empty() && s.pages.front() < p) target = &s;
        target->pages.push_back(p);
        outline::sort_unique(target->pages);
    }
    return sections;
}

/// Pre-order flattening of a section tree back into outline entries.
inline OutlineState flatten_sections(const std::vector<SectionNode>& sections) {
    OutlineState s;
    auto walk = [&](auto&& self, const SectionNode& n) -> void {
        s.entries.push_back({n.number_path, n.title, n.pages});
        for (const auto& c : n.children) self(self, c);
    };
    for (const auto& n : sections) walk(walk, n);
    return s;
}

/// The rendered outline plus per-page summaries handed to the locate agent.
struct SummaryTree {
    std::string outline;
    std::string summaries;

    std::string text() const { return "Outline:\n" + outline + "\n\nPage summaries:\n" + summaries; }
};

inline SummaryTree render_summary_tree(const DMap& m) {
    SummaryTree t;
    t.outline = render_outline(flatten_sections(m.sections));
    for (const auto& p : m.pages) {
        if (!t.summaries.empty()) t.summaries += '\n';
        t.summaries += "Page " + std::to_string(p.number) + ": " + p.summary;
        std::set<std::string> mentioned;
        for (const auto& n : p.notes) {
            t.summaries += "\n  " + n.name + ": " + n.description;
            mentioned.insert(normalize_label(n.name));
        }
        for (const auto& id : p.element_ids) {
            const Element* e = m.element(id);
            if (!e || e->kind == ElementKind::page_content || !e->label) continue;
            bool noted = std::any_of(mentioned.begin(), mentioned.end(), [&](const std::string& n) {
                return n.rfind(normalize_label(*e->label), 0) == 0;
            });
            if (noted) continue;
            t.summaries += "\n  " + *e->label + ": " +
                           (e->text_desc.empty() ? std::string(to_string(e->kind)) : text::collapse_whitespace(e->text_desc));
        }
    }
    return t;
}

struct BuildOptions {
    // Concurrent element-description calls.
    std::size_t description_concurrency = 4;
};

struct BuildResult {
    DMap map;
    std::vector<PageSummary> summaries;
    std::vector<std::string> warnings;
};

/// Builds the document map: a sequential summarize fold over pages, then
/// element descriptions for uncaptioned elements.
inline BuildResult build_map(const DocBundle& bundle, llm::ChatBackend& backend, const BuildOptions& opts = {}) {
    BuildResult r;
    auto ps = to_pages(bundle);
    r.map.doc_id = bundle.doc_id;

    OutlineState state;
    for (std::size_t i = 0; i < ps.pages.size(); ++i) {
        auto& page = ps.pages[i];
        const Page* previous = i ? &ps.pages[i - 1] : nullptr;
        auto step = summarize_step(backend, state, previous, page, page.element_ids.size() > 1);
        r.warnings.insert(r.warnings.end(), step.warnings.begin(), step.warnings.end());
        state = std::move(step.state);
        page.summary = step.summary.sentence;
        page.notes = step.summary.element_notes;
        r.summaries.push_back(std::move(step.summary));
    }

    std::vector<Element*> undescribed;
    for (auto& [id, e] : ps.elements)
        if (e.kind != ElementKind::page_content && text::trim(e.text_desc).empty()) undescribed.push_back(&e);
    std::vector<std::string> describe_warnings(undescribed.size());
    detail::parallel_for(undescribed.size(), opts.description_concurrency, [&](std::size_t i) {
        Element& e = *undescribed[i];
        const Page& page = ps.pages.at(static_cast<std::size_t>(e.page_no - 1));
        auto req = prompts::render_prompt("element_describe", {{"kind", std::string(to_string(e.kind))},
                                                               {"page_number", std::to_string(e.page_no)},
                                                               {"page_text", page.text}});
        try {
            e.text_desc = detail::first_sentence(backend.chat(req), 400);
        } catch (const BackendError& err) {
            describe_warnings[i] = e.id + ": description failed: " + err.what();
        }
    });
    for (auto& w : describe_warnings)
        if (!w.empty()) r.warnings.push_back(std::move(w));

    r.map.sections = outline_to_sections(state, static_cast<int>(ps.pages.size()), &r.warnings);
    r.map.pages = std::move(ps.pages);
    r.map.elements = std::move(ps.elements);

    auto report = validate_map(r.map);
    if (!report.empty())
        throw Error("built map is invalid: " + report.front().code + " " + report.front().subject + ": " +
                    report.front().message);
    return r;
}

}  // namespace dmap

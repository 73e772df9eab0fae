#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "dmap/error.hpp"
#include "dmap/text.hpp"

namespace dmap {

enum class ElementKind { figure, table, chart, page_content };

inline std::string_view to_string(ElementKind k) {
    switch (k) {
        case ElementKind::figure: return "figure";
        case ElementKind::table: return "table";
        case ElementKind::chart: return "chart";
        case ElementKind::page_content: return "page_content";
    }
    return "figure";
}

inline std::optional<ElementKind> parse_element_kind(std::string_view s) {
    if (s == "figure") return ElementKind::figure;
    if (s == "table") return ElementKind::table;
    if (s == "chart") return ElementKind::chart;
    if (s == "page_content") return ElementKind::page_content;
    return std::nullopt;
}

/// Axis-aligned box in page pixel coordinates.
struct BBox {
    double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    bool operator==(const BBox&) const = default;
};

struct Element {
    std::string id;
    ElementKind kind = ElementKind::figure;
    int page_no = 1;
    std::optional<std::string> label;
    std::optional<std::string> caption;
    std::string text_desc;
    std::optional<std::string> image_ref;
    std::optional<BBox> bbox;

    bool operator==(const Element&) const = default;
};

/// One "Figure x: ..." / "Table x: ..." line reported alongside a page summary.
struct ElementNote {
    std::string name;
    std::string description;
    bool operator==(const ElementNote&) const = default;
};

struct Page {
    int number = 1;
    std::string text;
    std::string screenshot_ref;
    std::vector<std::string> element_ids;
    std::string summary;
    std::vector<ElementNote> notes;
    // Raster size in pixels; 0 when unknown.
    int width = 0;
    int height = 0;

    bool operator==(const Page&) const = default;
};

struct SectionNode {
    std::string number_path;
    std::string title;
    std::vector<int> pages;
    std::vector<SectionNode> children;

    bool operator==(const SectionNode&) const = default;
};

struct DMap {
    std::string doc_id;
    std::vector<SectionNode> sections;
    std::vector<Page> pages;
    std::map<std::string, Element> elements;

    bool operator==(const DMap&) const = default;

    const Page* page(int number) const {
        if (number >= 1 && number <= static_cast<int>(pages.size()) &&
            pages[number - 1].number == number)
            return &pages[number - 1];
        for (const auto& p : pages)
            if (p.number == number) return &p;
        return nullptr;
    }

    const Element* element(std::string_view id) const {
        auto it = elements.find(std::string(id));
        return it == elements.end() ? nullptr : &it->second;
    }
};

/// A location reference emitted by the locate agent.
struct LocationRef {
    enum class Kind { page, table, figure, not_mentioned };
    Kind kind = Kind::not_mentioned;
    int n = 0;

    static LocationRef page(int n) { return {Kind::page, n}; }
    static LocationRef table(int n) { return {Kind::table, n}; }
    static LocationRef figure(int n) { return {Kind::figure, n}; }
    static LocationRef not_mentioned() { return {}; }

    std::string display() const {
        switch (kind) {
            case Kind::page: return "Page " + std::to_string(n);
            case Kind::table: return "Table " + std::to_string(n);
            case Kind::figure: return "Figure " + std::to_string(n);
            case Kind::not_mentioned: break;
        }
        return "not mentioned";
    }

    bool operator==(const LocationRef&) const = default;
};

struct Violation {
    std::string code;
    std::string subject;
    std::string message;
};

using ValidationReport = std::vector<Violation>;

namespace detail {

inline bool strictly_increasing(const std::vector<int>& v) {
    return std::adjacent_find(v.begin(), v.end(), std::greater_equal<>{}) == v.end();
}

inline bool extends_by_one(std::string_view parent, std::string_view child) {
    if (child.size() <= parent.size() + 1) return false;
    if (child.substr(0, parent.size()) != parent || child[parent.size()] != '.') return false;
    return child.find('.', parent.size() + 1) == std::string_view::npos;
}

inline void validate_section(const SectionNode& s, const SectionNode* parent, int page_count,
                             ValidationReport& out) {
    if (parent && !extends_by_one(parent->number_path, s.number_path)) {
        out.push_back({"section_path", s.number_path,
                       "child path does not extend parent " + parent->number_path +
                           " by one component"});
    }
    if (!strictly_increasing(s.pages)) {
        out.push_back({"section_pages_unsorted", s.number_path,
                       "pages not sorted and deduplicated"});
    }
    for (int p : s.pages) {
        if (p < 1 || p > page_count)
            out.push_back({"section_page_out_of_range", s.number_path,
                           "page " + std::to_string(p) + " does not exist"});
    }
    if (parent) {
        for (int p : s.pages) {
            if (std::find(parent->pages.begin(), parent->pages.end(), p) == parent->pages.end()) {
                out.push_back({"child_pages_not_subset", s.number_path,
                               "child pages ⊄ parent pages (page " + std::to_string(p) +
                                   " missing from " + parent->number_path + ")"});
                break;
            }
        }
    }
    for (const auto& c : s.children) validate_section(c, &s, page_count, out);
}

}  // namespace detail

/// Checks every structural invariant of a map. Never throws; an empty report
/// means the map is well formed.
inline ValidationReport validate_map(const DMap& m) {
    ValidationReport out;
    const int n = static_cast<int>(m.pages.size());

    if (m.pages.empty()) out.push_back({"no_pages", m.doc_id, "document has no pages"});
    for (int i = 0; i < n; ++i) {
        if (m.pages[i].number != i + 1)
            out.push_back({"page_numbering", "page " + std::to_string(m.pages[i].number),
                           "expected page " + std::to_string(i + 1)});
    }

    for (const auto& [key, e] : m.elements) {
        if (key != e.id)
            out.push_back({"element_key_mismatch", key, "map key differs from element id " + e.id});
    }

    std::map<std::string, int> seen_on;
    for (const auto& page : m.pages) {
        const std::string subject = "page " + std::to_string(page.number);
        int content_count = 0;
        for (const auto& id : page.element_ids) {
            if (auto [it, fresh] = seen_on.emplace(id, page.number); !fresh) {
                out.push_back({"duplicate_element_id", id,
                               "listed on page " + std::to_string(it->second) + " and page " +
                                   std::to_string(page.number)});
                continue;
            }
            const Element* e = m.element(id);
            if (!e) {
                out.push_back({"dangling_element_ref", id, subject + " references a missing element"});
                continue;
            }
            if (e->page_no != page.number)
                out.push_back({"element_page_mismatch", id,
                               "element page_no " + std::to_string(e->page_no) + " but listed on " +
                                   subject});
            if (e->kind == ElementKind::page_content) ++content_count;
        }
        if (content_count != 1)
            out.push_back({"page_content_count", subject,
                           "expected exactly one page_content element, found " +
                               std::to_string(content_count)});
    }

    for (const auto& [id, e] : m.elements) {
        if (e.page_no < 1 || e.page_no > n)
            out.push_back({"element_page_out_of_range", id,
                           "page_no " + std::to_string(e.page_no) + " does not exist"});
        if (!seen_on.count(id))
            out.push_back({"orphan_element", id, "element is not listed on any page"});
        if (e.kind == ElementKind::page_content) {
            if (!e.image_ref || e.image_ref->empty())
                out.push_back({"page_content_missing_image", id, "page_content without screenshot"});
            if (e.bbox) out.push_back({"page_content_has_bbox", id, "page_content must not carry a bbox"});
        } else if (e.bbox) {
            const auto& b = *e.bbox;
            if (!(b.x0 < b.x1 && b.y0 < b.y1)) {
                out.push_back({"bbox_invalid", id, "bbox requires x0 < x1 and y0 < y1"});
            } else if (const Page* p = m.page(e.page_no)) {
                bool outside = b.x0 < 0 || b.y0 < 0 || (p->width > 0 && b.x1 > p->width) ||
                               (p->height > 0 && b.y1 > p->height);
                if (outside) out.push_back({"bbox_out_of_page", id, "bbox exceeds page bounds"});
            }
        }
    }

    if (m.sections.empty()) out.push_back({"no_sections", m.doc_id, "document has no sections"});
    std::set<int> covered;
    for (const auto& s : m.sections) {
        detail::validate_section(s, nullptr, n, out);
        covered.insert(s.pages.begin(), s.pages.end());
    }
    for (int p = 1; p <= n; ++p) {
        if (!covered.count(p))
            out.push_back({"page_uncovered", "page " + std::to_string(p),
                           "page is not covered by any root section"});
    }
    return out;
}

/// Case-insensitive, whitespace-collapsed label form used for matching.
inline std::string normalize_label(std::string_view label) {
    return text::to_lower(text::collapse_whitespace(label));
}

struct ResolveResult {
    std::vector<std::string> ids;
    // Set when a page reference points outside the document.
    bool out_of_range = false;
};

/// Element ids of a page, page_content first, then in page order.
inline std::vector<std::string> page_elements(const DMap& m, const Page& page) {
    std::vector<std::string> ids;
    for (const auto& id : page.element_ids) {
        const Element* e = m.element(id);
        if (e && e->kind == ElementKind::page_content) ids.push_back(id);
    }
    for (const auto& id : page.element_ids) {
        const Element* e = m.element(id);
        if (!e || e->kind != ElementKind::page_content) ids.push_back(id);
    }
    return ids;
}

inline ResolveResult resolve_location(const DMap& m, const LocationRef& loc) {
    ResolveResult r;
    switch (loc.kind) {
        case LocationRef::Kind::not_mentioned: return r;
        case LocationRef::Kind::page: {
            const Page* p = m.page(loc.n);
            if (!p) {
                r.out_of_range = true;
                return r;
            }
            r.ids = page_elements(m, *p);
            return r;
        }
        case LocationRef::Kind::table:
        case LocationRef::Kind::figure: {
            const std::string want = normalize_label(loc.display());
            for (const auto& page : m.pages) {
                for (const auto& id : page.element_ids) {
                    const Element* e = m.element(id);
                    if (e && e->label && normalize_label(*e->label) == want) r.ids.push_back(id);
                }
            }
            return r;
        }
    }
    return r;
}

struct ExpansionPolicy {
    std::set<std::string> seen;
};

namespace detail {

inline void deepest_section(const SectionNode& s, int page, int depth, const SectionNode*& best,
                            int& best_depth) {
    if (std::find(s.pages.begin(), s.pages.end(), page) == s.pages.end()) return;
    if (depth > best_depth) {
        best = &s;
        best_depth = depth;
    }
    for (const auto& c : s.children) deepest_section(c, page, depth + 1, best, best_depth);
}

}  // namespace detail

/// The deepest section whose page list contains `page`; the first in
/// document order wins among equally deep candidates.
inline const SectionNode* deepest_section_for_page(const DMap& m, int page) {
    const SectionNode* best = nullptr;
    int best_depth = -1;
    for (const auto& s : m.sections) detail::deepest_section(s, page, 0, best, best_depth);
    return best;
}

/// Hierarchy neighbours of `seed`, finest first: other elements on the seed's
/// page, page_content of the adjacent pages (previous, then next), then
/// page_content of the remaining pages of the seed page's deepest section.
/// Ids in `policy.seen`, the seed, and duplicates are excluded.
inline std::vector<std::string> neighborhood(const DMap& m, std::string_view seed,
                                             const ExpansionPolicy& policy = {}) {
    const Element* s = m.element(seed);
    if (!s) throw Error("neighborhood: unknown element id " + std::string(seed));

    std::vector<std::string> out;
    std::set<std::string> emitted;
    auto emit = [&](const std::string& id) {
        if (id == seed || policy.seen.count(id) || emitted.count(id)) return;
        emitted.insert(id);
        out.push_back(id);
    };
    auto emit_content = [&](int page_no) {
        const Page* p = m.page(page_no);
        if (!p) return;
        for (const auto& id : p->element_ids) {
            const Element* e = m.element(id);
            if (e && e->kind == ElementKind::page_content) emit(id);
        }
    };

    if (const Page* home = m.page(s->page_no)) {
        for (const auto& id : home->element_ids)
            if (m.element(id)) emit(id);
    }
    emit_content(s->page_no - 1);
    emit_content(s->page_no + 1);
    if (const SectionNode* sec = deepest_section_for_page(m, s->page_no)) {
        for (int p : sec->pages)
            if (p != s->page_no) emit_content(p);
    }
    return out;
}

}  // namespace dmap

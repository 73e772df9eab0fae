#pragma once

#include <string>
#include <string_view>

#include "json.hpp"

#include "dmap/doc_model.hpp"
#include "dmap/error.hpp"

namespace dmap {

using json = nlohmann::json;

namespace detail {

template <class T>
json optional_to_json(const std::optional<T>& v) {
    return v ? json(*v) : json(nullptr);
}

inline json to_json(const SectionNode& s) {
    json children = json::array();
    for (const auto& c : s.children) children.push_back(to_json(c));
    return {{"number", s.number_path}, {"title", s.title}, {"pages", s.pages}, {"children", children}};
}

/// Typed accessors over a parsed document that report the JSON pointer and an
/// approximate byte offset of the offending field.
class FieldReader {
public:
    explicit FieldReader(std::string_view bytes) : bytes_(bytes) {}

    [[noreturn]] void fail(const json::json_pointer& at, const std::string& what) const {
        throw ParseError(offset_of(at), at.to_string(), what);
    }

    const json& field(const json& obj, const json::json_pointer& at, const char* key) const {
        if (!obj.is_object()) fail(at, "expected object");
        auto it = obj.find(key);
        if (it == obj.end()) fail(at / key, "missing field");
        return *it;
    }

    std::string str(const json& obj, const json::json_pointer& at, const char* key) const {
        const auto& v = field(obj, at, key);
        if (!v.is_string()) fail(at / key, "expected string");
        return v.get<std::string>();
    }

    std::optional<std::string> opt_str(const json& obj, const json::json_pointer& at,
                                       const char* key) const {
        if (!obj.contains(key) || obj.at(key).is_null()) return std::nullopt;
        return str(obj, at, key);
    }

    int integer(const json& obj, const json::json_pointer& at, const char* key) const {
        const auto& v = field(obj, at, key);
        if (!v.is_number_integer()) fail(at / key, "expected integer");
        return v.get<int>();
    }

    const json& array(const json& obj, const json::json_pointer& at, const char* key) const {
        const auto& v = field(obj, at, key);
        if (!v.is_array()) fail(at / key, "expected array");
        return v;
    }

    std::vector<int> int_list(const json& obj, const json::json_pointer& at, const char* key) const {
        std::vector<int> out;
        const auto& a = array(obj, at, key);
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (!a[i].is_number_integer()) fail(at / key / i, "expected integer");
            out.push_back(a[i].get<int>());
        }
        return out;
    }

    std::size_t offset_of(const json::json_pointer& at) const {
        // Walk up to the nearest named component and locate its key.
        auto p = at;
        while (!p.empty()) {
            const auto& last = p.back();
            bool numeric = !last.empty() && last.find_first_not_of("0123456789") == std::string::npos;
            if (!numeric) {
                auto pos = bytes_.find("\"" + last + "\"");
                if (pos != std::string_view::npos) return pos;
            }
            p.pop_back();
        }
        return 0;
    }

private:
    std::string_view bytes_;
};

inline SectionNode section_from_json(const FieldReader& r, const json& j,
                                     const json::json_pointer& at) {
    SectionNode s;
    s.number_path = r.str(j, at, "number");
    s.title = r.str(j, at, "title");
    s.pages = r.int_list(j, at, "pages");
    const auto& children = r.array(j, at, "children");
    for (std::size_t i = 0; i < children.size(); ++i)
        s.children.push_back(section_from_json(r, children[i], at / "children" / i));
    return s;
}

}  // namespace detail

inline json to_json(const Element& e) {
    json bbox = nullptr;
    if (e.bbox) bbox = json::array({e.bbox->x0, e.bbox->y0, e.bbox->x1, e.bbox->y1});
    return {{"id", e.id},
            {"kind", std::string(to_string(e.kind))},
            {"page_no", e.page_no},
            {"label", detail::optional_to_json(e.label)},
            {"caption", detail::optional_to_json(e.caption)},
            {"text_desc", e.text_desc},
            {"image", detail::optional_to_json(e.image_ref)},
            {"bbox", bbox}};
}

inline json to_json(const DMap& m) {
    json sections = json::array();
    for (const auto& s : m.sections) sections.push_back(detail::to_json(s));
    json pages = json::array();
    for (const auto& p : m.pages) {
        json notes = json::array();
        for (const auto& n : p.notes) notes.push_back({{"name", n.name}, {"description", n.description}});
        pages.push_back({{"number", p.number},
                         {"text", p.text},
                         {"screenshot", p.screenshot_ref},
                         {"element_ids", p.element_ids},
                         {"summary", p.summary},
                         {"notes", notes},
                         {"width", p.width},
                         {"height", p.height}});
    }
    json elements = json::object();
    for (const auto& [id, e] : m.elements) elements[id] = to_json(e);
    return {{"doc_id", m.doc_id}, {"sections", sections}, {"pages", pages}, {"elements", elements}};
}

/// Canonical `dmap.json` bytes: sorted keys, two-space indent, trailing newline.
inline std::string serialize_map(const DMap& m) { return to_json(m).dump(2) + "\n"; }

inline DMap deserialize_map(std::string_view bytes) {
    json root;
    try {
        root = json::parse(bytes.begin(), bytes.end());
    } catch (const json::parse_error& e) {
        throw ParseError(e.byte, "", e.what());
    }
    detail::FieldReader r(bytes);
    const json::json_pointer top;
    DMap m;
    m.doc_id = r.str(root, top, "doc_id");

    const auto& sections = r.array(root, top, "sections");
    for (std::size_t i = 0; i < sections.size(); ++i)
        m.sections.push_back(detail::section_from_json(r, sections[i], top / "sections" / i));

    const auto& pages = r.array(root, top, "pages");
    for (std::size_t i = 0; i < pages.size(); ++i) {
        const auto at = top / "pages" / i;
        const auto& pj = pages[i];
        Page p;
        p.number = r.integer(pj, at, "number");
        p.text = r.str(pj, at, "text");
        p.screenshot_ref = r.str(pj, at, "screenshot");
        const auto& ids = r.array(pj, at, "element_ids");
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (!ids[k].is_string()) r.fail(at / "element_ids" / k, "expected string");
            p.element_ids.push_back(ids[k].get<std::string>());
        }
        p.summary = r.str(pj, at, "summary");
        const auto& notes = r.array(pj, at, "notes");
        for (std::size_t k = 0; k < notes.size(); ++k) {
            const auto nat = at / "notes" / k;
            p.notes.push_back({r.str(notes[k], nat, "name"), r.str(notes[k], nat, "description")});
        }
        p.width = r.integer(pj, at, "width");
        p.height = r.integer(pj, at, "height");
        m.pages.push_back(std::move(p));
    }

    const auto& elements = r.field(root, top, "elements");
    if (!elements.is_object()) r.fail(top / "elements", "expected object");
    for (const auto& [key, ej] : elements.items()) {
        const auto at = top / "elements" / key;
        Element e;
        e.id = r.str(ej, at, "id");
        auto kind = parse_element_kind(r.str(ej, at, "kind"));
        if (!kind) r.fail(at / "kind", "unknown element kind");
        e.kind = *kind;
        e.page_no = r.integer(ej, at, "page_no");
        e.label = r.opt_str(ej, at, "label");
        e.caption = r.opt_str(ej, at, "caption");
        e.text_desc = r.str(ej, at, "text_desc");
        e.image_ref = r.opt_str(ej, at, "image");
        if (ej.contains("bbox") && !ej.at("bbox").is_null()) {
            const auto& b = ej.at("bbox");
            if (!b.is_array() || b.size() != 4) r.fail(at / "bbox", "expected [x0,y0,x1,y1]");
            for (const auto& v : b)
                if (!v.is_number()) r.fail(at / "bbox", "expected numbers");
            e.bbox = BBox{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
        }
        m.elements.emplace(key, std::move(e));
    }
    return m;
}

}  // namespace dmap

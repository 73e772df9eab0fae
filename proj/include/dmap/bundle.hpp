#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "dmap/doc_model.hpp"
#include "dmap/error.hpp"

namespace dmap {

namespace fs = std::filesystem;

struct RawElement {
    ElementKind kind = ElementKind::figure;
    std::optional<std::string> label;
    std::optional<std::string> caption;
    std::optional<BBox> bbox;
    std::string image;

    bool operator==(const RawElement&) const = default;
};

struct RawPage {
    int number = 1;
    std::string text;
    std::string screenshot;
    std::vector<RawElement> extracted;
    // Optional raster size; sniffed from PNG screenshots when absent.
    int width = 0;
    int height = 0;

    bool operator==(const RawPage&) const = default;
};

struct DocBundle {
    std::string doc_id;
    std::vector<RawPage> pages;
    fs::path root_dir;

    bool operator==(const DocBundle& o) const { return doc_id == o.doc_id && pages == o.pages; }
};

class BundleError : public Error {
public:
    enum class Code {
        missing_manifest,
        malformed_manifest,
        missing_image,
        non_contiguous_pages,
        bbox_outside_page,
    };

    BundleError(Code code, int page, const std::string& what)
        : Error(what), code_(code), page_(page) {}

    Code code() const noexcept { return code_; }
    /// Offending page number, 0 when not page-specific.
    int page() const noexcept { return page_; }

private:
    Code code_;
    int page_;
};

/// Reads the pixel size from a PNG header; nullopt for anything else.
inline std::optional<std::pair<int, int>> png_dimensions(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    std::array<unsigned char, 24> h{};
    if (!in.read(reinterpret_cast<char*>(h.data()), h.size())) return std::nullopt;
    static constexpr unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    if (!std::equal(std::begin(sig), std::end(sig), h.begin())) return std::nullopt;
    if (h[12] != 'I' || h[13] != 'H' || h[14] != 'D' || h[15] != 'R') return std::nullopt;
    auto be32 = [&](int at) {
        return static_cast<int>((uint32_t(h[at]) << 24) | (uint32_t(h[at + 1]) << 16) |
                                (uint32_t(h[at + 2]) << 8) | uint32_t(h[at + 3]));
    };
    return std::pair{be32(16), be32(20)};
}

inline std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const fs::path& p, std::string_view bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + p.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

namespace detail {

inline BundleError malformed(int page, const std::string& what) {
    return BundleError(BundleError::Code::malformed_manifest, page, "bundle.json: " + what);
}

inline std::optional<std::string> opt_string(const nlohmann::json& j, const char* key, int page) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    if (!j.at(key).is_string()) throw malformed(page, std::string("field '") + key + "' must be a string");
    return j.at(key).get<std::string>();
}

inline std::string req_string(const nlohmann::json& j, const char* key, int page) {
    auto v = opt_string(j, key, page);
    if (!v) throw malformed(page, std::string("missing string field '") + key + "'");
    return *v;
}

}  // namespace detail

/// Parses and validates a bundle manifest. Image existence is checked against
/// `root_dir`.
inline DocBundle parse_bundle(std::string_view manifest, const fs::path& root_dir) {
    using nlohmann::json;
    json j;
    try {
        j = json::parse(manifest.begin(), manifest.end());
    } catch (const json::parse_error& e) {
        throw detail::malformed(0, e.what());
    }
    if (!j.is_object()) throw detail::malformed(0, "top level must be an object");

    DocBundle b;
    b.root_dir = root_dir;
    b.doc_id = detail::req_string(j, "doc_id", 0);
    if (!j.contains("pages") || !j["pages"].is_array() || j["pages"].empty())
        throw detail::malformed(0, "'pages' must be a non-empty array");

    for (const auto& pj : j["pages"]) {
        if (!pj.is_object() || !pj.contains("number") || !pj["number"].is_number_integer())
            throw detail::malformed(0, "every page needs an integer 'number'");
        RawPage p;
        p.number = pj["number"].get<int>();
        const int expected = static_cast<int>(b.pages.size()) + 1;
        if (p.number != expected) {
            throw BundleError(BundleError::Code::non_contiguous_pages, expected,
                              "pages are not contiguous: page " + std::to_string(expected) +
                                  " is missing (found page " + std::to_string(p.number) + ")");
        }
        p.text = pj.contains("text") && !pj["text"].is_null() ? detail::req_string(pj, "text", p.number) : "";
        p.screenshot = detail::req_string(pj, "screenshot", p.number);
        if (pj.contains("width") && pj["width"].is_number_integer()) p.width = pj["width"].get<int>();
        if (pj.contains("height") && pj["height"].is_number_integer()) p.height = pj["height"].get<int>();

        const auto shot = root_dir / p.screenshot;
        if (!fs::is_regular_file(shot)) {
            throw BundleError(BundleError::Code::missing_image, p.number,
                              "page " + std::to_string(p.number) + ": screenshot not found: " + p.screenshot);
        }
        if (p.width == 0 || p.height == 0) {
            if (auto dims = png_dimensions(shot)) std::tie(p.width, p.height) = *dims;
        }

        if (pj.contains("extracted")) {
            if (!pj["extracted"].is_array()) throw detail::malformed(p.number, "'extracted' must be an array");
            int index = 0;
            for (const auto& ej : pj["extracted"]) {
                ++index;
                const std::string where =
                    "page " + std::to_string(p.number) + " element " + std::to_string(index);
                if (!ej.is_object()) throw detail::malformed(p.number, where + " must be an object");
                RawElement e;
                auto kind = parse_element_kind(detail::req_string(ej, "kind", p.number));
                if (!kind || *kind == ElementKind::page_content)
                    throw detail::malformed(p.number, where + ": kind must be figure, table, or chart");
                e.kind = *kind;
                e.label = detail::opt_string(ej, "label", p.number);
                e.caption = detail::opt_string(ej, "caption", p.number);
                e.image = detail::req_string(ej, "image", p.number);
                if (ej.contains("bbox") && !ej["bbox"].is_null()) {
                    const auto& bj = ej["bbox"];
                    if (!bj.is_array() || bj.size() != 4 ||
                        !std::all_of(bj.begin(), bj.end(), [](const json& v) { return v.is_number(); }))
                        throw detail::malformed(p.number, where + ": bbox must be [x0,y0,x1,y1]");
                    BBox box{bj[0].get<double>(), bj[1].get<double>(), bj[2].get<double>(), bj[3].get<double>()};
                    bool ok = box.x0 < box.x1 && box.y0 < box.y1 && box.x0 >= 0 && box.y0 >= 0 &&
                              (p.width == 0 || box.x1 <= p.width) && (p.height == 0 || box.y1 <= p.height);
                    if (!ok) {
                        throw BundleError(BundleError::Code::bbox_outside_page, p.number,
                                          where + ": bbox outside page bounds");
                    }
                    e.bbox = box;
                }
                if (!fs::is_regular_file(root_dir / e.image)) {
                    throw BundleError(BundleError::Code::missing_image, p.number,
                                      where + ": image not found: " + e.image);
                }
                p.extracted.push_back(std::move(e));
            }
        }
        b.pages.push_back(std::move(p));
    }
    return b;
}

inline DocBundle load_bundle(const fs::path& dir) {
    const auto manifest = dir / "bundle.json";
    if (!fs::is_regular_file(manifest))
        throw BundleError(BundleError::Code::missing_manifest, 0, "missing manifest: " + manifest.string());
    return parse_bundle(read_file(manifest), dir);
}

inline nlohmann::json bundle_to_json(const DocBundle& b) {
    using nlohmann::json;
    json pages = json::array();
    for (const auto& p : b.pages) {
        json extracted = json::array();
        for (const auto& e : p.extracted) {
            json ej = {{"kind", std::string(to_string(e.kind))}, {"image", e.image}};
            if (e.label) ej["label"] = *e.label;
            if (e.caption) ej["caption"] = *e.caption;
            if (e.bbox) ej["bbox"] = {e.bbox->x0, e.bbox->y0, e.bbox->x1, e.bbox->y1};
            extracted.push_back(std::move(ej));
        }
        json pj = {{"number", p.number}, {"text", p.text}, {"screenshot", p.screenshot}, {"extracted", extracted}};
        if (p.width) pj["width"] = p.width;
        if (p.height) pj["height"] = p.height;
        pages.push_back(std::move(pj));
    }
    return {{"doc_id", b.doc_id}, {"pages", pages}};
}

/// Writes `bundle.json` into `dir`. Referenced images are expected to be there already.
inline void write_bundle(const DocBundle& b, const fs::path& dir) {
    write_file(dir / "bundle.json", bundle_to_json(b).dump(2) + "\n");
}

struct PageSet {
    std::vector<Page> pages;
    std::map<std::string, Element> elements;
};

inline std::string content_id(int page) { return "p" + std::to_string(page) + "-content"; }
inline std::string element_id(int page, int index) {
    return "p" + std::to_string(page) + "-e" + std::to_string(index);
}

/// Turns raw pages into map pages and elements. Every page gets a synthetic
/// page_content element listed first; extracted elements keep their order and
/// are numbered from 1.
inline PageSet to_pages(const DocBundle& b) {
    PageSet out;
    for (const auto& rp : b.pages) {
        Page page;
        page.number = rp.number;
        page.text = rp.text;
        page.screenshot_ref = rp.screenshot;
        page.width = rp.width;
        page.height = rp.height;

        Element content;
        content.id = content_id(rp.number);
        content.kind = ElementKind::page_content;
        content.page_no = rp.number;
        content.text_desc = rp.text;
        content.image_ref = rp.screenshot;
        page.element_ids.push_back(content.id);
        out.elements.emplace(content.id, std::move(content));

        int index = 0;
        for (const auto& re : rp.extracted) {
            Element e;
            e.id = element_id(rp.number, ++index);
            e.kind = re.kind;
            e.page_no = rp.number;
            e.label = re.label;
            e.caption = re.caption;
            e.text_desc = re.caption.value_or("");
            e.image_ref = re.image;
            e.bbox = re.bbox;
            page.element_ids.push_back(e.id);
            out.elements.emplace(e.id, std::move(e));
        }
        out.pages.push_back(std::move(page));
    }
    return out;
}

}  // namespace dmap

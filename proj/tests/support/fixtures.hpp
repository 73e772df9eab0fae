#pragma once

// Test-only generators and scripted backends. Nothing here calls into the
// code under test except for plain data types, so these can serve as oracles.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <unistd.h>

#include "dmap/bundle.hpp"
#include "dmap/doc_model.hpp"
#include "dmap/llm.hpp"

namespace fixtures {

namespace fs = std::filesystem;
using Rng = std::mt19937_64;

inline int uniform(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
inline bool coin(Rng& rng, double p = 0.5) { return std::bernoulli_distribution(p)(rng); }

/// A scratch directory removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = fs::temp_directory_path() /
                ("dmap-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& rel) const { return path_ / rel; }

private:
    fs::path path_;
};

inline void write_bytes(const fs::path& p, const std::string& bytes) {
    fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    out << bytes;
}

inline std::string read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// PNG signature plus an IHDR chunk for a width x height image; `salt` is
/// appended so distinct images hash differently. Enough for header sniffing.
inline std::string png_header(std::uint32_t width, std::uint32_t height, const std::string& salt = {}) {
    std::string s = "\x89PNG\r\n\x1a\n";
    auto be32 = [&](std::uint32_t v) {
        for (int shift = 24; shift >= 0; shift -= 8) s.push_back(static_cast<char>((v >> shift) & 0xff));
    };
    be32(13);
    s += "IHDR";
    be32(width);
    be32(height);
    s += std::string("\x08\x02\x00\x00\x00", 5);
    be32(0);
    s += salt;
    return s;
}

// ---------------------------------------------------------------------------
// Random valid maps, constructed directly from the invariants.

struct MapShape {
    int min_pages = 1;
    int max_pages = 8;
    int max_elements = 4;
};

/// A valid DMap: contiguous pages, one page_content per page, extracted
/// elements with in-bounds boxes, and a section tree whose pages propagate
/// upward and cover every page.
inline dmap::DMap random_map(std::uint64_t seed, const MapShape& shape = {}) {
    using namespace dmap;
    Rng rng(seed);
    DMap m;
    m.doc_id = "doc-" + std::to_string(seed);
    const int n = uniform(rng, shape.min_pages, shape.max_pages);
    int figures = 0, tables = 0;
    for (int p = 1; p <= n; ++p) {
        Page page;
        page.number = p;
        page.text = coin(rng, 0.85) ? "Text of page " + std::to_string(p) + " with token t" + std::to_string(uniform(rng, 0, 9)) : "";
        page.screenshot_ref = "images/page" + std::to_string(p) + ".png";
        page.width = 100;
        page.height = 140;
        page.summary = page.text.empty() ? "no content" : "Summary of page " + std::to_string(p) + ".";
        Element content;
        content.id = "p" + std::to_string(p) + "-content";
        content.kind = ElementKind::page_content;
        content.page_no = p;
        content.text_desc = page.text;
        content.image_ref = page.screenshot_ref;
        page.element_ids.push_back(content.id);
        m.elements[content.id] = content;
        const int k = uniform(rng, 0, shape.max_elements);
        for (int i = 1; i <= k; ++i) {
            Element e;
            e.id = "p" + std::to_string(p) + "-e" + std::to_string(i);
            e.kind = static_cast<ElementKind>(uniform(rng, 0, 2));
            e.page_no = p;
            if (coin(rng, 0.7)) {
                e.label = e.kind == ElementKind::table ? "Table " + std::to_string(++tables)
                                                       : "Figure " + std::to_string(++figures);
                if (coin(rng, 0.2)) e.label = "  " + *e.label + " ";  // unnormalized spacing
            }
            if (coin(rng, 0.6)) e.caption = "Caption " + std::to_string(uniform(rng, 0, 99));
            e.text_desc = e.caption ? *e.caption : (coin(rng) ? "A chart of values." : "");
            e.image_ref = "images/" + e.id + ".png";
            if (coin(rng, 0.8)) {
                double x0 = uniform(rng, 0, 50), y0 = uniform(rng, 0, 70);
                e.bbox = BBox{x0, y0, x0 + uniform(rng, 1, 50), y0 + uniform(rng, 1, 70)};
            }
            page.element_ids.push_back(e.id);
            m.elements[e.id] = e;
            if (coin(rng, 0.3)) page.notes.push_back({e.label.value_or("Figure x"), "note " + std::to_string(i)});
        }
        m.pages.push_back(std::move(page));
    }

    // Split 1..n into contiguous runs, one per leaf; then nest leaves under roots.
    std::vector<int> cuts = {1};
    for (int p = 2; p <= n; ++p)
        if (coin(rng, 0.4)) cuts.push_back(p);
    cuts.push_back(n + 1);
    std::vector<std::vector<int>> runs;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        std::vector<int> run;
        for (int p = cuts[i]; p < cuts[i + 1]; ++p) run.push_back(p);
        runs.push_back(run);
    }
    int root_no = 0;
    std::size_t r = 0;
    if (coin(rng, 0.2)) {
        m.sections.push_back({"0", "Document", runs[r++], {}});
    }
    while (r < runs.size()) {
        SectionNode root{std::to_string(++root_no), "Section " + std::to_string(root_no), {}, {}};
        const int kids = uniform(rng, 0, 3);
        if (kids == 0) {
            root.pages = runs[r++];
        } else {
            for (int c = 1; c <= kids && r < runs.size(); ++c) {
                SectionNode child{root.number_path + "." + std::to_string(c), "Sub " + std::to_string(c), runs[r++], {}};
                if (coin(rng, 0.3) && child.pages.size() > 1) {
                    SectionNode grand{child.number_path + ".1", "Detail", {child.pages.back()}, {}};
                    child.children.push_back(grand);
                }
                root.pages.insert(root.pages.end(), child.pages.begin(), child.pages.end());
                root.children.push_back(std::move(child));
            }
        }
        m.sections.push_back(std::move(root));
    }
    return m;
}

// ---------------------------------------------------------------------------
// Random bundles and a scripted, protocol-compliant summarize agent.

struct PlannedHeading {
    std::string number;
    std::string title;
};

struct BundlePlan {
    dmap::DocBundle bundle;
    // Headings introduced on each page (index = page - 1).
    std::vector<std::vector<PlannedHeading>> headings;
    // Whether text precedes the first heading on each page.
    std::vector<bool> lead_text;
};

/// In-memory bundle with 1..max_pages pages and 0..max_elements extracted
/// elements per page. Page text carries the planned headings.
inline BundlePlan random_bundle(std::uint64_t seed, int max_pages = 12, int max_elements = 5) {
    Rng rng(seed);
    BundlePlan plan;
    plan.bundle.doc_id = "bundle-" + std::to_string(seed);
    const int n = uniform(rng, 1, max_pages);
    int top = 0, sub = 0;
    for (int p = 1; p <= n; ++p) {
        dmap::RawPage page;
        page.number = p;
        page.screenshot = "images/page" + std::to_string(p) + ".png";
        page.width = 200;
        page.height = 300;
        std::vector<PlannedHeading> hs;
        bool lead = coin(rng, 0.5);
        if (coin(rng, 0.45)) {
            if (top > 0 && coin(rng, 0.4)) {
                ++sub;
                hs.push_back({std::to_string(top) + "." + std::to_string(sub), "Part " + std::to_string(sub)});
            } else {
                ++top;
                sub = 0;
                hs.push_back({std::to_string(top), "Chapter " + std::to_string(top)});
            }
        }
        std::string text;
        if (hs.empty()) lead = coin(rng, 0.8);
        if (lead) text += "Body text on page " + std::to_string(p) + ".\n";
        for (const auto& h : hs) text += h.number + " " + h.title + "\nMore text.\n";
        page.text = text;
        const int k = uniform(rng, 0, max_elements);
        for (int i = 0; i < k; ++i) {
            dmap::RawElement e;
            e.kind = static_cast<dmap::ElementKind>(uniform(rng, 0, 2));
            if (coin(rng)) e.label = (e.kind == dmap::ElementKind::table ? "Table " : "Figure ") + std::to_string(i + 1);
            if (coin(rng)) e.caption = "Caption for element " + std::to_string(i + 1);
            e.image = "images/p" + std::to_string(p) + "-x" + std::to_string(i) + ".png";
            if (coin(rng)) e.bbox = dmap::BBox{10, 10, 100, 120};
            page.extracted.push_back(e);
        }
        plan.headings.push_back(hs);
        plan.lead_text.push_back(lead || hs.empty());
        plan.bundle.pages.push_back(std::move(page));
    }
    return plan;
}

/// Writes placeholder images for every path a bundle references.
inline void materialize_images(const dmap::DocBundle& b, const fs::path& root) {
    for (const auto& p : b.pages) {
        write_bytes(root / p.screenshot, png_header(static_cast<std::uint32_t>(p.width ? p.width : 200),
                                                    static_cast<std::uint32_t>(p.height ? p.height : 300),
                                                    p.screenshot));
        for (const auto& e : p.extracted) write_bytes(root / e.image, png_header(20, 20, e.image));
    }
}

/// Summarize agent that follows the prompt protocol from a precomputed
/// heading plan: it keeps every prior section, adds new headings, and files
/// continuation text under the section open before the page. With
/// `flaky` set, some first answers drop a section so the repair path runs.
class ScriptedSummarizer {
public:
    explicit ScriptedSummarizer(const BundlePlan& plan, bool flaky = false, std::uint64_t seed = 0)
        : plan_(plan), flaky_(flaky), rng_(seed) {}

    std::string operator()(const dmap::llm::ChatRequest& r) {
        if (r.template_id == "element_describe") return "An element.";
        const int page = std::stoi(r.vars.at("page_number"));
        if (r.template_id == "summarize_agent") advance(page);
        const bool drop = flaky_ && r.template_id == "summarize_agent" && entries_.size() > 1 && coin(rng_, 0.3);
        std::string out = "Outline:\n";
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            if (drop && i == 0) continue;
            const auto& e = entries_[i];
            out += e.number + ":" + e.title + " < > ";
            bool first = true;
            for (int p : e.pages) {
                out += (first ? "" : ",") + std::to_string(p);
                first = false;
            }
            out += "\n";
        }
        out += "\nCurrent page summary:\nPage " + std::to_string(page) + ": Summary of page " + std::to_string(page) + ".\n";
        return out;
    }

    struct Entry {
        std::string number;
        std::string title;
        std::set<int> pages;
    };
    const std::vector<Entry>& entries() const { return entries_; }

private:
    void add(const std::string& number, int page) {
        for (auto& e : entries_) {
            bool ancestor = number == e.number ||
                            (number.size() > e.number.size() && number.compare(0, e.number.size(), e.number) == 0 &&
                             number[e.number.size()] == '.');
            if (ancestor) e.pages.insert(page);
        }
    }

    void advance(int page) {
        if (page <= done_) return;  // repeated call for the same page
        done_ = page;
        const auto& hs = plan_.headings[static_cast<std::size_t>(page - 1)];
        const std::string open = entries_.empty() ? std::string{} : entries_.back().number;
        if (plan_.lead_text[static_cast<std::size_t>(page - 1)]) {
            if (open.empty() && hs.empty()) entries_.push_back({"0", "Document", {}});
            if (!entries_.empty()) add(open.empty() ? entries_.back().number : open, page);
        }
        for (const auto& h : hs) {
            entries_.push_back({h.number, h.title, {}});
            add(h.number, page);
        }
    }

    const BundlePlan& plan_;
    bool flaky_;
    Rng rng_;
    int done_ = 0;
    std::vector<Entry> entries_;
};

// A small hand-built map.

/// Three pages; page 2 holds "Table 1", page 3 holds "Figure 1" and an
/// unlabeled figure.
inline dmap::DMap small_map() {
    dmap::DMap m;
    m.doc_id = "small";
    auto add_page = [&](int n, std::vector<dmap::Element> extra) {
        dmap::Page p;
        p.number = n;
        p.text = "Text of page " + std::to_string(n);
        p.screenshot_ref = "p" + std::to_string(n) + ".png";
        p.summary = "s";
        dmap::Element c;
        c.id = "p" + std::to_string(n) + "-content";
        c.kind = dmap::ElementKind::page_content;
        c.page_no = n;
        c.text_desc = p.text;
        c.image_ref = p.screenshot_ref;
        p.element_ids.push_back(c.id);
        m.elements[c.id] = c;
        for (auto& e : extra) {
            e.page_no = n;
            p.element_ids.push_back(e.id);
            m.elements[e.id] = e;
        }
        m.pages.push_back(p);
    };
    dmap::Element table;
    table.id = "p2-e1";
    table.kind = dmap::ElementKind::table;
    table.label = "Table 1";
    table.text_desc = "Revenue by region";
    table.image_ref = "t.png";
    dmap::Element chart;
    chart.id = "p3-e1";
    chart.kind = dmap::ElementKind::chart;
    chart.label = "Figure 1";
    chart.text_desc = "Trend";
    chart.image_ref = "c.png";
    dmap::Element fig;
    fig.id = "p3-e2";
    fig.kind = dmap::ElementKind::figure;
    fig.text_desc = "A photo";
    fig.image_ref = "f.png";
    add_page(1, {});
    add_page(2, {table});
    add_page(3, {chart, fig});
    m.sections.push_back({"1", "All", {1, 2, 3}, {}});
    return m;
}

}  // namespace fixtures

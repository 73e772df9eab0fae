#include <gtest/gtest.h>

#include "dmap/bundle.hpp"
#include "../support/fixtures.hpp"

using namespace dmap;
using fixtures::TempDir;

namespace {

void write_manifest(const TempDir& dir, const nlohmann::json& j) {
    fixtures::write_bytes(dir / "bundle.json", j.dump(2));
}

nlohmann::json page_json(int number, const std::string& text = "text") {
    return {{"number", number}, {"text", text}, {"screenshot", "p" + std::to_string(number) + ".png"}};
}

void add_images(const TempDir& dir, int pages) {
    for (int p = 1; p <= pages; ++p)
        fixtures::write_bytes(dir / ("p" + std::to_string(p) + ".png"), fixtures::png_header(100, 200));
}

BundleError::Code load_error(const TempDir& dir, int* page = nullptr, std::string* what = nullptr) {
    try {
        load_bundle(dir.path());
    } catch (const BundleError& e) {
        if (page) *page = e.page();
        if (what) *what = e.what();
        return e.code();
    }
    ADD_FAILURE() << "expected BundleError";
    return BundleError::Code::malformed_manifest;
}

}  // namespace

TEST(Bundle, SinglePageScreenshotOnly) {
    TempDir dir;
    add_images(dir, 1);
    write_manifest(dir, {{"doc_id", "d"}, {"pages", {page_json(1)}}});
    auto b = load_bundle(dir.path());
    ASSERT_EQ(b.pages.size(), 1u);
    EXPECT_TRUE(b.pages[0].extracted.empty());
    EXPECT_EQ(b.pages[0].width, 100);
    EXPECT_EQ(b.pages[0].height, 200);
}

TEST(Bundle, NonContiguousPagesNameTheMissingPage) {
    TempDir dir;
    add_images(dir, 3);
    write_manifest(dir, {{"doc_id", "d"}, {"pages", {page_json(1), page_json(3)}}});
    int page = 0;
    std::string what;
    EXPECT_EQ(load_error(dir, &page, &what), BundleError::Code::non_contiguous_pages);
    EXPECT_EQ(page, 2);
    EXPECT_NE(what.find("page 2"), std::string::npos);
}

TEST(Bundle, DistinctErrors) {
    {
        TempDir dir;
        EXPECT_EQ(load_error(dir), BundleError::Code::missing_manifest);
    }
    {
        TempDir dir;
        fixtures::write_bytes(dir / "bundle.json", "{not json");
        EXPECT_EQ(load_error(dir), BundleError::Code::malformed_manifest);
    }
    {
        TempDir dir;
        write_manifest(dir, {{"doc_id", "d"}, {"pages", {page_json(1)}}});
        int page = 0;
        EXPECT_EQ(load_error(dir, &page), BundleError::Code::missing_image);
        EXPECT_EQ(page, 1);
    }
    {
        TempDir dir;
        add_images(dir, 2);
        auto p2 = page_json(2);
        p2["extracted"] = {{{"kind", "figure"}, {"image", "crop.png"}}};
        write_manifest(dir, {{"doc_id", "d"}, {"pages", {page_json(1), p2}}});
        int page = 0;
        std::string what;
        EXPECT_EQ(load_error(dir, &page, &what), BundleError::Code::missing_image);
        EXPECT_EQ(page, 2);
        EXPECT_NE(what.find("element 1"), std::string::npos);
    }
    {
        TempDir dir;
        add_images(dir, 1);
        fixtures::write_bytes(dir / "crop.png", "x");
        auto p1 = page_json(1);
        p1["extracted"] = {{{"kind", "table"}, {"image", "crop.png"}, {"bbox", {10, 10, 150, 50}}}};
        write_manifest(dir, {{"doc_id", "d"}, {"pages", {p1}}});
        int page = 0;
        EXPECT_EQ(load_error(dir, &page), BundleError::Code::bbox_outside_page);  // PNG is 100 wide
        EXPECT_EQ(page, 1);
    }
    {
        TempDir dir;
        add_images(dir, 1);
        fixtures::write_bytes(dir / "crop.png", "x");
        auto p1 = page_json(1);
        p1["extracted"] = {{{"kind", "equation"}, {"image", "crop.png"}}};
        write_manifest(dir, {{"doc_id", "d"}, {"pages", {p1}}});
        EXPECT_EQ(load_error(dir), BundleError::Code::malformed_manifest);
    }
}

TEST(Bundle, ExplicitPageSizeOverridesSniffing) {
    TempDir dir;
    add_images(dir, 1);
    fixtures::write_bytes(dir / "crop.png", "x");
    auto p1 = page_json(1);
    p1["width"] = 400;
    p1["height"] = 400;
    p1["extracted"] = {{{"kind", "table"}, {"image", "crop.png"}, {"bbox", {10, 10, 150, 50}}}};
    write_manifest(dir, {{"doc_id", "d"}, {"pages", {p1}}});
    EXPECT_NO_THROW(load_bundle(dir.path()));
}

TEST(Bundle, PngDimensions) {
    TempDir dir;
    fixtures::write_bytes(dir / "a.png", fixtures::png_header(640, 480));
    fixtures::write_bytes(dir / "b.png", "GIF89a....................");
    EXPECT_EQ(png_dimensions(dir / "a.png"), std::make_pair(640, 480));
    EXPECT_FALSE(png_dimensions(dir / "b.png"));
}

TEST(Bundle, RandomBundlesRoundTrip) {
    for (std::uint64_t seed = 1; seed <= 30; ++seed) {
        TempDir dir;
        auto plan = fixtures::random_bundle(seed);
        fixtures::materialize_images(plan.bundle, dir.path());
        write_bundle(plan.bundle, dir.path());
        auto first = load_bundle(dir.path());
        EXPECT_EQ(first, plan.bundle) << "seed " << seed;
        auto bytes = fixtures::read_bytes(dir / "bundle.json");
        write_bundle(first, dir.path());
        EXPECT_EQ(fixtures::read_bytes(dir / "bundle.json"), bytes);
        EXPECT_EQ(load_bundle(dir.path()), first);
    }
}

TEST(ToPages, PageContentFirstThenExtracted) {
    DocBundle b;
    b.doc_id = "d";
    RawPage p;
    p.number = 1;
    p.text = "Hello";
    p.screenshot = "p1.png";
    p.extracted = {{ElementKind::figure, "Figure 1", std::nullopt, std::nullopt, "a.png"},
                   {ElementKind::figure, std::nullopt, std::string("cap"), std::nullopt, "b.png"}};
    b.pages.push_back(p);
    auto ps = to_pages(b);
    ASSERT_EQ(ps.elements.size(), 3u);
    EXPECT_EQ(ps.pages[0].element_ids, (std::vector<std::string>{"p1-content", "p1-e1", "p1-e2"}));
    EXPECT_EQ(ps.elements.at("p1-content").kind, ElementKind::page_content);
    EXPECT_EQ(ps.elements.at("p1-content").image_ref, "p1.png");
    EXPECT_EQ(ps.elements.at("p1-e2").text_desc, "cap");
}

TEST(ToPages, EmptyTextPageStillHasPageContent) {
    DocBundle b;
    RawPage p;
    p.number = 1;
    p.screenshot = "p1.png";
    b.pages.push_back(p);
    auto ps = to_pages(b);
    ASSERT_EQ(ps.elements.count("p1-content"), 1u);
    EXPECT_EQ(ps.elements.at("p1-content").text_desc, "");
}

TEST(ToPages, ElementCountOracle) {
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        auto plan = fixtures::random_bundle(seed);
        std::size_t expected = plan.bundle.pages.size();
        for (const auto& p : plan.bundle.pages) expected += p.extracted.size();
        auto ps = to_pages(plan.bundle);
        EXPECT_EQ(ps.elements.size(), expected) << "seed " << seed;
        std::size_t listed = 0;
        for (const auto& p : ps.pages) listed += p.element_ids.size();
        EXPECT_EQ(listed, expected);
    }
}

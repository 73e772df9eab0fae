#include <gtest/gtest.h>

#include "dmap/serialize.hpp"
#include "../support/fixtures.hpp"

using namespace dmap;

namespace {

DMap minimal() {
    DMap m;
    m.doc_id = "min";
    Page p;
    p.number = 1;
    p.text = "x";
    p.screenshot_ref = "p1.png";
    p.element_ids = {"p1-content"};
    p.summary = "x";
    m.pages.push_back(p);
    Element c;
    c.id = "p1-content";
    c.kind = ElementKind::page_content;
    c.text_desc = "x";
    c.image_ref = "p1.png";
    m.elements[c.id] = c;
    m.sections.push_back({"0", "Document", {1}, {}});
    return m;
}

}  // namespace

TEST(Serialize, MinimalRoundTrip) {
    auto m = minimal();
    EXPECT_EQ(deserialize_map(serialize_map(m)), m);
}

TEST(Serialize, InsertionOrderDoesNotChangeBytes) {
    auto a = fixtures::random_map(11, {3, 5, 4});
    DMap b;
    b.doc_id = a.doc_id;
    b.sections = a.sections;
    b.pages = a.pages;
    // Insert elements in reverse order.
    for (auto it = a.elements.rbegin(); it != a.elements.rend(); ++it) b.elements.emplace(it->first, it->second);
    EXPECT_EQ(serialize_map(a), serialize_map(b));
}

TEST(Serialize, RandomMapsRoundTrip) {
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
        auto m = fixtures::random_map(seed * 31);
        auto bytes = serialize_map(m);
        auto back = deserialize_map(bytes);
        EXPECT_EQ(back, m) << "seed " << seed;
        EXPECT_EQ(serialize_map(back), bytes);
    }
}

TEST(Serialize, SyntaxErrorReportsByteOffset) {
    try {
        deserialize_map("{\"doc_id\": \"x\",, }");
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.field(), "");
        EXPECT_GT(e.offset(), 0u);
        EXPECT_LE(e.offset(), 17u);
    }
}

TEST(Serialize, TypeErrorNamesField) {
    auto j = nlohmann::json::parse(serialize_map(minimal()));
    j["pages"][0]["number"] = "one";
    auto bytes = j.dump(2);
    try {
        deserialize_map(bytes);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.field(), "/pages/0/number");
        EXPECT_EQ(bytes.substr(e.offset(), 8), "\"number\"");
    }
}

TEST(Serialize, UnknownKindAndMissingFieldRejected) {
    auto j = nlohmann::json::parse(serialize_map(minimal()));
    j["elements"]["p1-content"]["kind"] = "equation";
    EXPECT_THROW(deserialize_map(j.dump()), ParseError);
    auto k = nlohmann::json::parse(serialize_map(minimal()));
    k.erase("sections");
    try {
        deserialize_map(k.dump());
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.field(), "/sections");
    }
}

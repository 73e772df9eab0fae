#include <gtest/gtest.h>

#include <fstream>
#include <map>
#include <sstream>

#include "dmap/prompts.hpp"
#include "../support/prompt_sources.hpp"

using namespace dmap;

namespace {

std::string read(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::map<std::string, std::string> latex_prompts() {
    return fixtures::latex_prompts(std::string(DMAP_TEST_DATA) + "/fixtures/prompt_sources.tex");
}

prompts::Vars identity_vars(const prompts::PromptTemplate& t) {
    prompts::Vars v;
    for (auto p : t.placeholders) v[std::string(p)] = "{" + std::string(p) + "}";
    return v;
}

}  // namespace

TEST(Prompts, RegistryHasAllTemplates) {
    for (auto id : {"locate_agent", "summarize_agent", "text_agent", "image_agent", "gen_summarize_agent",
                    "reflect_agent", "summarize_repair", "element_describe", "judge_agent"})
        EXPECT_NO_THROW(prompts::get_template(id)) << id;
    EXPECT_THROW(prompts::get_template("nope"), Error);
}

TEST(Prompts, AgentBodiesMatchSourceTextAfterPlaceholderReinsertion) {
    auto sources = latex_prompts();
    ASSERT_EQ(sources.size(), 6u);
    for (auto id : prompts::kAgentPromptIds) {
        const auto& t = prompts::get_template(id);
        auto rendered = prompts::render_prompt(id, identity_vars(t)).messages.front().content;
        const auto& expected = sources.at(std::string(id));
        ASSERT_GE(rendered.size(), expected.size()) << id;
        EXPECT_EQ(rendered.substr(0, expected.size()), expected) << id;
        EXPECT_EQ(std::string(t.body), expected) << id;
    }
}

TEST(Prompts, ReflectRendersQuestionAndAnswer) {
    auto r = prompts::render_prompt("reflect_agent", {{"question", "Q"}, {"answer", "A"}});
    ASSERT_EQ(r.messages.size(), 1u);
    EXPECT_EQ(r.messages[0].role, "user");
    EXPECT_NE(r.messages[0].content.find("Question:\nQ\nAnswer:\nA"), std::string::npos);
}

TEST(Prompts, MissingVariableNamesIt) {
    try {
        prompts::render_prompt("reflect_agent", {{"question", "Q"}});
        FAIL();
    } catch (const RenderError& e) {
        EXPECT_EQ(e.placeholder(), "answer");
        EXPECT_NE(std::string(e.what()).find("answer"), std::string::npos);
    }
}

TEST(Prompts, RenderingIsDeterministic) {
    prompts::Vars v = {{"question", "Q"}, {"context", "C"}};
    EXPECT_EQ(prompts::render_prompt("text_agent", v).messages, prompts::render_prompt("text_agent", v).messages);
}

TEST(Prompts, CompleteVarsLeaveNoDeclaredPlaceholder) {
    for (const auto& t : prompts::all_templates()) {
        prompts::Vars v;
        for (auto p : t.placeholders) v[std::string(p)] = "<" + std::string(p) + ">";
        auto text = prompts::render_prompt(t.id, v).messages.front().content;
        for (auto p : t.placeholders)
            EXPECT_EQ(text.find("{" + std::string(p) + "}"), std::string::npos) << t.id << " " << p;
    }
}

TEST(Prompts, LiteralBracesAreNotPlaceholders) {
    // The locate prompt documents "{number}" in its instructions; it must survive.
    auto r = prompts::render_prompt("locate_agent", {{"summary", "S"}, {"outline", "O"}, {"question", "Q"}});
    EXPECT_NE(r.messages[0].content.find("`\"Page {number}\"`"), std::string::npos);
}

TEST(Prompts, ValuesAreNotRescanned) {
    auto r = prompts::render_prompt("reflect_agent", {{"question", "{answer}"}, {"answer", "A"}});
    EXPECT_NE(r.messages[0].content.find("Question:\n{answer}\nAnswer:\nA"), std::string::npos);
}

TEST(Prompts, TemplateFilesMatchCompiledText) {
    for (const auto& t : prompts::all_templates()) {
        auto body = read(std::string(DMAP_SOURCE_DIR) + "/prompts/" + std::string(t.id) + ".txt");
        EXPECT_EQ(body, std::string(t.body)) << t.id;
    }
}

TEST(Prompts, FixtureLinesAppearInSourceDocument) {
    auto doc = read(std::string(DMAP_SOURCE_DIR) + "/paper.md");
    ASSERT_FALSE(doc.empty());
    std::istringstream in(read(std::string(DMAP_TEST_DATA) + "/fixtures/prompt_sources.tex"));
    std::string line;
    int checked = 0;
    while (std::getline(in, line)) {
        if (line.rfind("%%%", 0) == 0 || line.empty()) continue;
        EXPECT_NE(doc.find(line), std::string::npos) << line;
        ++checked;
    }
    EXPECT_GT(checked, 50);
}

#pragma once

#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "dmap/error.hpp"
#include "dmap/llm.hpp"
#include "dmap/prompt_texts.hpp"  // generated from prompts/*.txt

namespace dmap::prompts {

/// An agent prompt: a fixed body followed by an input block. Only the declared
/// placeholders are substituted; any other `{...}` text is literal.
struct PromptTemplate {
    std::string_view id;
    std::string_view body;
    std::string_view input;
    std::vector<std::string_view> placeholders;
    // Whether the call carries image attachments.
    bool image_slot = false;

    std::string text() const { return std::string(body) + std::string(input); }
};

inline const std::vector<PromptTemplate>& all_templates() {
    namespace t = prompt_text;
    static const std::vector<PromptTemplate> templates = {
        {"locate_agent", t::locate_agent, t::locate_agent_input, {"summary", "outline", "question"}},
        {"summarize_agent", t::summarize_agent, t::summarize_agent_input,
         {"outline", "previous_page", "page_number", "current_page"}},
        {"text_agent", t::text_agent, t::text_agent_input, {"question", "context"}},
        {"image_agent", t::image_agent, t::image_agent_input, {"question", "images"}, true},
        {"gen_summarize_agent", t::gen_summarize_agent, t::gen_summarize_agent_input, {"question", "answers"}},
        {"reflect_agent", t::reflect_agent, {}, {"question", "answer"}},
        {"summarize_repair", t::summarize_repair, {}, {"problem", "page_number"}},
        {"element_describe", t::element_describe, {}, {"kind", "page_number", "page_text"}},
        {"judge_agent", t::judge_agent, {}, {"question", "reference", "candidate"}},
    };
    return templates;
}

/// The six agent prompts whose bodies are fixed texts.
inline constexpr std::string_view kAgentPromptIds[] = {
    "locate_agent", "summarize_agent", "text_agent", "image_agent", "gen_summarize_agent", "reflect_agent"};

inline const PromptTemplate& get_template(std::string_view id) {
    for (const auto& t : all_templates())
        if (t.id == id) return t;
    throw Error("unknown prompt template: " + std::string(id));
}

using Vars = std::map<std::string, std::string>;

/// Substitutes declared `{name}` placeholders in one left-to-right pass.
/// Substituted values are never rescanned.
inline std::string substitute(std::string_view text, const std::vector<std::string_view>& declared,
                              const Vars& vars) {
    std::string out;
    out.reserve(text.size());
    std::size_t i = 0;
    while (i < text.size()) {
        if (text[i] == '{') {
            auto close = text.find('}', i + 1);
            if (close != std::string_view::npos) {
                auto name = text.substr(i + 1, close - i - 1);
                bool is_declared = std::find(declared.begin(), declared.end(), name) != declared.end();
                if (is_declared) {
                    auto it = vars.find(std::string(name));
                    if (it == vars.end())
                        throw RenderError(std::string(name), "missing prompt variable '" + std::string(name) + "'");
                    out += it->second;
                    i = close + 1;
                    continue;
                }
            }
        }
        out.push_back(text[i++]);
    }
    return out;
}

inline llm::ChatRequest render_prompt(std::string_view id, const Vars& vars) {
    const auto& t = get_template(id);
    for (auto p : t.placeholders) {
        if (!vars.count(std::string(p)))
            throw RenderError(std::string(p), "missing prompt variable '" + std::string(p) + "'");
    }
    llm::ChatRequest r;
    r.template_id = std::string(id);
    r.vars = vars;
    r.messages.push_back({"user", substitute(t.text(), t.placeholders, vars)});
    return r;
}

}  // namespace dmap::prompts

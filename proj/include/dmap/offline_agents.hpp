#pragma once

#include <algorithm>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "dmap/embed.hpp"
#include "dmap/llm.hpp"
#include "dmap/map_builder.hpp"
#include "dmap/retrieval.hpp"
#include "dmap/text.hpp"

// Rule-based stand-ins for every agent prompt. They read the structured
// template variables, answer in each prompt's required output format, and are
// pure functions of their inputs, so offline runs are reproducible.
namespace dmap::offline {

namespace detail {

inline const std::set<std::string>& stopwords() {
    static const std::set<std::string> words = {
        "what", "which", "whom", "whose", "when", "where", "does", "have", "there", "their", "about",
        "from", "into", "with", "this", "that", "these", "those", "page", "table", "figure", "according",
        "document", "shown", "show", "shows", "many", "much", "were", "been", "being", "they", "them",
        "than", "then", "also", "only", "some", "such", "each", "other", "your", "more", "most"};
    return words;
}

inline std::vector<std::string> keywords(std::string_view s) {
    std::vector<std::string> out;
    for (auto tok : text::split_whitespace(s)) {
        auto t = normalize_token(tok);
        if (t.size() < 4 || stopwords().count(t)) continue;
        if (std::find(out.begin(), out.end(), t) == out.end()) out.push_back(t);
    }
    return out;
}

inline std::size_t overlap(const std::vector<std::string>& keys, std::string_view s) {
    std::set<std::string> tokens;
    for (auto tok : text::split_whitespace(s)) tokens.insert(normalize_token(tok));
    return static_cast<std::size_t>(
        std::count_if(keys.begin(), keys.end(), [&](const std::string& k) { return tokens.count(k) > 0; }));
}

/// Splits text into sentences at ., !, ? followed by whitespace, and at newlines.
inline std::vector<std::string> sentences(std::string_view s) {
    std::vector<std::string> out;
    for (auto line : text::split_lines(s)) {
        std::string cur;
        for (std::size_t i = 0; i < line.size(); ++i) {
            cur.push_back(line[i]);
            bool end = (line[i] == '.' || line[i] == '!' || line[i] == '?') &&
                       (i + 1 == line.size() || text::is_space(line[i + 1]));
            if (end) {
                auto t = text::collapse_whitespace(cur);
                if (!t.empty()) out.push_back(t);
                cur.clear();
            }
        }
        auto t = text::collapse_whitespace(cur);
        if (!t.empty()) out.push_back(t);
    }
    return out;
}

/// The sentence sharing most keywords with the question; with no keywords,
/// the first sentence. Empty when nothing matches.
inline std::string best_sentence(std::string_view question, const std::vector<std::string>& candidates) {
    auto keys = keywords(question);
    if (keys.empty()) return candidates.empty() ? std::string{} : candidates.front();
    std::size_t best = 0;
    std::string answer;
    for (const auto& c : candidates) {
        auto score = overlap(keys, c);
        if (score > best) {
            best = score;
            answer = c;
        }
    }
    return answer;
}

struct Heading {
    std::string number;
    std::string title;
};

inline std::optional<Heading> heading(std::string_view line) {
    line = text::trim(line);
    auto space = line.find_first_of(" \t");
    if (space == std::string_view::npos) return std::nullopt;
    auto number = outline::normalize_number(line.substr(0, space));
    auto title = std::string(text::trim(line.substr(space + 1)));
    if (!outline::valid_number(number) || outline::depth(number) > 2) return std::nullopt;
    for (char c : number)
        if (c != '.' && !std::isdigit(static_cast<unsigned char>(c))) return std::nullopt;
    std::string_view rest = number;
    while (!rest.empty()) {
        auto dot = rest.find('.');
        if (rest.substr(0, dot).size() > 2) return std::nullopt;
        rest = dot == std::string_view::npos ? std::string_view{} : rest.substr(dot + 1);
    }
    if (title.empty() || title.size() > 80 || !std::isupper(static_cast<unsigned char>(title.front())))
        return std::nullopt;
    if (title.back() == '.') return std::nullopt;
    return Heading{number, title};
}

inline void add_page(OutlineState& s, const std::string& number, int page) {
    for (auto n = number; !n.empty(); n = outline::parent_number(n)) {
        for (auto& e : s.entries) {
            if (e.number == n) {
                e.pages.push_back(page);
                outline::sort_unique(e.pages);
            }
        }
    }
}

inline std::string summarize(const llm::ChatRequest& r) {
    OutlineState state;
    std::vector<std::string> ignored;
    for (auto line : text::split_lines(r.vars.at("outline")))
        if (auto e = outline::parse_line(line, ignored)) state.entries.push_back(std::move(*e));
    const int page = text::parse_positive_int(r.vars.at("page_number")).value_or(1);
    const auto& body = r.vars.at("current_page");
    const std::string open_section = state.entries.empty() ? std::string{} : state.entries.back().number;

    bool content_before = false, seen_heading = false;
    std::vector<std::string> prose;
    std::vector<std::string> notes;
    for (auto line : text::split_lines(body)) {
        auto t = text::trim(line);
        if (t.empty()) continue;
        if (auto h = heading(t)) {
            seen_heading = true;
            auto it = std::find_if(state.entries.begin(), state.entries.end(),
                                   [&](const OutlineEntry& e) { return e.number == h->number; });
            if (it == state.entries.end()) state.entries.push_back({h->number, h->title, {}});
            add_page(state, h->number, page);
            continue;
        }
        if (!seen_heading) content_before = true;
        if (text::starts_with_icase(t, "Figure ") || text::starts_with_icase(t, "Table ")) {
            if (t.find(':') != std::string_view::npos) {
                notes.emplace_back(t);
                continue;
            }
        }
        prose.emplace_back(t);
    }
    // Text before the first heading continues the section open before this page.
    if (!seen_heading || content_before) {
        if (!open_section.empty()) add_page(state, open_section, page);
        else if (!outline::covers_page(state, page)) state = outline::append_to_last(std::move(state), page);
    }

    std::string out = "Outline:\n" + render_outline(state) + "\n\nCurrent page summary:\n";
    auto all = sentences(text::join(prose.empty() ? notes : prose, "\n"));
    if (all.empty()) {
        out += "Page " + std::to_string(page) + ": no content\nno figure or table\n";
        return out;
    }
    out += "Page " + std::to_string(page) + ": " + all.front() + "\n";
    for (const auto& n : notes) out += n + "\n";
    return out;
}

inline std::string locate(const llm::ChatRequest& r) {
    const auto& q = r.vars.at("question");
    auto tokens = text::split_whitespace(q);
    std::vector<std::string> found;
    for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
        auto loc = normalize_location(std::string(tokens[i]) + " " + std::string(tokens[i + 1]));
        if (loc.kind == LocationRef::Kind::not_mentioned) continue;
        auto d = loc.display();
        if (std::find(found.begin(), found.end(), d) == found.end()) found.push_back(d);
    }
    if (found.empty()) {
        auto keys = keywords(q);
        std::map<int, std::size_t> scores;
        int current = 0;
        for (auto line : text::split_lines(r.vars.at("summary"))) {
            auto t = text::trim(line);
            if (text::starts_with_icase(t, "Page ")) {
                auto colon = t.find(':');
                current = colon == std::string_view::npos ? 0 : text::parse_positive_int(t.substr(5, colon - 5)).value_or(0);
            }
            if (current > 0) scores[current] += overlap(keys, t);
        }
        std::vector<std::pair<int, std::size_t>> ranked(scores.begin(), scores.end());
        std::stable_sort(ranked.begin(), ranked.end(), [](auto& a, auto& b) { return a.second > b.second; });
        for (const auto& [p, s] : ranked) {
            if (s == 0 || found.size() == 2) break;
            found.push_back("Page " + std::to_string(p));
        }
    }
    if (found.empty()) found.push_back("not mentioned");
    return nlohmann::json{{"location", found}}.dump();
}

inline std::string answer_from(const std::string& question, std::string_view material, bool strip_ids) {
    std::string cleaned;
    for (auto line : text::split_lines(material)) {
        auto t = text::trim(line);
        if (strip_ids && !t.empty() && t.front() == '[') {
            auto close = t.find(']');
            if (close != std::string_view::npos) t = text::trim(t.substr(close + 1));
        }
        if (t.empty() || t == "(no reference text)" || t == "(no images)" || t == "(attached image)") continue;
        cleaned += std::string(t) + "\n";
    }
    auto answer = best_sentence(question, sentences(cleaned));
    return answer.empty() ? std::string(text::kNotAnswerable) : answer;
}

inline std::string gen_summarize(const llm::ChatRequest& r) {
    std::string answer(text::kNotAnswerable);
    for (auto line : text::split_lines(r.vars.at("answers"))) {
        auto colon = line.find(':');
        if (colon == std::string_view::npos) continue;
        auto a = text::trim(line.substr(colon + 1));
        if (!a.empty() && !text::is_not_answerable(a)) {
            answer = std::string(a);
            break;
        }
    }
    return "```json\n" + nlohmann::json{{"Answer", answer}}.dump() + "\n```";
}

inline std::string normalized_words(std::string_view s) {
    std::string out;
    for (auto tok : text::split_whitespace(s)) {
        auto t = normalize_token(tok);
        if (t.empty()) continue;
        if (!out.empty()) out += ' ';
        out += t;
    }
    return out;
}

inline std::string judge(const llm::ChatRequest& r) {
    auto ref = normalized_words(r.vars.at("reference"));
    auto cand = normalized_words(r.vars.at("candidate"));
    if (ref.empty()) return "no";
    if (cand.find(ref) != std::string::npos) return "yes";
    auto ref_tokens = text::split_whitespace(ref);
    std::set<std::string_view> cand_tokens;
    for (auto t : text::split_whitespace(cand)) cand_tokens.insert(t);
    auto hit = std::count_if(ref_tokens.begin(), ref_tokens.end(), [&](auto t) { return cand_tokens.count(t) > 0; });
    return 5 * static_cast<std::size_t>(hit) >= 4 * ref_tokens.size() ? "yes" : "no";
}

}  // namespace detail

/// Dispatches on template id; unknown ids are echoed.
inline llm::Responder responder() {
    return [](const llm::ChatRequest& r) -> std::string {
        const auto& id = r.template_id;
        if (id == "summarize_agent" || id == "summarize_repair") return detail::summarize(r);
        if (id == "locate_agent") return detail::locate(r);
        if (id == "text_agent") return detail::answer_from(r.vars.at("question"), r.vars.at("context"), true);
        if (id == "image_agent") return detail::answer_from(r.vars.at("question"), r.vars.at("images"), true);
        if (id == "gen_summarize_agent") return detail::gen_summarize(r);
        if (id == "reflect_agent") {
            auto a = text::trim(r.vars.at("answer"));
            return a.empty() || text::is_not_answerable(a) ? "no" : "yes";
        }
        if (id == "judge_agent") return detail::judge(r);
        if (id == "element_describe")
            return "A " + r.vars.at("kind") + " on page " + r.vars.at("page_number") + ".";
        return llm::echo_rule(r);
    };
}

inline std::shared_ptr<llm::MockBackend> make_backend(llm::MockScript script = {}) {
    return std::make_shared<llm::MockBackend>(std::move(script), responder());
}

}  // namespace dmap::offline

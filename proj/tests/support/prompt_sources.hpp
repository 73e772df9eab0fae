#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace fixtures {

/// Reads the LaTeX prompt listings (`%%% BEGIN id` ... `%%% END id` blocks)
/// and converts them to plain prompt text: drops the trailing `\\` line
/// breaks, unescapes `\{ \} \#`, and trims trailing blank lines.
inline std::map<std::string, std::string> latex_prompts(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    std::stringstream ss;
    ss << file.rdbuf();
    std::istringstream in(ss.str());
    std::map<std::string, std::string> out;
    std::string line, current;
    std::vector<std::string> lines;
    while (std::getline(in, line)) {
        if (line.rfind("%%% BEGIN ", 0) == 0) {
            current = line.substr(10);
            lines.clear();
            continue;
        }
        if (line.rfind("%%% END ", 0) == 0) {
            while (!lines.empty() && lines.back().empty()) lines.pop_back();
            std::string text;
            for (const auto& l : lines) text += l + "\n";
            out[current] = text;
            continue;
        }
        if (line.size() >= 2 && line.compare(line.size() - 2, 2, "\\\\") == 0) line.resize(line.size() - 2);
        std::string plain;
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '\\' && i + 1 < line.size() && (line[i + 1] == '{' || line[i + 1] == '}' || line[i + 1] == '#'))
                continue;
            plain.push_back(line[i]);
        }
        lines.push_back(plain);
    }
    return out;
}

}  // namespace fixtures

#pragma once

#include <cctype>
#include <string>
#include <string_view>
#include <vector>

namespace rsel {

// Lowercased word tokenizer. Alphanumerics, apostrophes and non-ASCII bytes
// form words; any other non-space byte is its own token.
inline std::vector<std::string> tokenize_words(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
    };
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (c >= 0x80 || std::isalnum(c) || c == '\'') {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (std::isspace(c)) {
            flush();
        } else {
            flush();
            out.emplace_back(1, ch);
        }
    }
    flush();
    return out;
}

}  // namespace rsel

#pragma once

#include <cctype>
#include <string>
#include <string_view>
#include <vector>

namespace eco {

// Lowercased alphanumeric word tokens. This is the local tokenizer used for
// chunk sizing, the mock judge, and prompt-size cost estimates.
inline std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

inline std::size_t count_tokens(std::string_view text) {
    std::size_t n = 0;
    bool in_tok = false;
    for (unsigned char c : text) {
        bool alnum = std::isalnum(c) != 0;
        if (alnum && !in_tok) ++n;
        in_tok = alnum;
    }
    return n;
}

}  // namespace eco

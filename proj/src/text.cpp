#include "multiqa/text.hpp"

#include <cctype>

namespace multiqa {

namespace {

inline bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

inline bool is_token_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) != 0 || (static_cast<unsigned char>(c) & 0x80) != 0;
}

}  // namespace

std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> words;
    size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && is_space(text[i])) ++i;
        size_t start = i;
        while (i < text.size() && !is_space(text[i])) ++i;
        if (i > start) words.emplace_back(text.substr(start, i - start));
    }
    return words;
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && !is_token_char(text[i])) ++i;
        size_t start = i;
        while (i < text.size() && is_token_char(text[i])) ++i;
        if (i > start) {
            std::string tok(text.substr(start, i - start));
            for (char& c : tok) c = char(std::tolower(static_cast<unsigned char>(c)));
            tokens.push_back(std::move(tok));
        }
    }
    return tokens;
}

std::string trim(std::string_view s) {
    size_t b = 0, e = s.size();
    while (b < e && is_space(s[b])) ++b;
    while (e > b && is_space(s[e - 1])) --e;
    return std::string(s.substr(b, e - b));
}

std::string normalize_answer(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool pending_space = false;
    for (char c : s) {
        if (is_space(c)) {
            if (!out.empty()) pending_space = true;
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        out.push_back(char(std::tolower(static_cast<unsigned char>(c))));
    }
    return out;
}

std::string normalize_for_match(std::string_view s) {
    std::string t = trim(s);
    if (t.size() >= 2) {
        char first = t.front(), last = t.back();
        if ((first == '"' && last == '"') || (first == '\'' && last == '\'')) {
            t = t.substr(1, t.size() - 2);
        }
    }
    return normalize_answer(t);
}

bool contains_normalized_substring(std::string_view haystack, std::string_view needle) {
    std::string h = normalize_answer(haystack);
    std::string n = normalize_answer(needle);
    if (n.empty()) return false;
    return h.find(n) != std::string::npos;
}

std::string to_lower(std::string_view s) {
    std::string out(s);
    for (char& c : out) c = char(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

}  // namespace multiqa

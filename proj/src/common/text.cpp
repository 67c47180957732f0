#include "csrag/common/text.hpp"

#include <algorithm>
#include <array>
#include <cstdint>

namespace csrag::text {
namespace {

struct Decoded {
    char32_t cp;
    std::size_t len;
};

// Invalid sequences decode as a single-byte U+FFFD so tokenization never stalls.
Decoded decode(std::string_view s, std::size_t i) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    if (b0 < 0x80) return {b0, 1};
    auto cont = [&](std::size_t k) -> int {
        if (i + k >= s.size()) return -1;
        const auto b = static_cast<unsigned char>(s[i + k]);
        return (b & 0xC0) == 0x80 ? (b & 0x3F) : -1;
    };
    if ((b0 & 0xE0) == 0xC0) {
        const int c1 = cont(1);
        if (c1 >= 0) return {static_cast<char32_t>(((b0 & 0x1F) << 6) | c1), 2};
    } else if ((b0 & 0xF0) == 0xE0) {
        const int c1 = cont(1), c2 = cont(2);
        if (c1 >= 0 && c2 >= 0) return {static_cast<char32_t>(((b0 & 0x0F) << 12) | (c1 << 6) | c2), 3};
    } else if ((b0 & 0xF8) == 0xF0) {
        const int c1 = cont(1), c2 = cont(2), c3 = cont(3);
        if (c1 >= 0 && c2 >= 0 && c3 >= 0)
            return {static_cast<char32_t>(((b0 & 0x07) << 18) | (c1 << 12) | (c2 << 6) | c3), 4};
    }
    return {0xFFFD, 1};
}

void encode(char32_t cp, std::string& out) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

bool is_space(char32_t cp) {
    switch (cp) {
        case ' ': case '\t': case '\n': case '\r': case '\f': case '\v':
        case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
        case 0x202F: case 0x205F: case 0x3000: case 0xFEFF:
            return true;
        default:
            return cp >= 0x2000 && cp <= 0x200B;
    }
}

bool is_punct(char32_t cp) {
    if (cp < 0x80) return (cp >= 0x21 && cp <= 0x2F) || (cp >= 0x3A && cp <= 0x40) ||
                          (cp >= 0x5B && cp <= 0x60) || (cp >= 0x7B && cp <= 0x7E) || cp < 0x20 || cp == 0x7F;
    switch (cp) {
        case 0xA1: case 0xA7: case 0xA9: case 0xAB: case 0xAC: case 0xAD: case 0xAE:
        case 0xB0: case 0xB1: case 0xB4: case 0xB6: case 0xB7: case 0xBB: case 0xBF:
        case 0xD7: case 0xF7:
            return true;
        default:
            break;
    }
    if (cp >= 0x80 && cp <= 0x9F) return true;           // C1 controls
    if (cp >= 0x2010 && cp <= 0x2027) return true;       // dashes, quotes, bullets, ellipsis
    if (cp >= 0x2030 && cp <= 0x205E) return true;
    if (cp >= 0x3001 && cp <= 0x3003) return true;
    if (cp >= 0x3008 && cp <= 0x3011) return true;
    if (cp >= 0xFF01 && cp <= 0xFF0F) return true;
    return false;
}

char32_t lower(char32_t cp) {
    if (cp >= 'A' && cp <= 'Z') return cp + 0x20;
    if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) return cp + 0x20;
    return cp;
}

bool is_ascii_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

constexpr std::array<std::string_view, 20> kAbbreviations = {
    "e.g.", "i.e.", "u.s.", "u.k.", "u.n.", "e.u.", "dr.",  "mr.",  "mrs.",  "ms.",
    "prof.", "sr.", "jr.",  "st.",  "vs.",  "cf.",  "al.",  "fig.", "approx.", "inc."};

bool is_closer(char32_t cp) {
    return cp == '"' || cp == '\'' || cp == ')' || cp == ']' || cp == '}' || cp == 0x2019 || cp == 0x201D ||
           cp == 0xBB;
}

}  // namespace

std::vector<TokenSpan> tokenize_spans(std::string_view text) {
    std::vector<TokenSpan> out;
    std::string current;
    std::size_t start = 0;
    std::size_t i = 0;
    while (i < text.size()) {
        const auto d = decode(text, i);
        if (is_space(d.cp) || is_punct(d.cp)) {
            if (!current.empty()) {
                out.push_back({std::move(current), start, i});
                current.clear();
            }
        } else {
            if (current.empty()) start = i;
            encode(lower(d.cp), current);
        }
        i += d.len;
    }
    if (!current.empty()) out.push_back({std::move(current), start, text.size()});
    return out;
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    for (auto& span : tokenize_spans(text)) out.push_back(std::move(span.token));
    return out;
}

std::size_t count_tokens(std::string_view text) { return tokenize_spans(text).size(); }

std::string normalize(std::string_view raw) {
    std::string flat;
    flat.reserve(raw.size());
    std::size_t i = 0;
    if (raw.substr(0, 3) == "\xEF\xBB\xBF") i = 3;
    while (i < raw.size()) {
        const auto d = decode(raw, i);
        if (d.cp == '\r') {
            flat.push_back('\n');
            if (i + 1 < raw.size() && raw[i + 1] == '\n') ++i;
        } else if (d.cp == '\n') {
            flat.push_back('\n');
        } else if (d.cp < 0x20 || d.cp == 0x7F || (d.cp >= 0x80 && d.cp <= 0x9F)) {
            flat.push_back(' ');
        } else {
            flat.append(raw.substr(i, d.len));
        }
        i += d.len;
    }

    std::vector<std::string> lines;
    std::size_t pos = 0;
    while (pos <= flat.size()) {
        const auto nl = flat.find('\n', pos);
        const auto end = nl == std::string::npos ? flat.size() : nl;
        std::string line = flat.substr(pos, end - pos);
        while (!line.empty() && is_ascii_space(line.back())) line.pop_back();
        lines.push_back(std::move(line));
        if (nl == std::string::npos) break;
        pos = nl + 1;
    }
    std::size_t first = 0;
    while (first < lines.size() && trim(lines[first]).empty()) ++first;
    std::size_t last = lines.size();
    while (last > first && trim(lines[last - 1]).empty()) --last;

    std::string out;
    for (std::size_t l = first; l < last; ++l) {
        if (l > first) out.push_back('\n');
        out += trim(lines[l]).empty() ? std::string{} : lines[l];
    }
    return out;
}

std::vector<std::string> split_paragraphs(std::string_view normalized) {
    std::vector<std::string> paragraphs;
    std::string current;
    std::size_t pos = 0;
    auto flush = [&] {
        if (!current.empty()) paragraphs.push_back(std::move(current));
        current.clear();
    };
    while (pos <= normalized.size()) {
        const auto nl = normalized.find('\n', pos);
        const auto end = nl == std::string_view::npos ? normalized.size() : nl;
        const std::string line = trim(normalized.substr(pos, end - pos));
        if (line.empty()) {
            flush();
        } else {
            if (!current.empty()) current.push_back(' ');
            current += line;
        }
        if (nl == std::string_view::npos) break;
        pos = nl + 1;
    }
    flush();
    return paragraphs;
}

bool is_abbreviation(std::string_view word) {
    while (!word.empty() && (word.front() == '(' || word.front() == '"' || word.front() == '\'' ||
                             word.front() == '[')) {
        word.remove_prefix(1);
    }
    const std::string lowered = to_lower_ascii(word);
    return std::find(kAbbreviations.begin(), kAbbreviations.end(), lowered) != kAbbreviations.end();
}

std::vector<std::string> split_sentences(std::string_view text) {
    std::vector<std::string> out;
    std::size_t sentence_start = 0;
    std::size_t i = 0;
    auto emit = [&](std::size_t end) {
        std::string s = trim(text.substr(sentence_start, end - sentence_start));
        if (!s.empty()) out.push_back(std::move(s));
        sentence_start = end;
    };
    while (i < text.size()) {
        const char c = text[i];
        if (c != '.' && c != '!' && c != '?') {
            i += decode(text, i).len;
            continue;
        }
        const std::size_t run_start = i;
        while (i < text.size() && (text[i] == '.' || text[i] == '!' || text[i] == '?')) ++i;
        const std::size_t run_end = i;
        while (i < text.size()) {
            const auto d = decode(text, i);
            if (!is_closer(d.cp)) break;
            i += d.len;
        }
        const bool at_boundary = i >= text.size() || is_space(decode(text, i).cp);
        if (!at_boundary) continue;
        if (run_end - run_start == 1 && text[run_start] == '.') {
            std::size_t word_start = run_start;
            while (word_start > sentence_start && !is_ascii_space(text[word_start - 1])) --word_start;
            if (is_abbreviation(text.substr(word_start, run_end - word_start))) continue;
        }
        emit(i);
    }
    if (sentence_start < text.size()) emit(text.size());
    return out;
}

std::size_t count_sentences(std::string_view text) { return split_sentences(text).size(); }

std::string trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && is_ascii_space(s[b])) ++b;
    while (e > b && is_ascii_space(s[e - 1])) --e;
    return std::string(s.substr(b, e - b));
}

std::string strip_whitespace(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (const char c : s)
        if (!is_ascii_space(c)) out.push_back(c);
    return out;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out.append(sep);
        out += parts[i];
    }
    return out;
}

std::string to_lower_ascii(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(c >= 'A' && c <= 'Z' ? c + 0x20 : c); });
    return out;
}

}  // namespace csrag::text

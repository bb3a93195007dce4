#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace sc2::text {

/// Lenient UTF-8 decoding: malformed bytes decode to U+FFFD, one per byte.
inline std::vector<uint32_t> decode_utf8(std::string_view s) {
    std::vector<uint32_t> out;
    out.reserve(s.size());
    size_t i = 0;
    while (i < s.size()) {
        unsigned char b = static_cast<unsigned char>(s[i]);
        uint32_t cp = 0xFFFD;
        size_t len = 1;
        if (b < 0x80) {
            cp = b;
        } else if ((b & 0xE0) == 0xC0) {
            len = 2;
            cp = b & 0x1F;
        } else if ((b & 0xF0) == 0xE0) {
            len = 3;
            cp = b & 0x0F;
        } else if ((b & 0xF8) == 0xF0) {
            len = 4;
            cp = b & 0x07;
        } else {
            out.push_back(0xFFFD);
            ++i;
            continue;
        }
        if (i + len > s.size()) {
            out.push_back(0xFFFD);
            ++i;
            continue;
        }
        bool ok = true;
        for (size_t k = 1; k < len; ++k) {
            unsigned char c = static_cast<unsigned char>(s[i + k]);
            if ((c & 0xC0) != 0x80) {
                ok = false;
                break;
            }
            cp = (cp << 6) | (c & 0x3F);
        }
        if (!ok || cp > 0x10FFFF) {
            out.push_back(0xFFFD);
            ++i;
            continue;
        }
        out.push_back(cp);
        i += len;
    }
    return out;
}

inline void append_utf8(std::string& out, uint32_t cp) {
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

inline bool is_space_cp(uint32_t cp) {
    return cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r' || cp == '\f' ||
           cp == '\v' || cp == 0x00A0 || cp == 0x2009 || cp == 0x200B || cp == 0x3000;
}

/// Punctuation that may be stripped from the tail of an aspect phrase. Covers
/// ASCII sentence punctuation plus common fullwidth/CJK forms emitted by LLMs.
inline bool is_strippable_punct_cp(uint32_t cp) {
    switch (cp) {
        case '.': case ',': case ';': case ':': case '!': case '?':
        case 0x3002:  // ideographic full stop
        case 0xFF0E:  // fullwidth full stop
        case 0xFF0C:  // fullwidth comma
        case 0xFF1A:  // fullwidth colon
        case 0xFF1B:  // fullwidth semicolon
        case 0xFF01:  // fullwidth exclamation mark
        case 0xFF1F:  // fullwidth question mark
        case 0x2026:  // horizontal ellipsis
            return true;
        default:
            return false;
    }
}

/// Canonical form of an aspect phrase: lowercase (ASCII range), whitespace
/// collapsed to single spaces, trimmed, trailing punctuation stripped. Input
/// is assumed to already be in composed (NFC) form; typical LLM output is.
/// Returns "" when nothing survives.
inline std::string canonical_phrase(std::string_view phrase) {
    std::vector<uint32_t> cps = decode_utf8(phrase);
    std::vector<uint32_t> collapsed;
    collapsed.reserve(cps.size());
    bool pending_space = false;
    for (uint32_t cp : cps) {
        if (is_space_cp(cp)) {
            pending_space = !collapsed.empty();
            continue;
        }
        if (cp >= 'A' && cp <= 'Z') cp += 'a' - 'A';
        if (pending_space) {
            collapsed.push_back(' ');
            pending_space = false;
        }
        collapsed.push_back(cp);
    }
    while (!collapsed.empty() &&
           (is_strippable_punct_cp(collapsed.back()) || collapsed.back() == ' ')) {
        collapsed.pop_back();
    }
    std::string out;
    for (uint32_t cp : collapsed) append_utf8(out, cp);
    return out;
}

inline std::string lower_ascii(std::string_view s) {
    std::string out(s);
    for (char& c : out) {
        if (c >= 'A' && c <= 'Z') c += 'a' - 'A';
    }
    return out;
}

inline std::string trim(std::string_view s) {
    size_t b = 0;
    size_t e = s.size();
    while (b < e && (static_cast<unsigned char>(s[b]) <= ' ')) ++b;
    while (e > b && (static_cast<unsigned char>(s[e - 1]) <= ' ')) --e;
    return std::string(s.substr(b, e - b));
}

inline std::vector<std::string> split_whitespace(std::string_view s) {
    std::vector<std::string> out;
    size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && static_cast<unsigned char>(s[i]) <= ' ') ++i;
        size_t start = i;
        while (i < s.size() && static_cast<unsigned char>(s[i]) > ' ') ++i;
        if (i > start) out.emplace_back(s.substr(start, i - start));
    }
    return out;
}

inline std::vector<std::string> split_lines(std::string_view s) {
    std::vector<std::string> lines;
    std::string cur;
    for (char c : s) {
        if (c == '\r') continue;
        if (c == '\n') {
            lines.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    lines.push_back(cur);
    return lines;
}

/// Whitespace-delimited token count; the mock backend's stand-in for real
/// tokenizer counts.
inline long count_ws_tokens(std::string_view s) {
    long n = 0;
    size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && static_cast<unsigned char>(s[i]) <= ' ') ++i;
        if (i < s.size()) ++n;
        while (i < s.size() && static_cast<unsigned char>(s[i]) > ' ') ++i;
    }
    return n;
}

inline bool contains(std::string_view haystack, std::string_view needle) {
    return haystack.find(needle) != std::string_view::npos;
}

inline std::string replace_all(std::string s, std::string_view from, std::string_view to) {
    if (from.empty()) return s;
    size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
    }
    return s;
}

} // namespace sc2::text

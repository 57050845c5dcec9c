#include "text_util.hpp"

#include <cctype>

namespace cairdd::text {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::string to_lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

std::string collapse_ws(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    bool in_ws = true;  // leading whitespace dropped
    for (unsigned char c : s) {
        if (std::isspace(c)) {
            in_ws = true;
        } else {
            if (in_ws && !out.empty()) out.push_back(' ');
            out.push_back(static_cast<char>(c));
            in_ws = false;
        }
    }
    return out;
}

std::vector<std::string> split_lines(const std::string& s) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start <= s.size()) {
        auto nl = s.find('\n', start);
        if (nl == std::string::npos) {
            lines.push_back(s.substr(start));
            break;
        }
        lines.push_back(s.substr(start, nl - start));
        start = nl + 1;
    }
    return lines;
}

bool starts_with_ci(const std::string& s, std::size_t pos, const char* lit) {
    for (std::size_t i = 0; lit[i]; ++i) {
        if (pos + i >= s.size()) return false;
        if (std::tolower(static_cast<unsigned char>(s[pos + i])) !=
            std::tolower(static_cast<unsigned char>(lit[i])))
            return false;
    }
    return true;
}

namespace {

bool is_hex4(const std::string& s, std::size_t pos) {
    if (pos + 4 > s.size()) return false;
    for (std::size_t i = 0; i < 4; ++i)
        if (!std::isxdigit(static_cast<unsigned char>(s[pos + i]))) return false;
    return true;
}

unsigned hex4(const std::string& s, std::size_t pos) {
    unsigned v = 0;
    for (std::size_t i = 0; i < 4; ++i) {
        char c = s[pos + i];
        v <<= 4;
        if (c >= '0' && c <= '9') v |= static_cast<unsigned>(c - '0');
        else if (c >= 'a' && c <= 'f') v |= static_cast<unsigned>(c - 'a' + 10);
        else v |= static_cast<unsigned>(c - 'A' + 10);
    }
    return v;
}

void append_utf8(std::string& out, std::uint32_t cp) {
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

bool has_escape_sequence(const std::string& s) {
    for (std::size_t i = 0; i + 1 < s.size(); ++i) {
        if (s[i] != '\\') continue;
        char n = s[i + 1];
        if (n == 'n' || n == 't' || n == 'r' || n == '"' || n == '\'' || n == '\\')
            return true;
        if (n == 'u' && is_hex4(s, i + 2)) return true;
    }
    return false;
}

std::string unescape_once(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
        char c = s[i];
        if (c == '\\' && i + 1 < s.size()) {
            char n = s[i + 1];
            switch (n) {
                case 'n': out.push_back('\n'); i += 2; continue;
                case 't': out.push_back('\t'); i += 2; continue;
                case 'r': i += 2; continue;
                case '"': out.push_back('"'); i += 2; continue;
                case '\'': out.push_back('\''); i += 2; continue;
                case '\\': out.push_back('\\'); i += 2; continue;
                case 'u':
                    if (is_hex4(s, i + 2)) {
                        std::uint32_t cp = hex4(s, i + 2);
                        if (cp >= 0xD800 && cp <= 0xDBFF && i + 8 <= s.size() &&
                            s.compare(i + 6, 2, "\\u") == 0 && is_hex4(s, i + 8)) {
                            unsigned lo = hex4(s, i + 8);
                            if (lo >= 0xDC00 && lo <= 0xDFFF) {
                                cp = 0x10000 + ((cp - 0xD800) << 10) + (lo - 0xDC00);
                                append_utf8(out, cp);
                                i += 12;
                                continue;
                            }
                        }
                        if (cp < 0xD800 || cp > 0xDFFF) {
                            append_utf8(out, cp);
                            i += 6;
                            continue;
                        }
                    }
                    break;
                default: break;
            }
        }
        out.push_back(c);
        ++i;
    }
    return out;
}

}  // namespace

std::string unescape_model_text(const std::string& s) {
    std::string cur = s;
    for (int pass = 0; pass < 3 && has_escape_sequence(cur); ++pass) {
        std::string next = unescape_once(cur);
        if (next == cur) break;
        cur = std::move(next);
    }
    std::string out;
    out.reserve(cur.size());
    for (std::size_t i = 0; i < cur.size(); ++i) {
        if (cur[i] == '\r') {
            if (i + 1 >= cur.size() || cur[i + 1] != '\n') out.push_back('\n');
            continue;
        }
        out.push_back(cur[i]);
    }
    return out;
}

std::string strip_code_fences(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (const auto& line : split_lines(s)) {
        std::size_t p = 0;
        while (p < line.size() && (line[p] == ' ' || line[p] == '\t')) ++p;
        if (line.compare(p, 3, "```") == 0) continue;
        out += line;
        out.push_back('\n');
    }
    if (!out.empty()) out.pop_back();
    return out;
}

namespace {

constexpr const char* kDecor = " \t*_\\";

bool in_set(char c, const char* set) {
    for (std::size_t i = 0; set[i]; ++i)
        if (set[i] == c) return true;
    return false;
}

std::string strip_set(const std::string& s, const char* set) {
    std::size_t b = 0, e = s.size();
    while (b < e && in_set(s[b], set)) ++b;
    while (e > b && in_set(s[e - 1], set)) --e;
    return s.substr(b, e - b);
}

}  // namespace

std::string strip_decor(const std::string& s) { return strip_set(s, kDecor); }

std::string clean_title(const std::string& s) {
    std::string t = strip_set(s, kDecor);
    t = strip_set(t, "\"'");
    t = strip_set(t, kDecor);
    return collapse_ws(t);
}

}  // namespace cairdd::text

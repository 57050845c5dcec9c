#include "cairdd/generation.hpp"

#include <algorithm>
#include <cctype>
#include <optional>

#include <json.hpp>

#include "cairdd/llm_client.hpp"
#include "cairdd/prompts.hpp"
#include "text_util.hpp"

namespace cairdd {

namespace {

constexpr const char* kDecor = " \t*_\\";
constexpr const char* kQuoteDecor = "\"' \t*_\\";

bool in_set(char c, const char* set) {
    for (std::size_t i = 0; set[i]; ++i)
        if (set[i] == c) return true;
    return false;
}

std::string lstrip_set(const std::string& s, const char* set) {
    std::size_t b = 0;
    while (b < s.size() && in_set(s[b], set)) ++b;
    return s.substr(b);
}

std::string strip_set(const std::string& s, const char* set) {
    std::size_t b = 0, e = s.size();
    while (b < e && in_set(s[b], set)) ++b;
    while (e > b && in_set(s[e - 1], set)) --e;
    return s.substr(b, e - b);
}

std::string rtrim(const std::string& s) {
    std::size_t e = s.size();
    while (e > 0 && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(0, e);
}

bool is_ws(char c) { return c == ' ' || c == '\t'; }

bool is_dash3(const std::string& s, std::size_t pos) {
    return s.compare(pos, 3, "\xE2\x80\x93") == 0 || s.compare(pos, 3, "\xE2\x80\x94") == 0;
}

// ---- wrapper removal -------------------------------------------------------

// `{ "concept": ` prefix; returns position just past it, or npos
std::size_t match_wrap_brace(const std::string& t) {
    std::size_t i = 0;
    if (i >= t.size() || t[i] != '{') return std::string::npos;
    ++i;
    while (i < t.size() && std::isspace(static_cast<unsigned char>(t[i]))) ++i;
    if (i < t.size() && (t[i] == '"' || t[i] == '\'')) ++i;
    if (!text::starts_with_ci(t, i, "concept")) return std::string::npos;
    i += 7;
    if (i < t.size() && (t[i] == '"' || t[i] == '\'')) ++i;
    while (i < t.size() && std::isspace(static_cast<unsigned char>(t[i]))) ++i;
    if (i >= t.size() || t[i] != ':') return std::string::npos;
    ++i;
    while (i < t.size() && std::isspace(static_cast<unsigned char>(t[i]))) ++i;
    return i;
}

// bare `concept:` label; returns position just past it, or npos
std::size_t match_wrap_label(const std::string& t) {
    std::size_t i = 0;
    while (i < t.size() && (t[i] == '*' || std::isspace(static_cast<unsigned char>(t[i])))) ++i;
    if (!text::starts_with_ci(t, i, "concept")) return std::string::npos;
    i += 7;
    while (i < t.size() && std::isspace(static_cast<unsigned char>(t[i]))) ++i;
    if (i >= t.size() || t[i] != ':') return std::string::npos;
    ++i;
    while (i < t.size() && std::isspace(static_cast<unsigned char>(t[i]))) ++i;
    return i;
}

std::string unwrap(const std::string& s) {
    std::string t = text::trim(s);
    if (!t.empty() && t[0] == '{') {
        nlohmann::json j = nlohmann::json::parse(t, nullptr, false);
        if (!j.is_discarded() && j.is_object() && j.contains("concept") &&
            j["concept"].is_string())
            return j["concept"].get<std::string>();
        // not valid json (usually raw newlines inside the string); strip the
        // wrapper punctuation manually
        std::size_t m = match_wrap_brace(t);
        if (m != std::string::npos) {
            std::string body = t.substr(m);
            bool opened = !body.empty() && body[0] == '"';
            if (opened) body.erase(0, 1);
            body = rtrim(body);
            if (body.size() >= 2 && body.compare(body.size() - 2, 2, "\"}") == 0) {
                body.erase(body.size() - 2);
            } else if (!body.empty() && body.back() == '}') {
                body.pop_back();
                body = rtrim(body);
                if (opened && !body.empty() && body.back() == '"') body.pop_back();
            } else if (opened && !body.empty() && body.back() == '"') {
                body.pop_back();
            }
            return body;
        }
        return t;
    }
    std::size_t m = match_wrap_label(t);
    if (m != std::string::npos) {
        // only treat the label as a wrapper when chapter content follows soon
        std::string window = text::to_lower(t.substr(m, 4000));
        if (window.find("chapter") != std::string::npos) return t.substr(m);
    }
    return t;
}

// ---- heading scan ----------------------------------------------------------

struct Marker {
    std::size_t start = 0;  // segment boundary for the previous chapter
    std::size_t end = 0;    // first position after the separator and spacing
    int index = 0;
};

// "Chapter N" followed by : . - or an en/em dash. Strict mode additionally
// requires the heading to sit at a line start (light decoration allowed) or
// right after a ** bold opener; loose mode takes a colon form anywhere.
bool match_marker_at(const std::string& t, std::size_t p, bool loose, Marker& m) {
    std::size_t start = p;
    if (!loose) {
        std::size_t line_start = 0;
        if (p > 0) {
            std::size_t nl = t.rfind('\n', p - 1);
            line_start = nl == std::string::npos ? 0 : nl + 1;
        }
        bool all_decor = true;
        for (std::size_t q = line_start; q < p; ++q) {
            if (!in_set(t[q], " \t>#*_\\\"'-")) {
                all_decor = false;
                break;
            }
        }
        if (all_decor) {
            start = line_start;
        } else {
            std::size_t q = p;
            while (q > 0 && is_ws(t[q - 1])) --q;
            if (q >= 2 && t[q - 1] == '*' && t[q - 2] == '*')
                start = q - 2;
            else
                return false;
        }
    }
    std::size_t i = p + 7;  // past "chapter"
    std::size_t ws = i;
    while (i < t.size() && is_ws(t[i])) ++i;
    if (i == ws) return false;
    std::size_t d = i;
    int idx = 0;
    while (i < t.size() && std::isdigit(static_cast<unsigned char>(t[i]))) {
        idx = idx * 10 + (t[i] - '0');
        ++i;
    }
    if (i == d || i - d > 3) return false;
    while (i < t.size() && is_ws(t[i])) ++i;
    if (i >= t.size()) return false;
    if (loose) {
        if (t[i] != ':') return false;
        ++i;
    } else if (t[i] == ':' || t[i] == '.' || t[i] == '-') {
        ++i;
    } else if (is_dash3(t, i)) {
        i += 3;
    } else {
        return false;
    }
    while (i < t.size() && is_ws(t[i])) ++i;
    m = {start, i, idx};
    return true;
}

std::vector<Marker> scan_markers(const std::string& t, bool loose) {
    std::vector<Marker> out;
    std::size_t i = 0;
    while (i + 7 <= t.size()) {
        std::size_t p = std::string::npos;
        for (std::size_t q = i; q + 7 <= t.size(); ++q) {
            if ((t[q] == 'C' || t[q] == 'c') && t.compare(q + 1, 6, "hapter") == 0) {
                p = q;
                break;
            }
        }
        if (p == std::string::npos) break;
        Marker m;
        if (match_marker_at(t, p, loose, m)) {
            out.push_back(m);
            i = m.end;
        } else {
            i = p + 1;
        }
    }
    return out;
}

// "N. Title" / "N) Title" list lines
struct NumItem {
    std::size_t line_start = 0;
    std::size_t line_end = 0;  // summary segment starts here
    int index = 0;
    std::string title_text;
};

std::vector<NumItem> scan_numbered(const std::string& t) {
    std::vector<NumItem> out;
    std::size_t pos = 0;
    while (pos <= t.size()) {
        std::size_t nl = t.find('\n', pos);
        std::size_t end = nl == std::string::npos ? t.size() : nl;
        std::size_t i = pos;
        while (i < end && in_set(t[i], " \t*#")) ++i;
        std::size_t d = i;
        int idx = 0;
        while (i < end && std::isdigit(static_cast<unsigned char>(t[i]))) {
            idx = idx * 10 + (t[i] - '0');
            ++i;
        }
        std::size_t digits = i - d;
        if (digits >= 1 && digits <= 3 && i < end && (t[i] == '.' || t[i] == ')')) {
            ++i;
            std::size_t w = i;
            while (i < end && is_ws(t[i])) ++i;
            if (i > w && i < end && !std::isspace(static_cast<unsigned char>(t[i])))
                out.push_back({pos, end, idx, t.substr(i, end - i)});
        }
        if (nl == std::string::npos) break;
        pos = nl + 1;
    }
    return out;
}

// first "Title: X" line; empty result means the line carried no text
std::optional<std::string> find_title_line(const std::string& pre) {
    for (const std::string& line : text::split_lines(pre)) {
        std::size_t i = 0;
        while (i < line.size() && in_set(line[i], " \t*_#>")) ++i;
        if (line.compare(i, 5, "Title") != 0) continue;
        i += 5;
        while (i < line.size() && is_ws(line[i])) ++i;
        if (i >= line.size() || line[i] != ':') continue;
        ++i;
        if (i >= line.size()) continue;  // bare "Title:" is not a match
        std::size_t j = i;
        while (j < line.size() && is_ws(line[j])) ++j;
        if (j >= line.size()) return std::string();
        return text::clean_title(line.substr(j));
    }
    return std::nullopt;
}

// ---- chapter title extraction ----------------------------------------------

// " - " or spaced en/em dash; returns index of the leading whitespace
std::size_t find_dash_sep(const std::string& r) {
    for (std::size_t j = 0; j < r.size(); ++j) {
        if (!std::isspace(static_cast<unsigned char>(r[j]))) continue;
        std::size_t k = j + 1;
        if (k < r.size() && r[k] == '-') {
            if (k + 1 < r.size() && std::isspace(static_cast<unsigned char>(r[k + 1])))
                return j;
        } else if (k + 3 < r.size() && is_dash3(r, k)) {
            if (std::isspace(static_cast<unsigned char>(r[k + 3]))) return j;
        }
    }
    return std::string::npos;
}

struct TitleExtract {
    std::string title;
    std::string inline_rem;  // same-line text after the title
    std::size_t consumed = 0;  // following lines swallowed by the title
};

TitleExtract extract_title(const std::string& rest_of_line,
                           const std::vector<std::string>& following) {
    std::string r = lstrip_set(rest_of_line, kDecor);
    std::size_t consumed = 0;
    if (strip_set(r, kQuoteDecor).empty()) {
        // nothing usable after the marker: title lives on a later line
        while (consumed < following.size() && text::trim(following[consumed]).empty())
            ++consumed;
        if (consumed >= following.size()) return {"", "", consumed};
        r = lstrip_set(following[consumed], kDecor);
        ++consumed;
    }
    if (!r.empty() && (r[0] == '"' || r[0] == '\'')) {
        char quote = r[0];
        std::size_t close = std::string::npos;
        if (quote == '"') {
            close = r.find('"', 1);
        } else {
            // an apostrophe only closes when not followed by a letter/digit
            for (std::size_t j = 1; j < r.size(); ++j) {
                if (r[j] == '\'' &&
                    (j + 1 >= r.size() || !std::isalnum(static_cast<unsigned char>(r[j + 1])))) {
                    close = j;
                    break;
                }
            }
        }
        if (close != std::string::npos)
            return {text::clean_title(r.substr(1, close - 1)), r.substr(close + 1), consumed};
        // unclosed quote: the title continues on the next non-blank line
        std::string part1 = r.substr(1);
        while (consumed < following.size() && text::trim(following[consumed]).empty())
            ++consumed;
        std::string part2 = consumed < following.size() ? following[consumed] : std::string();
        if (!part2.empty()) ++consumed;
        return {text::clean_title(part1 + " " + text::clean_title(part2)), "", consumed};
    }
    // bare title: runs to a bold break, a spaced dash, or end of line
    std::size_t stop = r.size();
    std::size_t bold = r.find("**");
    if (bold != std::string::npos && bold > 0) stop = std::min(stop, bold);
    std::size_t dash = find_dash_sep(r);
    if (dash != std::string::npos) stop = std::min(stop, dash);
    return {text::clean_title(r.substr(0, stop)), r.substr(stop), consumed};
}

// ---- summary cleanup -------------------------------------------------------

std::string clean_summary(const std::string& s) {
    std::string acc;
    for (const std::string& line : text::split_lines(s)) {
        std::size_t w = 0;
        while (w < line.size() && is_ws(line[w])) ++w;
        if (line.compare(w, 3, "```") == 0) continue;
        std::string t = text::trim(line);
        if (t.empty()) continue;
        // leading "Summary:" label
        std::size_t i = 0;
        while (i < t.size() &&
               (t[i] == '*' || std::isspace(static_cast<unsigned char>(t[i]))))
            ++i;
        if (text::starts_with_ci(t, i, "summary")) {
            std::size_t j = i + 7;
            while (j < t.size() && is_ws(t[j])) ++j;
            if (j < t.size() && t[j] == ':') {
                ++j;
                while (j < t.size() && is_ws(t[j])) ++j;
                t = t.substr(j);
            }
        }
        // leading list/dash/colon punctuation
        std::size_t k = 0;
        while (k < t.size()) {
            char c = t[k];
            if (c == '-' || c == ':' || std::isspace(static_cast<unsigned char>(c))) {
                ++k;
            } else if (is_dash3(t, k)) {
                k += 3;
            } else {
                break;
            }
        }
        t = t.substr(k);
        if (t.empty()) continue;
        if (!acc.empty()) acc += ' ';
        acc += t;
    }
    return text::trim(text::strip_decor(text::collapse_ws(acc)));
}

// ---- builders ---------------------------------------------------------------

void validate_chapters(const std::vector<Chapter>& chapters, const std::string& raw) {
    if (chapters.empty()) throw ParseFailure("no chapters found", raw);
    for (std::size_t i = 0; i < chapters.size(); ++i) {
        const Chapter& ch = chapters[i];
        if (ch.index != static_cast<int>(i) + 1)
            throw ParseFailure("non-contiguous chapter numbering: got " +
                                   std::to_string(ch.index) + " at position " +
                                   std::to_string(i + 1),
                               raw);
        if (ch.title.empty())
            throw ParseFailure("chapter " + std::to_string(ch.index) + " has an empty title",
                               raw);
        if (ch.summary.empty())
            throw ParseFailure(
                "chapter " + std::to_string(ch.index) + " has an empty summary", raw);
    }
}

FullConcept build_from_markers(const std::string& t, const std::vector<Marker>& ms,
                               const std::string& raw) {
    FullConcept c;
    c.raw = raw;
    if (auto title = find_title_line(t.substr(0, ms.front().start))) c.title = *title;
    for (std::size_t k = 0; k < ms.size(); ++k) {
        std::size_t seg_end = k + 1 < ms.size() ? ms[k + 1].start : t.size();
        std::string seg = t.substr(ms[k].end, seg_end - ms[k].end);
        std::vector<std::string> seg_lines = text::split_lines(seg);
        std::string rest = seg_lines.front();
        std::vector<std::string> following(seg_lines.begin() + 1, seg_lines.end());
        TitleExtract te = extract_title(rest, following);
        std::string body = te.inline_rem;
        for (std::size_t j = te.consumed; j < following.size(); ++j) {
            body += '\n';
            body += following[j];
        }
        c.chapters.push_back({ms[k].index, te.title, clean_summary(body)});
    }
    validate_chapters(c.chapters, raw);
    return c;
}

FullConcept build_numbered(const std::string& t, const std::string& raw) {
    std::vector<NumItem> items = scan_numbered(t);
    if (items.empty()) throw ParseFailure("no chapters found", raw);
    FullConcept c;
    c.raw = raw;
    if (auto title = find_title_line(t.substr(0, items.front().line_start))) c.title = *title;
    for (std::size_t k = 0; k < items.size(); ++k) {
        std::size_t seg_end = k + 1 < items.size() ? items[k + 1].line_start : t.size();
        std::string seg = t.substr(items[k].line_end, seg_end - items[k].line_end);
        c.chapters.push_back(
            {items[k].index, text::clean_title(items[k].title_text), clean_summary(seg)});
    }
    validate_chapters(c.chapters, raw);
    return c;
}

}  // namespace

FullConcept parse_concept(const std::string& raw) {
    std::string body = unwrap(text::strip_code_fences(text::unescape_model_text(raw)));
    std::vector<Marker> strict = scan_markers(body, false);
    std::vector<Marker> loose = scan_markers(body, true);
    std::optional<ParseFailure> first_error;
    auto attempt = [&](const std::vector<Marker>& ms) -> std::optional<FullConcept> {
        if (ms.empty()) return std::nullopt;
        try {
            return build_from_markers(body, ms, raw);
        } catch (const ParseFailure& e) {
            if (!first_error) first_error = e;
            return std::nullopt;
        }
    };
    // run-together one-line output carries undecorated inline markers the
    // strict scan misses, so there a loose scan that sees more of them gives
    // the better segmentation; on multi-line input the loose scan is only a
    // rescue for a failed strict build, since a summary may legitimately
    // mention "Chapter N:" mid-sentence
    bool more_loose = loose.size() > strict.size();
    if (more_loose && body.find('\n') == std::string::npos) {
        if (auto c = attempt(loose)) return *c;
        if (auto c = attempt(strict)) return *c;
    } else {
        if (auto c = attempt(strict)) return *c;
        if (more_loose)
            if (auto c = attempt(loose)) return *c;
    }
    if (strict.empty() && loose.empty()) return build_numbered(body, raw);
    throw first_error ? *first_error : ParseFailure("no chapters found", raw);
}

std::string render_concept(const FullConcept& draft) {
    std::string out;
    if (!draft.title.empty()) {
        out += "Title: ";
        out += draft.title;
        out += "\n\n";
    }
    for (const Chapter& ch : draft.chapters) {
        out += "Chapter ";
        out += std::to_string(ch.index);
        out += ": \"";
        out += ch.title;
        out += "\"\nSummary: ";
        out += ch.summary;
        out += "\n\n";
    }
    if (!out.empty()) out.pop_back();
    return out;
}

ConceptIdea generate_idea(const BackendConfig& cfg, const std::string& genre,
                          const SeedWordSet& seed, int ordinal,
                          const std::vector<std::string>& requirements,
                          const std::vector<std::string>& suggestions,
                          const std::string& feedback) {
    RenderedPrompt prompt =
        render_idea_prompt(genre, seed, ordinal, requirements, suggestions, feedback);
    ChatResponse resp = complete(cfg, {prompt.system, {prompt.user}});
    std::string idea = text::trim(resp.text);
    if (idea.empty()) throw EmptyResponse("idea generation returned empty text");
    return {idea, seed, ordinal};
}

FullConcept generate_concept(const BackendConfig& cfg, const ConceptIdea& idea) {
    if (idea.text.empty()) throw UsageError("generate_concept: idea text is empty");
    RenderedPrompt prompt = render_concept_prompt(idea.text);
    ChatResponse resp = complete(cfg, {prompt.system, {prompt.user}});
    FullConcept draft = parse_concept(resp.text);
    draft.idea = idea;
    return draft;
}

}  // namespace cairdd

#include "cairdd/rubric.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

#include "cairdd/llm_client.hpp"
#include "cairdd/prompts.hpp"
#include "text_util.hpp"

namespace cairdd {

std::string canonical_title(const std::string& t) {
    std::string s;
    s.reserve(t.size());
    for (char c : t) {
        if (c == '&') {
            s += " and ";
        } else {
            s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        }
    }
    s = text::collapse_ws(s);
    while (!s.empty()) {
        char back = s.back();
        if (back == '.' || back == ',' || back == ';' || back == ':' ||
            back == '!' || back == '?') {
            s.pop_back();
        } else {
            break;
        }
    }
    return text::trim(s);
}

namespace {

// splits "Name — description" at the first separator; returns npos-style pair
// when the line has no separator
std::pair<std::string, std::string> split_name_desc(const std::string& s) {
    struct Sep { const char* lit; std::size_t len; };
    // em dash, en dash, hyphen with spaces, colon
    static const Sep seps[] = {
        {" \xE2\x80\x94 ", 5}, {"\xE2\x80\x94", 3},
        {" \xE2\x80\x93 ", 5}, {"\xE2\x80\x93", 3},
        {" - ", 3}, {": ", 2}, {":", 1},
    };
    std::size_t best = std::string::npos, best_len = 0;
    for (const auto& sep : seps) {
        auto pos = s.find(sep.lit);
        if (pos != std::string::npos && pos < best) {
            best = pos;
            best_len = sep.len;
        }
    }
    if (best == std::string::npos) return {s, ""};
    return {s.substr(0, best), s.substr(best + best_len)};
}

bool numbered_item(const std::string& line, std::string& rest) {
    std::size_t p = 0;
    while (p < line.size() &&
           (line[p] == ' ' || line[p] == '\t' || line[p] == '*' || line[p] == '#'))
        ++p;
    std::size_t d = p;
    while (d < line.size() && std::isdigit(static_cast<unsigned char>(line[d]))) ++d;
    if (d == p || d - p > 2) return false;
    if (d >= line.size() || (line[d] != '.' && line[d] != ')')) return false;
    ++d;
    if (d >= line.size() || (line[d] != ' ' && line[d] != '\t')) return false;
    rest = text::trim(line.substr(d));
    return !rest.empty();
}

// whole-line markdown heading: `## Name` or `**Name**`
bool heading_line(const std::string& line, std::string& name) {
    std::string t = text::trim(line);
    if (t.empty()) return false;
    if (t[0] == '#') {
        std::size_t p = 0;
        while (p < t.size() && t[p] == '#') ++p;
        name = text::trim(t.substr(p));
        return !name.empty();
    }
    if (t.size() > 4 && t.compare(0, 2, "**") == 0 &&
        t.compare(t.size() - 2, 2, "**") == 0) {
        name = text::trim(t.substr(2, t.size() - 4));
        return !name.empty() && name.find("**") == std::string::npos;
    }
    return false;
}

void check_unique(const std::vector<RubricCategory>& cats) {
    std::map<std::string, int> seen;
    for (const auto& c : cats) {
        if (++seen[canonical_title(c.name)] > 1)
            throw ParseFailure("duplicate rubric category: " + c.name);
    }
}

}  // namespace

Rubric parse_rubric(const std::string& raw) {
    std::string body = text::strip_code_fences(text::unescape_model_text(raw));
    auto lines = text::split_lines(body);

    Rubric rubric;
    std::string rest;
    for (const auto& line : lines) {
        if (!numbered_item(line, rest)) continue;
        auto [name, desc] = split_name_desc(rest);
        RubricCategory cat;
        cat.name = text::clean_title(name);
        cat.description = text::trim(text::strip_decor(desc));
        if (cat.name.empty()) throw ParseFailure("rubric item with empty name");
        rubric.categories.push_back(std::move(cat));
    }

    if (rubric.categories.empty()) {
        // heading-per-category form: heading line, description lines follow
        std::string name;
        for (const auto& line : lines) {
            if (heading_line(line, name)) {
                RubricCategory cat;
                cat.name = text::clean_title(name);
                if (cat.name.empty()) continue;
                rubric.categories.push_back(std::move(cat));
            } else if (!rubric.categories.empty()) {
                std::string t = text::trim(line);
                if (t.empty()) continue;
                auto& desc = rubric.categories.back().description;
                if (!desc.empty()) desc += ' ';
                desc += text::collapse_ws(t);
            }
        }
    }

    if (rubric.categories.empty())
        throw ParseFailure("no rubric categories found", raw);
    check_unique(rubric.categories);
    return rubric;
}

Rubric load_rubric_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open rubric file: " + path.string());
    std::ostringstream buf;
    std::string line;
    while (std::getline(in, line)) {
        std::string t = text::trim(line);
        if (!t.empty() && t[0] == '#') continue;
        buf << line << '\n';
    }
    Rubric r = parse_rubric(buf.str());
    r.source = RubricSource::file;
    return r;
}

StabilityReport rubric_stability(const std::vector<Rubric>& rubrics) {
    if (rubrics.empty()) throw UsageError("rubric_stability: no rubrics given");
    const std::size_t width = rubrics.front().categories.size();
    for (const auto& r : rubrics)
        if (r.categories.size() != width)
            throw ShapeMismatch("rubrics disagree on category count: " +
                                std::to_string(width) + " vs " +
                                std::to_string(r.categories.size()));

    StabilityReport report;
    for (std::size_t pos = 0; pos < width; ++pos) {
        std::map<std::string, int> counts;
        for (const auto& r : rubrics) ++counts[canonical_title(r.categories[pos].name)];

        PositionStability st;
        st.total = static_cast<int>(rubrics.size());
        for (const auto& [title, count] : counts) st.variants.push_back({title, count});
        std::sort(st.variants.begin(), st.variants.end(),
                  [](const TitleCount& a, const TitleCount& b) {
                      if (a.count != b.count) return a.count > b.count;
                      return a.title < b.title;
                  });
        st.modal_title = st.variants.front().title;
        st.modal_count = st.variants.front().count;
        report.positions.push_back(std::move(st));
    }
    return report;
}

Rubric generate_rubric(const BackendConfig& cfg, const std::string& task_description,
                       const std::string& baseline) {
    if (task_description.empty() || baseline.empty())
        throw UsageError("generate_rubric: task description and baseline required");

    auto prompt = render_rubric_prompt(task_description, baseline);
    ChatRequest req{prompt.system, {prompt.user}};

    for (int attempt = 0;; ++attempt) {
        ChatResponse resp = complete(cfg, req);
        try {
            Rubric r = parse_rubric(resp.text);
            r.source = RubricSource::generated;
            r.task_description = task_description;
            return r;
        } catch (const ParseFailure&) {
            if (attempt >= 1) throw;
            // one re-prompt: restate the expected shape alongside the original ask
            req.user_turns = {prompt.user +
                              "\n\nRespond only with the numbered category lines, "
                              "one per line, in the form \"N. Category Name \xE2\x80\x94 "
                              "description\"."};
        }
    }
}

}  // namespace cairdd

#include "cairdd/scoring.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>

#include "cairdd/generation.hpp"
#include "cairdd/llm_client.hpp"
#include "cairdd/prompts.hpp"
#include "text_util.hpp"

namespace cairdd {

namespace {

bool parse_number(const std::string& s, double& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    out = std::strtod(s.c_str(), &end);
    while (end && *end && std::isspace(static_cast<unsigned char>(*end))) ++end;
    return end && *end == '\0';
}

// Splits "Name 4" / "Name: 4" / "**Name** 4" into a name and a number.
bool split_item(const std::string& chunk, std::string& name, double& value) {
    std::string c = text::trim(chunk);
    // a list bullet is not part of the category name
    if (c.size() >= 2 && (c[0] == '-' || c[0] == '*') && (c[1] == ' ' || c[1] == '\t'))
        c = text::trim(c.substr(2));
    if (c.empty()) return false;
    std::size_t b = c.size();
    while (b > 0 && (std::isdigit(static_cast<unsigned char>(c[b - 1])) || c[b - 1] == '.')) --b;
    if (b == c.size()) return false;
    if (b > 0 && (c[b - 1] == '-' || c[b - 1] == '+')) {
        // a sign only belongs to the number when set off from the name,
        // otherwise it is a trailing hyphen of the name itself
        if (b == 1 || c[b - 2] == ' ' || c[b - 2] == '\t' || c[b - 2] == ':') --b;
    }
    if (!parse_number(c.substr(b), value)) return false;
    std::string n = text::trim(c.substr(0, b));
    while (!n.empty() && (n.back() == ':' || n.back() == '-' || n.back() == '=')) n.pop_back();
    n = text::strip_decor(n);
    if (n.empty()) return false;
    name = n;
    return true;
}

std::vector<std::pair<double, double>> category_ranges(const Rubric& rubric) {
    std::vector<std::pair<double, double>> ranges;
    ranges.reserve(rubric.categories.size());
    for (const RubricCategory& cat : rubric.categories)
        ranges.emplace_back(cat.min_score, cat.max_score);
    return ranges;
}

}  // namespace

double normalize(double score, double min, double max) {
    if (max <= min) throw DegenerateRange("normalize: max must exceed min");
    if (score < min || score > max) throw OutOfRange("normalize: score outside [min, max]");
    return (score - min) / (max - min);
}

double composite(const std::vector<int>& scores,
                 const std::vector<std::pair<double, double>>& ranges,
                 ScoreMode mode) {
    if (scores.empty()) throw EmptyInput("composite: no category scores");
    if (scores.size() != ranges.size())
        throw ShapeMismatch("composite: scores and ranges differ in length");
    if (mode == ScoreMode::mean) {
        double sum = 0.0;
        for (int s : scores) sum += s;
        return sum / static_cast<double>(scores.size());
    }
    double best = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i)
        best = std::max(best, normalize(scores[i], ranges[i].first, ranges[i].second));
    return best;
}

ScoreCard parse_scorecard(const std::string& raw, const Rubric& rubric, ScoreMode mode) {
    const auto& cats = rubric.categories;
    if (cats.empty()) throw UsageError("parse_scorecard: rubric has no categories");

    std::string body = text::strip_code_fences(text::unescape_model_text(raw));
    std::optional<double> stated;
    std::string items;
    for (const std::string& line : text::split_lines(body)) {
        std::string bare = text::trim(text::strip_decor(line));
        if (bare.empty()) continue;
        if (!stated && text::starts_with_ci(bare, 0, "score")) {
            std::string rest = text::trim(bare.substr(5));
            if (!rest.empty() && (rest[0] == ':' || rest[0] == '=' || rest[0] == '-'))
                rest = text::trim(rest.substr(1));
            std::size_t comma = rest.find(',');
            double v = 0.0;
            if (parse_number(text::trim(text::strip_decor(rest.substr(0, comma))), v)) {
                stated = v;
                if (comma != std::string::npos) {
                    items += rest.substr(comma + 1);
                    items += ' ';
                }
                continue;
            }
        }
        items += line;
        items += ' ';
    }

    std::vector<std::string> canon(cats.size());
    for (std::size_t i = 0; i < cats.size(); ++i) canon[i] = canonical_title(cats[i].name);

    std::vector<int> scores(cats.size(), 0);
    std::vector<bool> seen(cats.size(), false);
    std::size_t start = 0;
    while (start <= items.size()) {
        std::size_t comma = items.find(',', start);
        std::size_t len = comma == std::string::npos ? std::string::npos : comma - start;
        std::string chunk = items.substr(start, len);
        start = comma == std::string::npos ? items.size() + 1 : comma + 1;

        std::string name;
        double value = 0.0;
        if (!split_item(chunk, name, value)) continue;
        auto it = std::find(canon.begin(), canon.end(), canonical_title(name));
        if (it == canon.end()) continue;  // stray prose, tolerated
        std::size_t idx = static_cast<std::size_t>(it - canon.begin());
        if (seen[idx]) continue;  // first occurrence wins
        if (value != std::floor(value))
            throw ParseFailure("category \"" + cats[idx].name + "\" has a non-integer score", raw);
        int iv = static_cast<int>(std::llround(value));
        if (iv < cats[idx].min_score || iv > cats[idx].max_score)
            throw ParseFailure("category \"" + cats[idx].name + "\" score " + std::to_string(iv) +
                                   " outside [" + std::to_string(cats[idx].min_score) + ", " +
                                   std::to_string(cats[idx].max_score) + "]",
                               raw);
        scores[idx] = iv;
        seen[idx] = true;
    }

    std::string missing;
    for (std::size_t i = 0; i < cats.size(); ++i) {
        if (seen[i]) continue;
        if (!missing.empty()) missing += ", ";
        missing += cats[i].name;
    }
    if (!missing.empty()) throw ParseFailure("scorecard missing categories: " + missing, raw);

    ScoreCard card;
    card.category_scores = std::move(scores);
    card.mode = mode;
    card.raw = raw;
    card.composite = composite(card.category_scores, category_ranges(rubric), mode);
    card.stated_composite = stated;
    card.mismatch_flag = stated && std::fabs(*stated - card.composite) > 0.005;
    return card;
}

ScoreCard score_concept(const BackendConfig& cfg, const Rubric& rubric,
                        const FullConcept& draft, int passes, ScoreMode mode) {
    if (passes < 1) throw UsageError("score_concept: passes must be >= 1");
    RenderedPrompt prompt = render_scoring_prompt(rubric, render_concept(draft));
    ChatRequest req{prompt.system, {prompt.user}};

    std::vector<ScoreCard> cards;
    std::string last_error;
    std::string raws;
    for (int p = 0; p < passes; ++p) {
        ChatResponse resp = complete(cfg, req);
        if (!raws.empty()) raws += "\n---\n";
        raws += resp.text;
        try {
            cards.push_back(parse_scorecard(resp.text, rubric, mode));
        } catch (const ParseFailure& e) {
            last_error = e.what();
        }
    }
    if (cards.empty())
        throw ParseFailure("no scoring pass produced a readable scorecard: " + last_error, raws);
    if (passes == 1) return cards.front();

    // lower median per category across the passes that parsed
    ScoreCard agg;
    agg.mode = mode;
    agg.raw = std::move(raws);
    agg.category_scores.resize(rubric.categories.size());
    std::vector<int> vals;
    for (std::size_t c = 0; c < agg.category_scores.size(); ++c) {
        vals.clear();
        for (const ScoreCard& card : cards) vals.push_back(card.category_scores[c]);
        std::sort(vals.begin(), vals.end());
        agg.category_scores[c] = vals[(vals.size() - 1) / 2];
    }
    agg.composite = composite(agg.category_scores, category_ranges(rubric), mode);
    return agg;
}

}  // namespace cairdd

#include "cairdd/prompts.hpp"

#include "cairdd/errors.hpp"
#include "text_util.hpp"

namespace cairdd {

namespace {

std::string quoted_list(const std::vector<std::string>& words) {
    std::string out;
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (i > 0) out += (i + 1 == words.size()) ? " and " : ", ";
        out += '"';
        out += words[i];
        out += '"';
    }
    return out;
}

// drop a trailing period so injected phrases read as single sentences
std::string sentence_body(const std::string& s) {
    std::string t = text::trim(s);
    while (!t.empty() && t.back() == '.') t.pop_back();
    return t;
}

}  // namespace

std::string idea_preamble() {
    return "You are a creative AI assistant. You always fulfill the user's requests to the "
           "best of your ability.";
}

std::string concept_preamble() {
    return idea_preamble() +
           " For each prompt generate a list of chapters in the story and a brief summary of "
           "each chapter.";
}

RenderedPrompt render_idea_prompt(const std::string& genre, const SeedWordSet& words,
                                  int ordinal, const std::vector<std::string>& requirements,
                                  const std::vector<std::string>& suggestions,
                                  const std::string& feedback) {
    if (genre.empty()) throw UsageError("render_idea_prompt: genre is empty");
    if (words.words.empty()) throw UsageError("render_idea_prompt: no seed words");
    if (ordinal < 1) throw UsageError("render_idea_prompt: ordinal must be >= 1");

    std::string user = "Develop ";
    user += ordinal == 1 ? "a" : ordinal == 2 ? "a second" : "an additional";
    user += " creative one sentence idea for a ";
    user += genre;
    user += " story related to ";
    // "the word" only for a single one-token word; a single quoted phrase
    // still takes "the words"
    bool single_token =
        words.words.size() == 1 && words.words[0].find(' ') == std::string::npos;
    user += single_token ? "the word " : "the words ";
    user += quoted_list(words.words);
    user += '.';

    for (const std::string& r : requirements) {
        user += " The story must ";
        user += sentence_body(r);
        user += '.';
    }
    for (const std::string& s : suggestions) {
        user += " Consider ";
        user += sentence_body(s);
        user += '.';
    }
    if (!feedback.empty()) {
        user += ' ';
        user += text::trim(feedback);
    }
    return {idea_preamble(), user, PromptKind::idea};
}

RenderedPrompt render_concept_prompt(const std::string& idea) {
    if (text::trim(idea).empty()) throw UsageError("render_concept_prompt: idea is empty");
    return {concept_preamble(), idea, PromptKind::concept_gen};
}

RenderedPrompt render_rubric_prompt(const std::string& task_description,
                                    const std::string& baseline_rubric) {
    if (text::trim(task_description).empty())
        throw UsageError("render_rubric_prompt: task description is empty");
    if (text::trim(baseline_rubric).empty())
        throw UsageError("render_rubric_prompt: baseline rubric is empty");
    std::string user = "Create a rubric for evaluating the creativity of ";
    user += sentence_body(task_description);
    user +=
        ". Respond with a numbered list of categories, one per line, in the form "
        "\"N. Category Name \xE2\x80\x94 description\". Each category is scored with an "
        "integer from 0 to 4. Use the following baseline rubric as a starting point and "
        "adapt it to the task:\n\n";
    user += baseline_rubric;
    return {idea_preamble(), user, PromptKind::rubric_gen};
}

RenderedPrompt render_scoring_prompt(const Rubric& rubric, const std::string& concept_text) {
    if (rubric.categories.empty())
        throw UsageError("render_scoring_prompt: rubric has no categories");
    std::string user = "Evaluate the creativity of the story concept below using this rubric:\n";
    for (std::size_t i = 0; i < rubric.categories.size(); ++i) {
        const RubricCategory& cat = rubric.categories[i];
        user += std::to_string(i + 1);
        user += ". ";
        user += cat.name;
        user += " (";
        user += std::to_string(cat.min_score);
        user += '-';
        user += std::to_string(cat.max_score);
        user += ')';
        if (!cat.description.empty()) {
            user += ": ";
            user += cat.description;
        }
        user += '\n';
    }
    user +=
        "\nRespond with exactly two lines and nothing else.\n"
        "Line 1: \"Score: \" followed by the mean of your category scores.\n"
        "Line 2: every category in the order listed above, comma separated, each written "
        "as the category name, a space, and its integer score.\n\nConcept:\n";
    user += concept_text;
    return {"You are a careful literary judge. You follow scoring instructions exactly and "
            "respond only in the requested format.",
            user, PromptKind::scoring};
}

RenderedPrompt render_expansion_prompt(const std::string& concept_text,
                                       const SeedWordSet& extra_words) {
    if (text::trim(concept_text).empty())
        throw UsageError("render_expansion_prompt: concept text is empty");
    if (extra_words.words.empty())
        throw UsageError("render_expansion_prompt: no extra words");
    std::string user = "Here is the current concept for a story:\n\n";
    user += concept_text;
    user += "\n\nRewrite and expand this concept so it also incorporates the words ";
    user += quoted_list(extra_words.words);
    user +=
        ". Keep every chapter in the form Chapter N: \"Title\" followed by a Summary: "
        "line, and return the complete updated concept.";
    return {concept_preamble(), user, PromptKind::expansion};
}

std::string render_retool_feedback(const ScoreCard& card, const Rubric& rubric) {
    if (card.category_scores.size() != rubric.categories.size())
        throw ShapeMismatch("render_retool_feedback: card does not match rubric");
    std::vector<std::string> low;
    for (std::size_t i = 0; i < rubric.categories.size(); ++i) {
        if (card.category_scores[i] < rubric.categories[i].max_score)
            low.push_back(rubric.categories[i].name);
    }
    if (low.empty()) return {};
    std::string out = "A previous attempt scored below the maximum for ";
    for (std::size_t i = 0; i < low.size(); ++i) {
        if (i > 0) out += (i + 1 == low.size()) ? " and " : ", ";
        out += low[i];
    }
    out += ". Address this feedback in the new idea.";
    return out;
}

}  // namespace cairdd

#pragma once

#include <string>
#include <vector>

#include "cairdd/lexicon.hpp"
#include "cairdd/rubric.hpp"
#include "cairdd/scoring.hpp"

namespace cairdd {

enum class PromptKind { idea, concept_gen, rubric_gen, scoring, expansion, retool_feedback };

struct RenderedPrompt {
    std::string system;
    std::string user;
    PromptKind kind = PromptKind::idea;
};

// fixed system preambles
std::string idea_preamble();
std::string concept_preamble();

// "Develop a creative one sentence idea for a {genre} story related to the
// word(s) {quoted list}."; ordinal 2 says "a second", 3+ "an additional".
// Requirements render as "The story must {r}." sentences, suggestions as
// "Consider {s}.", and feedback (already sentence-formed) is appended last.
RenderedPrompt render_idea_prompt(const std::string& genre, const SeedWordSet& words,
                                  int ordinal,
                                  const std::vector<std::string>& requirements = {},
                                  const std::vector<std::string>& suggestions = {},
                                  const std::string& feedback = {});

// user turn is the idea sentence verbatim under the concept preamble
RenderedPrompt render_concept_prompt(const std::string& idea);

// asks for a numbered category list adapted from the baseline rubric text
RenderedPrompt render_rubric_prompt(const std::string& task_description,
                                    const std::string& baseline_rubric);

// dictates the two-line judge output: "Score: {composite}" then the
// comma-separated "{category name} {integer}" list in rubric order
RenderedPrompt render_scoring_prompt(const Rubric& rubric, const std::string& concept_text);

// embeds the current concept and asks for a rewrite folding in the new words
RenderedPrompt render_expansion_prompt(const std::string& concept_text,
                                       const SeedWordSet& extra_words);

// names every category scoring below its maximum; empty when none do
std::string render_retool_feedback(const ScoreCard& card, const Rubric& rubric);

}  // namespace cairdd

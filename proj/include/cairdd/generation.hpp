#pragma once

#include <string>
#include <vector>

#include "cairdd/errors.hpp"
#include "cairdd/lexicon.hpp"

namespace cairdd {

struct BackendConfig;

struct ConceptIdea {
    std::string text;  // one-sentence idea, trimmed
    SeedWordSet seed;
    int ordinal = 1;
    bool operator==(const ConceptIdea&) const = default;
};

struct Chapter {
    int index = 0;  // 1-based, contiguous
    std::string title;
    std::string summary;
    bool operator==(const Chapter&) const = default;
};

struct FullConcept {
    ConceptIdea idea;
    std::string title;  // empty when the output had no Title line
    std::vector<Chapter> chapters;
    std::string raw;  // verbatim model output
    bool operator==(const FullConcept&) const = default;
};

// Structures free-text model output into chapters. Handles json-style
// escaping (including double-encoded text), code fences, a {"concept": ...}
// wrapper, markdown decoration, "Chapter N:" headings in several quoting
// styles, run-together single-line output, and plain numbered lists.
// Throws ParseFailure (carrying the raw text) when no chapters are found,
// numbering is not contiguous from 1, or a title or summary is empty.
FullConcept parse_concept(const std::string& raw);

// Canonical text form: optional "Title: X" line, then per chapter
// `Chapter N: "Title"` and `Summary: ...` lines, blocks separated by blank
// lines. parse_concept(render_concept(c)) reproduces the structure.
std::string render_concept(const FullConcept& draft);

ConceptIdea generate_idea(const BackendConfig& cfg, const std::string& genre,
                          const SeedWordSet& seed, int ordinal,
                          const std::vector<std::string>& requirements = {},
                          const std::vector<std::string>& suggestions = {},
                          const std::string& feedback = {});

FullConcept generate_concept(const BackendConfig& cfg, const ConceptIdea& idea);

}  // namespace cairdd

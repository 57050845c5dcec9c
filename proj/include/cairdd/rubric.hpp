#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cairdd/errors.hpp"

namespace cairdd {

struct BackendConfig;

struct RubricCategory {
    std::string name;
    std::string description;  // may be empty
    int min_score = 0;
    int max_score = 4;

    bool operator==(const RubricCategory&) const = default;
};

enum class RubricSource { generated, baseline, file };

struct Rubric {
    std::vector<RubricCategory> categories;
    RubricSource source = RubricSource::file;
    std::string task_description;

    bool operator==(const Rubric&) const = default;
};

struct TitleCount {
    std::string title;  // canonical form
    int count = 0;
};

struct PositionStability {
    std::string modal_title;
    int modal_count = 0;
    int total = 0;
    std::vector<TitleCount> variants;  // count desc, then title asc
};

struct StabilityReport {
    std::vector<PositionStability> positions;
};

// Case-folded, whitespace-collapsed, '&' folded to "and", trailing
// punctuation stripped. Idempotent.
std::string canonical_title(const std::string& t);

// Categories from numbered lines (`N. Name — description`, separator also
// accepts '-', '–' or ':') or from heading-per-category text. Category names
// must be unique after canonicalization.
Rubric parse_rubric(const std::string& raw);

// Rubric file: plain text, one `N. Name — description` line per category,
// `#`-prefixed lines ignored.
Rubric load_rubric_file(const std::filesystem::path& path);

// Per-position modal canonical title across rubrics of equal shape.
StabilityReport rubric_stability(const std::vector<Rubric>& rubrics);

// Prompts the backend for a task-specific rubric against a baseline; retries
// the parse once by re-prompting before surfacing ParseFailure.
Rubric generate_rubric(const BackendConfig& cfg, const std::string& task_description,
                       const std::string& baseline);

}  // namespace cairdd

#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cairdd/errors.hpp"
#include "cairdd/rubric.hpp"

namespace cairdd {

struct BackendConfig;
struct FullConcept;

// mean: arithmetic mean of the raw category scores.
// max_normalized: highest range-normalized category score, in [0,1].
enum class ScoreMode { mean, max_normalized };

struct ScoreCard {
    std::vector<int> category_scores;  // aligned to rubric category order
    double composite = 0.0;            // always recomputed, never trusted
    std::optional<double> stated_composite;
    ScoreMode mode = ScoreMode::mean;
    std::string raw;
    bool mismatch_flag = false;  // stated differs from recomputed by > 0.005

    bool operator==(const ScoreCard&) const = default;
};

// (score - min) / (max - min)
double normalize(double score, double min, double max);

// Composite per mode; `ranges` holds each category's (min, max).
double composite(const std::vector<int>& scores,
                 const std::vector<std::pair<double, double>>& ranges,
                 ScoreMode mode);

// Judge output: optional `Score:` line plus `Name value` items separated by
// commas, matched to rubric categories by canonical title. Tolerates
// markdown decoration, trailing commas and line wrapping.
ScoreCard parse_scorecard(const std::string& raw, const Rubric& rubric,
                          ScoreMode mode = ScoreMode::mean);

// `passes` independent judge calls; per-category score is the median across
// parseable passes (lower median for even counts). ParseFailure only when
// every pass is unparseable.
ScoreCard score_concept(const BackendConfig& cfg, const Rubric& rubric,
                        const FullConcept& draft, int passes = 1,
                        ScoreMode mode = ScoreMode::mean);

}  // namespace cairdd

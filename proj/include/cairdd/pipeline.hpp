#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cairdd/errors.hpp"
#include "cairdd/generation.hpp"
#include "cairdd/lexicon.hpp"
#include "cairdd/llm_client.hpp"
#include "cairdd/rubric.hpp"
#include "cairdd/scoring.hpp"

namespace cairdd {

struct FocusArea {
    std::string genre;
    std::vector<std::string> requirements;  // "The story must ..." clauses
    std::vector<std::string> suggestions;   // "Consider ..." clauses
    bool operator==(const FocusArea&) const = default;
};

struct RunConfig {
    FocusArea focus;
    int attempts = 50;
    int words_per_concept = 3;
    std::uint64_t master_seed = 1;
    double accept_threshold = 3.9;   // composite >= this accepts
    double expand_threshold = 3.5;   // below this retools
    double min_improvement = 0.05;   // expansion must beat previous by this
    int max_expansions = 3;
    int max_retools = 2;
    int parallelism = 1;
    bool refine_enabled = true;  // off reproduces plain best-of-N
    ScoreMode score_mode = ScoreMode::mean;
    int score_passes = 1;
    BackendConfig backend;
    std::string stub_table_file;  // attached to backend.stub by run() when set
    std::string wordlist_file;
    std::string thesaurus_file;        // optional
    std::string rubric_file;           // load when set, otherwise generate
    std::string rubric_task;           // task description for generation
    std::string rubric_baseline_file;  // baseline text for generation
    std::string efficacy_rubric_file;  // optional second scoring dimension
    bool normalize_timestamps = false;  // epoch timestamps, for comparisons
    std::string output_file;            // run file written before run() returns

    bool operator==(const RunConfig&) const = default;
};

enum class Disposition { accept, expand, retool };

struct TraceEntry {
    Disposition disposition = Disposition::accept;
    double composite = 0.0;
    bool operator==(const TraceEntry&) const = default;
};

enum class AttemptStatus { success, failure };
enum class FailureKind { none, backend_unavailable, parse_failure };

struct AttemptRecord {
    int attempt_index = 0;
    SeedWordSet seed;  // the initial sample; retools draw fresh words
    std::string idea;  // initial idea text
    std::optional<FullConcept> final_concept;  // set on success
    std::optional<ScoreCard> card;
    std::optional<ScoreCard> efficacy_card;
    std::vector<TraceEntry> trace;  // one entry per scored step
    AttemptStatus status = AttemptStatus::failure;
    FailureKind failure_kind = FailureKind::none;
    std::string error;  // diagnostic on failure
    std::string started_at;
    std::string finished_at;
    int expansions = 0;
    int retools = 0;
    bool operator==(const AttemptRecord&) const = default;
};

struct RunStats {
    double average = 0.0;  // mean composite over successes, 2 decimals
    double best = 0.0;     // max composite over successes, 2 decimals
    int best_attempt_index = -1;  // lowest index on ties
    double improvement = 0.0;     // best - average
    double improvement_pct = 0.0;  // improvement / average, as a fraction
    int failures = 0;
    int successes = 0;
    bool operator==(const RunStats&) const = default;
};

struct RunRecord {
    std::string run_id;  // digest of the effective config, reproducible
    RunConfig config;
    Rubric rubric;
    std::optional<Rubric> efficacy_rubric;
    std::vector<AttemptRecord> attempts;  // ordered by attempt_index
    RunStats stats;
    bool operator==(const RunRecord&) const = default;
};

struct AggregateStats {
    double mean_improvement = 0.0;
    double mean_improvement_pct = 0.0;  // fraction
    bool operator==(const AggregateStats&) const = default;
};

// composite >= accept_threshold: accept; >= expand_threshold: expand;
// below: retool
Disposition decide(double composite, const RunConfig& cfg);

// Produces the next scored step: expansion rewrites the current concept,
// retooling regenerates from fresh words plus feedback. step is the 1-based
// ordinal of that kind within the attempt.
using RefineStep = std::function<std::pair<FullConcept, ScoreCard>(
    const FullConcept& current, const ScoreCard& current_card, int step)>;

// maps a scored step to the composite the disposition rules see; defaults
// to the creativity composite when absent
using GateFn = std::function<double(const FullConcept&, const ScoreCard&)>;

struct RefineOutcome {
    FullConcept chosen;  // best-scoring concept seen
    ScoreCard card;
    std::vector<TraceEntry> trace;
    int expansions = 0;
    int retools = 0;
};

// Disposition state machine. Expansion repeats while each pass improves by
// more than min_improvement and the budget allows; a non-improving expansion
// falls through to retooling (or accepts when it cleared the bar anyway).
// On budget exhaustion the best-scoring step wins. At most
// 1 + max_expansions + max_retools scored steps.
RefineOutcome refine(const FullConcept& initial, const ScoreCard& initial_card,
                     const RunConfig& cfg, const RefineStep& expand_step,
                     const RefineStep& retool_step, const GateFn& gate = {});

// Executes cfg.attempts attempts on a worker pool of cfg.parallelism
// threads. Sampling derives from (master_seed, attempt_index), so results
// are identical at any parallelism. Backend and parse errors become failed
// attempts; configuration and IO problems throw. The record is saved to
// cfg.output_file (when set) before returning.
RunRecord run(const RunConfig& cfg);

// Rounded-domain statistics: average and best are rounded to 2 decimals
// first, and improvement figures derive from the rounded values, matching
// how the reported tables relate to one another.
RunStats compute_stats(const std::vector<AttemptRecord>& attempts);

AggregateStats aggregate(const std::vector<RunStats>& runs);

// JSONL: a header line, one line per attempt, a stats line. parallelism and
// output_file are execution details and are not persisted, so files for the
// same run are byte-identical across worker counts and output paths.
void save_run(const RunRecord& record, const std::string& path);
RunRecord load_run(const std::string& path);

// "run\taverage\tbest\tfailures" rows (with header) into RunStats;
// improvement fields recomputed from the rounded columns
std::vector<RunStats> load_stats_tsv(const std::string& path);

}  // namespace cairdd

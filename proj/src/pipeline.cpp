#include "cairdd/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "cairdd/prompts.hpp"
#include "text_util.hpp"

namespace cairdd {

namespace {

double round2(double v) { return std::llround(v * 100.0) / 100.0; }

constexpr const char* kEpochTimestamp = "1970-01-01T00:00:00Z";

std::string iso_utc_now() {
    std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// enum <-> string maps used by the JSONL schema

const char* to_string(SeedOrigin o) {
    switch (o) {
        case SeedOrigin::sampled: return "sampled";
        case SeedOrigin::user_supplied: return "user_supplied";
        default: return "fuzzed";
    }
}

SeedOrigin seed_origin_from(const std::string& s) {
    if (s == "sampled") return SeedOrigin::sampled;
    if (s == "user_supplied") return SeedOrigin::user_supplied;
    if (s == "fuzzed") return SeedOrigin::fuzzed;
    throw SchemaError("unknown seed origin: " + s);
}

const char* to_string(RubricSource s) {
    switch (s) {
        case RubricSource::generated: return "generated";
        case RubricSource::baseline: return "baseline";
        default: return "file";
    }
}

RubricSource rubric_source_from(const std::string& s) {
    if (s == "generated") return RubricSource::generated;
    if (s == "baseline") return RubricSource::baseline;
    if (s == "file") return RubricSource::file;
    throw SchemaError("unknown rubric source: " + s);
}

const char* to_string(ScoreMode m) {
    return m == ScoreMode::mean ? "mean" : "max_normalized";
}

ScoreMode score_mode_from(const std::string& s) {
    if (s == "mean") return ScoreMode::mean;
    if (s == "max_normalized") return ScoreMode::max_normalized;
    throw SchemaError("unknown score mode: " + s);
}

const char* to_string(BackendKind k) {
    return k == BackendKind::stub ? "stub" : "http_openai_compatible";
}

BackendKind backend_kind_from(const std::string& s) {
    if (s == "stub") return BackendKind::stub;
    if (s == "http_openai_compatible") return BackendKind::http_openai_compatible;
    throw SchemaError("unknown backend kind: " + s);
}

const char* to_string(Disposition d) {
    switch (d) {
        case Disposition::accept: return "accept";
        case Disposition::expand: return "expand";
        default: return "retool";
    }
}

Disposition disposition_from(const std::string& s) {
    if (s == "accept") return Disposition::accept;
    if (s == "expand") return Disposition::expand;
    if (s == "retool") return Disposition::retool;
    throw SchemaError("unknown disposition: " + s);
}

const char* to_string(AttemptStatus s) {
    return s == AttemptStatus::success ? "success" : "failure";
}

AttemptStatus attempt_status_from(const std::string& s) {
    if (s == "success") return AttemptStatus::success;
    if (s == "failure") return AttemptStatus::failure;
    throw SchemaError("unknown attempt status: " + s);
}

const char* to_string(FailureKind k) {
    switch (k) {
        case FailureKind::none: return "none";
        case FailureKind::backend_unavailable: return "backend_unavailable";
        default: return "parse_failure";
    }
}

FailureKind failure_kind_from(const std::string& s) {
    if (s == "none") return FailureKind::none;
    if (s == "backend_unavailable") return FailureKind::backend_unavailable;
    if (s == "parse_failure") return FailureKind::parse_failure;
    throw SchemaError("unknown failure kind: " + s);
}

}  // namespace

// JSONL value conversions. Kept in this translation unit; the run file is
// the only place these structures are serialized.

void to_json(nlohmann::json& j, const SeedWordSet& s) {
    j = nlohmann::json{{"words", s.words},
                       {"origin", to_string(s.origin)},
                       {"master_seed", s.master_seed},
                       {"attempt_index", s.attempt_index}};
}

void from_json(const nlohmann::json& j, SeedWordSet& s) {
    j.at("words").get_to(s.words);
    s.origin = seed_origin_from(j.at("origin").get<std::string>());
    j.at("master_seed").get_to(s.master_seed);
    j.at("attempt_index").get_to(s.attempt_index);
}

void to_json(nlohmann::json& j, const ConceptIdea& c) {
    j = nlohmann::json{{"text", c.text}, {"seed", c.seed}, {"ordinal", c.ordinal}};
}

void from_json(const nlohmann::json& j, ConceptIdea& c) {
    j.at("text").get_to(c.text);
    j.at("seed").get_to(c.seed);
    j.at("ordinal").get_to(c.ordinal);
}

void to_json(nlohmann::json& j, const Chapter& c) {
    j = nlohmann::json{{"index", c.index}, {"title", c.title}, {"summary", c.summary}};
}

void from_json(const nlohmann::json& j, Chapter& c) {
    j.at("index").get_to(c.index);
    j.at("title").get_to(c.title);
    j.at("summary").get_to(c.summary);
}

void to_json(nlohmann::json& j, const FullConcept& c) {
    j = nlohmann::json{
        {"idea", c.idea}, {"title", c.title}, {"chapters", c.chapters}, {"raw", c.raw}};
}

void from_json(const nlohmann::json& j, FullConcept& c) {
    j.at("idea").get_to(c.idea);
    j.at("title").get_to(c.title);
    j.at("chapters").get_to(c.chapters);
    j.at("raw").get_to(c.raw);
}

void to_json(nlohmann::json& j, const ScoreCard& c) {
    j = nlohmann::json{{"category_scores", c.category_scores},
                       {"composite", c.composite},
                       {"mode", to_string(c.mode)},
                       {"raw", c.raw},
                       {"mismatch_flag", c.mismatch_flag}};
    if (c.stated_composite) j["stated_composite"] = *c.stated_composite;
}

void from_json(const nlohmann::json& j, ScoreCard& c) {
    j.at("category_scores").get_to(c.category_scores);
    j.at("composite").get_to(c.composite);
    c.mode = score_mode_from(j.at("mode").get<std::string>());
    j.at("raw").get_to(c.raw);
    j.at("mismatch_flag").get_to(c.mismatch_flag);
    if (j.contains("stated_composite") && !j["stated_composite"].is_null())
        c.stated_composite = j["stated_composite"].get<double>();
    else
        c.stated_composite.reset();
}

void to_json(nlohmann::json& j, const RubricCategory& c) {
    j = nlohmann::json{{"name", c.name},
                       {"description", c.description},
                       {"min_score", c.min_score},
                       {"max_score", c.max_score}};
}

void from_json(const nlohmann::json& j, RubricCategory& c) {
    j.at("name").get_to(c.name);
    j.at("description").get_to(c.description);
    j.at("min_score").get_to(c.min_score);
    j.at("max_score").get_to(c.max_score);
}

void to_json(nlohmann::json& j, const Rubric& r) {
    j = nlohmann::json{{"categories", r.categories},
                       {"source", to_string(r.source)},
                       {"task_description", r.task_description}};
}

void from_json(const nlohmann::json& j, Rubric& r) {
    j.at("categories").get_to(r.categories);
    r.source = rubric_source_from(j.at("source").get<std::string>());
    j.at("task_description").get_to(r.task_description);
}

void to_json(nlohmann::json& j, const FocusArea& f) {
    j = nlohmann::json{{"genre", f.genre},
                       {"requirements", f.requirements},
                       {"suggestions", f.suggestions}};
}

void from_json(const nlohmann::json& j, FocusArea& f) {
    j.at("genre").get_to(f.genre);
    j.at("requirements").get_to(f.requirements);
    j.at("suggestions").get_to(f.suggestions);
}

void to_json(nlohmann::json& j, const BackendConfig& b) {
    j = nlohmann::json{{"kind", to_string(b.kind)},
                       {"endpoint", b.endpoint},
                       {"model", b.model},
                       {"temperature", b.temperature},
                       {"max_tokens", b.max_tokens},
                       {"top_p", b.top_p},
                       {"retry_max", b.retry_max},
                       {"retry_base_delay_ms", b.retry_base_delay.count()}};
}

void from_json(const nlohmann::json& j, BackendConfig& b) {
    b.kind = backend_kind_from(j.at("kind").get<std::string>());
    j.at("endpoint").get_to(b.endpoint);
    j.at("model").get_to(b.model);
    j.at("temperature").get_to(b.temperature);
    j.at("max_tokens").get_to(b.max_tokens);
    j.at("top_p").get_to(b.top_p);
    j.at("retry_max").get_to(b.retry_max);
    b.retry_base_delay = std::chrono::milliseconds(j.at("retry_base_delay_ms").get<long long>());
    b.stub.reset();
}

// parallelism and output_file are execution details, not part of the run's
// identity; they are omitted here so run files and run ids are stable
// across worker counts and output paths.
void to_json(nlohmann::json& j, const RunConfig& c) {
    j = nlohmann::json{{"focus", c.focus},
                       {"attempts", c.attempts},
                       {"words_per_concept", c.words_per_concept},
                       {"master_seed", c.master_seed},
                       {"accept_threshold", c.accept_threshold},
                       {"expand_threshold", c.expand_threshold},
                       {"min_improvement", c.min_improvement},
                       {"max_expansions", c.max_expansions},
                       {"max_retools", c.max_retools},
                       {"refine_enabled", c.refine_enabled},
                       {"score_mode", to_string(c.score_mode)},
                       {"score_passes", c.score_passes},
                       {"backend", c.backend},
                       {"stub_table_file", c.stub_table_file},
                       {"wordlist_file", c.wordlist_file},
                       {"thesaurus_file", c.thesaurus_file},
                       {"rubric_file", c.rubric_file},
                       {"rubric_task", c.rubric_task},
                       {"rubric_baseline_file", c.rubric_baseline_file},
                       {"efficacy_rubric_file", c.efficacy_rubric_file},
                       {"normalize_timestamps", c.normalize_timestamps}};
}

void from_json(const nlohmann::json& j, RunConfig& c) {
    j.at("focus").get_to(c.focus);
    j.at("attempts").get_to(c.attempts);
    j.at("words_per_concept").get_to(c.words_per_concept);
    j.at("master_seed").get_to(c.master_seed);
    j.at("accept_threshold").get_to(c.accept_threshold);
    j.at("expand_threshold").get_to(c.expand_threshold);
    j.at("min_improvement").get_to(c.min_improvement);
    j.at("max_expansions").get_to(c.max_expansions);
    j.at("max_retools").get_to(c.max_retools);
    j.at("refine_enabled").get_to(c.refine_enabled);
    c.score_mode = score_mode_from(j.at("score_mode").get<std::string>());
    j.at("score_passes").get_to(c.score_passes);
    j.at("backend").get_to(c.backend);
    j.at("stub_table_file").get_to(c.stub_table_file);
    j.at("wordlist_file").get_to(c.wordlist_file);
    j.at("thesaurus_file").get_to(c.thesaurus_file);
    j.at("rubric_file").get_to(c.rubric_file);
    j.at("rubric_task").get_to(c.rubric_task);
    j.at("rubric_baseline_file").get_to(c.rubric_baseline_file);
    j.at("efficacy_rubric_file").get_to(c.efficacy_rubric_file);
    j.at("normalize_timestamps").get_to(c.normalize_timestamps);
    c.parallelism = 1;
    c.output_file.clear();
}

void to_json(nlohmann::json& j, const TraceEntry& t) {
    j = nlohmann::json{{"disposition", to_string(t.disposition)}, {"composite", t.composite}};
}

void from_json(const nlohmann::json& j, TraceEntry& t) {
    t.disposition = disposition_from(j.at("disposition").get<std::string>());
    j.at("composite").get_to(t.composite);
}

void to_json(nlohmann::json& j, const AttemptRecord& a) {
    j = nlohmann::json{{"attempt_index", a.attempt_index},
                       {"seed", a.seed},
                       {"idea", a.idea},
                       {"trace", a.trace},
                       {"status", to_string(a.status)},
                       {"failure_kind", to_string(a.failure_kind)},
                       {"error", a.error},
                       {"started_at", a.started_at},
                       {"finished_at", a.finished_at},
                       {"expansions", a.expansions},
                       {"retools", a.retools}};
    if (a.final_concept) j["concept"] = *a.final_concept;
    if (a.card) j["card"] = *a.card;
    if (a.efficacy_card) j["efficacy_card"] = *a.efficacy_card;
}

void from_json(const nlohmann::json& j, AttemptRecord& a) {
    j.at("attempt_index").get_to(a.attempt_index);
    j.at("seed").get_to(a.seed);
    j.at("idea").get_to(a.idea);
    j.at("trace").get_to(a.trace);
    a.status = attempt_status_from(j.at("status").get<std::string>());
    a.failure_kind = failure_kind_from(j.at("failure_kind").get<std::string>());
    j.at("error").get_to(a.error);
    j.at("started_at").get_to(a.started_at);
    j.at("finished_at").get_to(a.finished_at);
    j.at("expansions").get_to(a.expansions);
    j.at("retools").get_to(a.retools);
    a.final_concept.reset();
    a.card.reset();
    a.efficacy_card.reset();
    if (j.contains("concept")) a.final_concept = j["concept"].get<FullConcept>();
    if (j.contains("card")) a.card = j["card"].get<ScoreCard>();
    if (j.contains("efficacy_card")) a.efficacy_card = j["efficacy_card"].get<ScoreCard>();
}

void to_json(nlohmann::json& j, const RunStats& s) {
    j = nlohmann::json{{"average", s.average},
                       {"best", s.best},
                       {"best_attempt_index", s.best_attempt_index},
                       {"improvement", s.improvement},
                       {"improvement_pct", s.improvement_pct},
                       {"failures", s.failures},
                       {"successes", s.successes}};
}

void from_json(const nlohmann::json& j, RunStats& s) {
    j.at("average").get_to(s.average);
    j.at("best").get_to(s.best);
    j.at("best_attempt_index").get_to(s.best_attempt_index);
    j.at("improvement").get_to(s.improvement);
    j.at("improvement_pct").get_to(s.improvement_pct);
    j.at("failures").get_to(s.failures);
    j.at("successes").get_to(s.successes);
}

Disposition decide(double composite, const RunConfig& cfg) {
    if (composite >= cfg.accept_threshold) return Disposition::accept;
    if (composite >= cfg.expand_threshold) return Disposition::expand;
    return Disposition::retool;
}

RefineOutcome refine(const FullConcept& initial, const ScoreCard& initial_card,
                     const RunConfig& cfg, const RefineStep& expand_step,
                     const RefineStep& retool_step, const GateFn& gate) {
    if (!(cfg.expand_threshold < cfg.accept_threshold))
        throw UsageError("refine: expand_threshold must be below accept_threshold");
    if (cfg.max_expansions < 0 || cfg.max_retools < 0)
        throw UsageError("refine: step budgets must be >= 0");
    if (!expand_step || !retool_step) throw UsageError("refine: step callbacks are required");

    auto gate_of = [&](const FullConcept& c, const ScoreCard& s) {
        return gate ? gate(c, s) : s.composite;
    };

    RefineOutcome out;
    FullConcept current = initial;
    ScoreCard current_card = initial_card;
    double current_gate = gate_of(current, current_card);

    // best scored step seen, for budget exhaustion; ties keep the earlier one
    FullConcept best = current;
    ScoreCard best_card = current_card;
    double best_gate = current_gate;
    auto consider = [&](const FullConcept& c, const ScoreCard& s, double g) {
        if (g > best_gate) {
            best = c;
            best_card = s;
            best_gate = g;
        }
    };

    for (;;) {
        Disposition d = decide(current_gate, cfg);
        if (d == Disposition::accept) {
            out.trace.push_back({Disposition::accept, current_gate});
            out.chosen = std::move(current);
            out.card = std::move(current_card);
            return out;
        }
        if (d == Disposition::expand) {
            out.trace.push_back({Disposition::expand, current_gate});
            if (out.expansions >= cfg.max_expansions) break;
            ++out.expansions;
            auto [next, next_card] = expand_step(current, current_card, out.expansions);
            double next_gate = gate_of(next, next_card);
            consider(next, next_card, next_gate);
            if (next_gate > current_gate + cfg.min_improvement) {
                current = std::move(next);
                current_card = std::move(next_card);
                current_gate = next_gate;
                continue;
            }
            // the expansion stalled; it can still clear the accept bar
            if (next_gate >= cfg.accept_threshold) {
                out.trace.push_back({Disposition::accept, next_gate});
                out.chosen = std::move(next);
                out.card = std::move(next_card);
                return out;
            }
            out.trace.push_back({Disposition::retool, next_gate});
            if (out.retools >= cfg.max_retools) break;
            ++out.retools;
            auto [re, re_card] = retool_step(next, next_card, out.retools);
            current_gate = gate_of(re, re_card);
            consider(re, re_card, current_gate);
            current = std::move(re);
            current_card = std::move(re_card);
            continue;
        }
        out.trace.push_back({Disposition::retool, current_gate});
        if (out.retools >= cfg.max_retools) break;
        ++out.retools;
        auto [re, re_card] = retool_step(current, current_card, out.retools);
        current_gate = gate_of(re, re_card);
        consider(re, re_card, current_gate);
        current = std::move(re);
        current_card = std::move(re_card);
    }

    out.chosen = std::move(best);
    out.card = std::move(best_card);
    return out;
}

RunStats compute_stats(const std::vector<AttemptRecord>& attempts) {
    RunStats st;
    double sum = 0.0;
    double best_raw = 0.0;
    for (const auto& a : attempts) {
        if (a.status != AttemptStatus::success || !a.card) {
            ++st.failures;
            continue;
        }
        double c = a.card->composite;
        sum += c;
        if (st.successes == 0 || c > best_raw ||
            (c == best_raw && a.attempt_index < st.best_attempt_index)) {
            best_raw = c;
            st.best_attempt_index = a.attempt_index;
        }
        ++st.successes;
    }
    if (st.successes == 0) throw NoSuccesses("no successful attempts to aggregate");
    // round first, then derive: the improvement figures relate the rounded
    // columns, not the raw sums
    st.average = std::llround(sum * 100.0 / st.successes) / 100.0;
    st.best = round2(best_raw);
    st.improvement = st.best - st.average;
    st.improvement_pct = st.average > 0.0 ? st.improvement / st.average : 0.0;
    return st;
}

AggregateStats aggregate(const std::vector<RunStats>& runs) {
    if (runs.empty()) throw EmptyInput("aggregate: no runs");
    AggregateStats agg;
    for (const auto& r : runs) {
        agg.mean_improvement += r.improvement;
        agg.mean_improvement_pct += r.improvement_pct;
    }
    agg.mean_improvement /= static_cast<double>(runs.size());
    agg.mean_improvement_pct /= static_cast<double>(runs.size());
    return agg;
}

namespace {

std::string make_run_id(const RunConfig& cfg) {
    nlohmann::json j = cfg;
    return "run-" + digest_hex(fnv1a(j.dump()));
}

void fail_attempt(AttemptRecord& rec, FailureKind kind, const std::string& what) {
    rec.status = AttemptStatus::failure;
    rec.failure_kind = kind;
    rec.error = what;
}

// one uniformly random word not yet used this attempt; falls back to the
// whole list when everything has been used
std::string draw_fresh_word(const WordList& list, const std::set<std::string>& used,
                            std::mt19937_64& rng) {
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < list.words.size(); ++i)
        if (!used.count(list.words[i])) pool.push_back(i);
    if (pool.empty()) return list.words[bounded_rand(rng, list.words.size())];
    return list.words[pool[bounded_rand(rng, pool.size())]];
}

std::vector<std::pair<double, double>> rubric_ranges(const Rubric& r) {
    std::vector<std::pair<double, double>> v;
    v.reserve(r.categories.size());
    for (const auto& c : r.categories)
        v.emplace_back(c.min_score, c.max_score);
    return v;
}

AttemptRecord run_attempt(const RunConfig& cfg, const BackendConfig& backend,
                          const WordList& words, const Rubric& rubric,
                          const std::optional<Rubric>& efficacy, int index) {
    AttemptRecord rec;
    rec.attempt_index = index;
    rec.started_at = cfg.normalize_timestamps ? kEpochTimestamp : iso_utc_now();
    try {
        SeedWordSet seed = sample_seed_words(
            words, static_cast<std::size_t>(cfg.words_per_concept), cfg.master_seed,
            static_cast<std::uint32_t>(index));
        rec.seed = seed;
        std::set<std::string> used(seed.words.begin(), seed.words.end());

        ConceptIdea idea = generate_idea(backend, cfg.focus.genre, seed, 1,
                                         cfg.focus.requirements, cfg.focus.suggestions);
        rec.idea = idea.text;
        FullConcept draft = generate_concept(backend, idea);
        ScoreCard card =
            score_concept(backend, rubric, draft, cfg.score_passes, cfg.score_mode);

        GateFn gate;
        if (efficacy)
            gate = [&](const FullConcept& c, const ScoreCard& s) {
                ScoreCard e =
                    score_concept(backend, *efficacy, c, cfg.score_passes, cfg.score_mode);
                return std::min(s.composite, e.composite);
            };

        RefineOutcome out;
        if (cfg.refine_enabled) {
            auto expand_step = [&](const FullConcept& current, const ScoreCard&,
                                   int step) -> std::pair<FullConcept, ScoreCard> {
                std::mt19937_64 rng(derive_seed(cfg.master_seed,
                                                static_cast<std::uint64_t>(index),
                                                100 + static_cast<std::uint64_t>(step)));
                SeedWordSet extra;
                extra.words.push_back(draw_fresh_word(words, used, rng));
                extra.origin = SeedOrigin::sampled;
                extra.master_seed = cfg.master_seed;
                extra.attempt_index = static_cast<std::uint32_t>(index);
                used.insert(extra.words.front());

                RenderedPrompt p = render_expansion_prompt(render_concept(current), extra);
                ChatResponse r = complete(backend, {p.system, {p.user}});
                FullConcept next = parse_concept(r.text);
                next.idea = current.idea;
                ScoreCard next_card =
                    score_concept(backend, rubric, next, cfg.score_passes, cfg.score_mode);
                return {std::move(next), std::move(next_card)};
            };

            auto retool_step = [&](const FullConcept&, const ScoreCard& current_card,
                                   int step) -> std::pair<FullConcept, ScoreCard> {
                std::uint64_t sub_seed =
                    derive_seed(cfg.master_seed, static_cast<std::uint64_t>(index),
                                200 + static_cast<std::uint64_t>(step));
                SeedWordSet fresh = sample_seed_words(
                    words, static_cast<std::size_t>(cfg.words_per_concept), sub_seed,
                    static_cast<std::uint32_t>(index));
                for (const auto& w : fresh.words) used.insert(w);

                std::string feedback = render_retool_feedback(current_card, rubric);
                ConceptIdea next_idea =
                    generate_idea(backend, cfg.focus.genre, fresh, step + 1,
                                  cfg.focus.requirements, cfg.focus.suggestions, feedback);
                FullConcept next = generate_concept(backend, next_idea);
                ScoreCard next_card =
                    score_concept(backend, rubric, next, cfg.score_passes, cfg.score_mode);
                return {std::move(next), std::move(next_card)};
            };

            out = refine(draft, card, cfg, expand_step, retool_step, gate);
        } else {
            double g = gate ? gate(draft, card) : card.composite;
            out.chosen = draft;
            out.card = card;
            out.trace.push_back({decide(g, cfg), g});
        }

        rec.final_concept = std::move(out.chosen);
        rec.card = std::move(out.card);
        rec.trace = std::move(out.trace);
        rec.expansions = out.expansions;
        rec.retools = out.retools;
        if (efficacy)
            rec.efficacy_card = score_concept(backend, *efficacy, *rec.final_concept,
                                              cfg.score_passes, cfg.score_mode);
        rec.status = AttemptStatus::success;
        rec.failure_kind = FailureKind::none;
    } catch (const BackendUnavailable& e) {
        fail_attempt(rec, FailureKind::backend_unavailable, e.what());
    } catch (const ProtocolError& e) {
        fail_attempt(rec, FailureKind::backend_unavailable, e.what());
    } catch (const ParseFailure& e) {
        fail_attempt(rec, FailureKind::parse_failure, e.what());
    } catch (const EmptyResponse& e) {
        fail_attempt(rec, FailureKind::parse_failure, e.what());
    }
    rec.finished_at = cfg.normalize_timestamps ? kEpochTimestamp : iso_utc_now();
    return rec;
}

}  // namespace

RunRecord run(const RunConfig& cfg) {
    if (cfg.attempts < 1) throw UsageError("run: attempts must be >= 1");
    if (cfg.words_per_concept < 1) throw UsageError("run: words_per_concept must be >= 1");
    if (cfg.parallelism < 1) throw UsageError("run: parallelism must be >= 1");
    if (cfg.score_passes < 1) throw UsageError("run: score_passes must be >= 1");
    if (cfg.max_expansions < 0 || cfg.max_retools < 0)
        throw UsageError("run: step budgets must be >= 0");
    if (cfg.min_improvement < 0.0) throw UsageError("run: min_improvement must be >= 0");
    if (!(cfg.expand_threshold < cfg.accept_threshold))
        throw UsageError("run: expand_threshold must be below accept_threshold");
    if (cfg.wordlist_file.empty()) throw UsageError("run: wordlist_file is required");
    if (cfg.rubric_file.empty() && (cfg.rubric_task.empty() || cfg.rubric_baseline_file.empty()))
        throw UsageError(
            "run: set rubric_file, or rubric_task plus rubric_baseline_file to generate one");

    WordList words = load_wordlist(cfg.wordlist_file);

    BackendConfig backend = cfg.backend;
    if (backend.kind == BackendKind::stub && !backend.stub && !cfg.stub_table_file.empty())
        backend.stub = load_stub_table(cfg.stub_table_file);

    Rubric rubric;
    if (!cfg.rubric_file.empty())
        rubric = load_rubric_file(cfg.rubric_file);
    else
        rubric = generate_rubric(backend, cfg.rubric_task,
                                 read_text_file(cfg.rubric_baseline_file));

    std::vector<int> maxes;
    for (const auto& c : rubric.categories) maxes.push_back(c.max_score);
    double top = composite(maxes, rubric_ranges(rubric), cfg.score_mode);
    if (cfg.accept_threshold > top + 1e-9)
        throw UsageError("run: accept_threshold exceeds the rubric's best composite");

    std::optional<Rubric> efficacy;
    if (!cfg.efficacy_rubric_file.empty())
        efficacy = load_rubric_file(cfg.efficacy_rubric_file);

    const int n = cfg.attempts;
    std::vector<AttemptRecord> attempts(n);
    std::atomic<int> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr fatal;
    std::mutex fatal_mu;

    auto worker = [&]() {
        for (;;) {
            int i = next.fetch_add(1);
            if (i >= n || failed.load()) return;
            try {
                attempts[i] = run_attempt(cfg, backend, words, rubric, efficacy, i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(fatal_mu);
                if (!fatal) fatal = std::current_exception();
                failed.store(true);
                return;
            }
        }
    };

    int pool = std::min(cfg.parallelism, n);
    if (pool <= 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        threads.reserve(pool);
        for (int t = 0; t < pool; ++t) threads.emplace_back(worker);
        for (auto& th : threads) th.join();
    }
    if (fatal) std::rethrow_exception(fatal);

    RunRecord rec;
    rec.run_id = make_run_id(cfg);
    rec.config = cfg;
    rec.rubric = rubric;
    rec.efficacy_rubric = efficacy;
    rec.attempts = std::move(attempts);
    rec.stats = compute_stats(rec.attempts);
    if (!cfg.output_file.empty()) save_run(rec, cfg.output_file);
    return rec;
}

void save_run(const RunRecord& record, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write run file: " + path);

    nlohmann::json header{{"type", "header"},
                          {"schema_version", 1},
                          {"run_id", record.run_id},
                          {"config", record.config},
                          {"rubric", record.rubric}};
    if (record.efficacy_rubric) header["efficacy_rubric"] = *record.efficacy_rubric;
    out << header.dump() << '\n';

    for (const auto& a : record.attempts) {
        nlohmann::json j = a;
        j["type"] = "attempt";
        out << j.dump() << '\n';
    }

    nlohmann::json stats = record.stats;
    stats["type"] = "stats";
    out << stats.dump() << '\n';
    if (!out) throw IoError("failed writing run file: " + path);
}

RunRecord load_run(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open run file: " + path);

    std::vector<nlohmann::json> lines;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw SchemaError("run file " + path + ": invalid json on line " +
                              std::to_string(line_no));
        lines.push_back(std::move(j));
    }
    if (lines.size() < 2) throw SchemaError("run file " + path + ": truncated");

    try {
        RunRecord rec;
        const nlohmann::json& header = lines.front();
        if (header.value("type", "") != "header")
            throw SchemaError("run file " + path + ": first line is not a header");
        if (header.at("schema_version").get<int>() != 1)
            throw SchemaError("run file " + path + ": unsupported schema_version");
        header.at("run_id").get_to(rec.run_id);
        rec.config = header.at("config").get<RunConfig>();
        rec.rubric = header.at("rubric").get<Rubric>();
        if (header.contains("efficacy_rubric"))
            rec.efficacy_rubric = header["efficacy_rubric"].get<Rubric>();

        const nlohmann::json& tail = lines.back();
        if (tail.value("type", "") != "stats")
            throw SchemaError("run file " + path + ": missing stats line");
        rec.stats = tail.get<RunStats>();

        for (std::size_t i = 1; i + 1 < lines.size(); ++i) {
            if (lines[i].value("type", "") != "attempt")
                throw SchemaError("run file " + path + ": unexpected line type");
            rec.attempts.push_back(lines[i].get<AttemptRecord>());
        }
        if (static_cast<int>(rec.attempts.size()) != rec.config.attempts)
            throw SchemaError("run file " + path + ": attempt count does not match config");
        return rec;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError("run file " + path + ": " + e.what());
    }
}

std::vector<RunStats> load_stats_tsv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open stats table: " + path);

    std::vector<RunStats> out;
    std::string line;
    std::size_t line_no = 0;
    bool first_row = true;
    while (std::getline(in, line)) {
        ++line_no;
        std::string t = text::trim(line);
        if (t.empty() || t[0] == '#') continue;

        std::istringstream row(t);
        std::string run_col;
        double average = 0.0, best = 0.0;
        int failures = 0;
        row >> run_col >> average >> best >> failures;
        if (!row) {
            // a single leading header row is allowed
            if (first_row) {
                first_row = false;
                continue;
            }
            throw FormatError("bad stats row in " + path, line_no);
        }
        first_row = false;

        RunStats st;
        st.average = average;
        st.best = best;
        st.failures = failures;
        st.improvement = st.best - st.average;
        st.improvement_pct = st.average > 0.0 ? st.improvement / st.average : 0.0;
        out.push_back(st);
    }
    if (out.empty()) throw FormatError("no stats rows in " + path, line_no);
    return out;
}

}  // namespace cairdd

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "cairdd/pipeline.hpp"
#include "cairdd/prompts.hpp"
#include "test_support.hpp"

using namespace cairdd;
using testutil::data_path;
using testutil::read_file;

namespace {

FullConcept make_concept(const std::string& title) {
    FullConcept c;
    c.title = title;
    c.chapters = {{1, "Opening", "Something happens."}};
    return c;
}

ScoreCard make_card(double comp) {
    ScoreCard card;
    card.category_scores = {4, 4, 3, 4};
    card.composite = comp;
    return card;
}

RunConfig refine_config() {
    RunConfig cfg;
    cfg.accept_threshold = 3.9;
    cfg.expand_threshold = 3.5;
    cfg.min_improvement = 0.05;
    cfg.max_expansions = 3;
    cfg.max_retools = 2;
    return cfg;
}

// scripted step: hands out (concept, card) pairs in call order
struct ScriptedStep {
    std::string label;
    std::vector<double> scores;
    int calls = 0;
    std::pair<FullConcept, ScoreCard> operator()(const FullConcept&, const ScoreCard&, int) {
        REQUIRE(calls < static_cast<int>(scores.size()));
        double s = scores[static_cast<std::size_t>(calls)];
        ++calls;
        return {make_concept(label + " " + std::to_string(calls)), make_card(s)};
    }
};

AttemptRecord success_record(int index, double comp) {
    AttemptRecord rec;
    rec.attempt_index = index;
    rec.final_concept = make_concept("c" + std::to_string(index));
    rec.card = make_card(comp);
    rec.trace = {{Disposition::accept, comp}};
    rec.status = AttemptStatus::success;
    return rec;
}

RunConfig base_run_config(int attempts) {
    RunConfig cfg;
    cfg.focus.genre = "science fiction";
    cfg.focus.requirements = {"feature a coastal city"};
    cfg.focus.suggestions = {"a reluctant narrator"};
    cfg.attempts = attempts;
    cfg.words_per_concept = 3;
    cfg.master_seed = 11;
    cfg.wordlist_file = data_path("wordlist_small.txt");
    cfg.rubric_file = data_path("rubric_creativity.txt");
    cfg.backend.retry_max = 0;
    cfg.backend.retry_base_delay = std::chrono::milliseconds(0);
    cfg.normalize_timestamps = true;
    return cfg;
}

}  // namespace

TEST_CASE("decide is sharp at both thresholds") {
    RunConfig cfg = refine_config();
    CHECK(decide(4.0, cfg) == Disposition::accept);
    CHECK(decide(3.9, cfg) == Disposition::accept);  // boundary accepts
    CHECK(decide(3.8999, cfg) == Disposition::expand);
    CHECK(decide(3.5, cfg) == Disposition::expand);  // boundary expands
    CHECK(decide(3.4999, cfg) == Disposition::retool);
    CHECK(decide(0.0, cfg) == Disposition::retool);
}

TEST_CASE("refine accepts a strong initial concept without any step calls") {
    RunConfig cfg = refine_config();
    ScriptedStep expand{"exp", {}};
    ScriptedStep retool{"ret", {}};
    RefineOutcome out = refine(make_concept("initial"), make_card(3.95), cfg,
                               std::ref(expand), std::ref(retool));
    CHECK(out.trace == std::vector<TraceEntry>{{Disposition::accept, 3.95}});
    CHECK(out.chosen.title == "initial");
    CHECK(out.card.composite == doctest::Approx(3.95));
    CHECK(out.expansions == 0);
    CHECK(out.retools == 0);
    CHECK(expand.calls == 0);
    CHECK(retool.calls == 0);
}

TEST_CASE("expansion runs while it keeps improving, then keeps the best") {
    RunConfig cfg = refine_config();
    cfg.max_retools = 0;
    ScriptedStep expand{"exp", {3.8, 3.7}};
    ScriptedStep retool{"ret", {}};
    RefineOutcome out = refine(make_concept("initial"), make_card(3.6), cfg,
                               std::ref(expand), std::ref(retool));
    CHECK(out.trace == std::vector<TraceEntry>{{Disposition::expand, 3.6},
                                               {Disposition::expand, 3.8},
                                               {Disposition::retool, 3.7}});
    CHECK(out.card.composite == doctest::Approx(3.8));
    CHECK(out.chosen.title == "exp 1");
    CHECK(out.expansions == 2);
    CHECK(out.retools == 0);
    CHECK(retool.calls == 0);
}

TEST_CASE("a stalled expansion that clears the accept bar is accepted") {
    RunConfig cfg = refine_config();
    ScriptedStep expand{"exp", {3.91}};  // gain 0.03 <= min_improvement, but >= 3.9
    ScriptedStep retool{"ret", {}};
    RefineOutcome out = refine(make_concept("initial"), make_card(3.88), cfg,
                               std::ref(expand), std::ref(retool));
    CHECK(out.trace == std::vector<TraceEntry>{{Disposition::expand, 3.88},
                                               {Disposition::accept, 3.91}});
    CHECK(out.chosen.title == "exp 1");
    CHECK(out.expansions == 1);
    CHECK(out.retools == 0);
}

TEST_CASE("a weak concept with no retool budget comes back unchanged") {
    RunConfig cfg = refine_config();
    cfg.max_retools = 0;
    ScriptedStep expand{"exp", {}};
    ScriptedStep retool{"ret", {}};
    RefineOutcome out = refine(make_concept("initial"), make_card(3.2), cfg,
                               std::ref(expand), std::ref(retool));
    CHECK(out.trace == std::vector<TraceEntry>{{Disposition::retool, 3.2}});
    CHECK(out.chosen.title == "initial");
    CHECK(out.card.composite == doctest::Approx(3.2));
    CHECK(retool.calls == 0);
}

TEST_CASE("retooling can lift a weak concept straight to acceptance") {
    RunConfig cfg = refine_config();
    ScriptedStep expand{"exp", {}};
    ScriptedStep retool{"ret", {3.95}};
    RefineOutcome out = refine(make_concept("initial"), make_card(3.2), cfg,
                               std::ref(expand), std::ref(retool));
    CHECK(out.trace == std::vector<TraceEntry>{{Disposition::retool, 3.2},
                                               {Disposition::accept, 3.95}});
    CHECK(out.chosen.title == "ret 1");
    CHECK(out.expansions == 0);
    CHECK(out.retools == 1);
}

TEST_CASE("budget exhaustion falls back to the best scored step") {
    RunConfig cfg = refine_config();
    cfg.max_retools = 1;
    // expansion stalls at 3.62, retool digs a hole at 3.3
    ScriptedStep expand{"exp", {3.62}};
    ScriptedStep retool{"ret", {3.3}};
    RefineOutcome out = refine(make_concept("initial"), make_card(3.6), cfg,
                               std::ref(expand), std::ref(retool));
    CHECK(out.trace == std::vector<TraceEntry>{{Disposition::expand, 3.6},
                                               {Disposition::retool, 3.62},
                                               {Disposition::retool, 3.3}});
    CHECK(out.chosen.title == "exp 1");
    CHECK(out.card.composite == doctest::Approx(3.62));
    CHECK(out.expansions == 1);
    CHECK(out.retools == 1);
}

TEST_CASE("fallback ties keep the earliest scored step") {
    RunConfig cfg = refine_config();
    cfg.max_retools = 1;
    ScriptedStep expand{"exp", {}};
    ScriptedStep retool{"ret", {3.4}};  // exactly the initial score
    RefineOutcome out = refine(make_concept("initial"), make_card(3.4), cfg,
                               std::ref(expand), std::ref(retool));
    CHECK(out.trace == std::vector<TraceEntry>{{Disposition::retool, 3.4},
                                               {Disposition::retool, 3.4}});
    CHECK(out.chosen.title == "initial");
}

TEST_CASE("the gate maps scores before any disposition is taken") {
    RunConfig cfg = refine_config();
    cfg.max_retools = 0;
    ScriptedStep expand{"exp", {}};
    ScriptedStep retool{"ret", {}};
    GateFn gate = [](const FullConcept&, const ScoreCard& s) { return s.composite - 1.0; };
    RefineOutcome out = refine(make_concept("initial"), make_card(4.0), cfg,
                               std::ref(expand), std::ref(retool), gate);
    // 4.0 would accept on its own; the gate sees 3.0 and retools
    CHECK(out.trace == std::vector<TraceEntry>{{Disposition::retool, 3.0}});
    CHECK(out.card.composite == doctest::Approx(4.0));
}

TEST_CASE("refine validates its configuration") {
    ScriptedStep expand{"exp", {}};
    ScriptedStep retool{"ret", {}};
    RunConfig bad = refine_config();
    bad.expand_threshold = bad.accept_threshold;
    CHECK_THROWS_AS(refine(make_concept("c"), make_card(3.0), bad, std::ref(expand),
                           std::ref(retool)),
                    UsageError);
    bad = refine_config();
    bad.max_expansions = -1;
    CHECK_THROWS_AS(refine(make_concept("c"), make_card(3.0), bad, std::ref(expand),
                           std::ref(retool)),
                    UsageError);
    CHECK_THROWS_AS(refine(make_concept("c"), make_card(3.0), refine_config(), {},
                           std::ref(retool)),
                    UsageError);
}

TEST_CASE("compute_stats works in the rounded domain") {
    // 13 x 3.25 + 6 x 3.5 + 30 x 3.75 + 1 x 4.0 = 179.75 over 50 successes;
    // the raw mean 3.595 must round half away from zero to 3.60
    std::vector<AttemptRecord> attempts;
    std::vector<double> composites;
    for (int i = 0; i < 13; ++i) composites.push_back(3.25);
    for (int i = 0; i < 6; ++i) composites.push_back(3.5);
    for (int i = 0; i < 30; ++i) composites.push_back(3.75);
    composites.push_back(4.0);
    for (std::size_t i = 0; i < composites.size(); ++i)
        attempts.push_back(success_record(static_cast<int>(i), composites[i]));

    RunStats st = compute_stats(attempts);
    CHECK(st.successes == 50);
    CHECK(st.failures == 0);
    CHECK(st.average == doctest::Approx(3.60).epsilon(1e-12));
    CHECK(st.best == doctest::Approx(4.00).epsilon(1e-12));
    CHECK(st.best_attempt_index == 49);
    CHECK(st.improvement == doctest::Approx(0.40));
    CHECK(st.improvement_pct == doctest::Approx(0.40 / 3.60));
}

TEST_CASE("compute_stats counts failures and incomplete successes") {
    std::vector<AttemptRecord> attempts;
    attempts.push_back(success_record(0, 3.5));
    AttemptRecord failed;
    failed.attempt_index = 1;
    failed.status = AttemptStatus::failure;
    failed.failure_kind = FailureKind::parse_failure;
    attempts.push_back(failed);
    AttemptRecord cardless = success_record(2, 3.5);
    cardless.card.reset();  // success without a card cannot be aggregated
    attempts.push_back(cardless);

    RunStats st = compute_stats(attempts);
    CHECK(st.successes == 1);
    CHECK(st.failures == 2);

    CHECK_THROWS_AS(compute_stats({}), NoSuccesses);
    CHECK_THROWS_AS(compute_stats({failed}), NoSuccesses);
}

TEST_CASE("best ties resolve to the lowest attempt index in any order") {
    std::vector<AttemptRecord> attempts;
    attempts.push_back(success_record(12, 4.0));
    attempts.push_back(success_record(3, 4.0));
    attempts.push_back(success_record(7, 3.5));
    RunStats st = compute_stats(attempts);
    CHECK(st.best_attempt_index == 3);
}

TEST_CASE("aggregate averages improvements across runs") {
    CHECK_THROWS_AS(aggregate({}), EmptyInput);

    RunStats a;
    a.average = 3.0;
    a.best = 3.6;
    a.improvement = 0.6;
    a.improvement_pct = 0.2;
    RunStats b;
    b.average = 3.5;
    b.best = 3.5;
    b.improvement = 0.0;
    b.improvement_pct = 0.0;
    AggregateStats agg = aggregate({a, b});
    CHECK(agg.mean_improvement == doctest::Approx(0.3));
    CHECK(agg.mean_improvement_pct == doctest::Approx(0.1));
}

TEST_CASE("the archived run summaries reproduce the reported improvements") {
    std::vector<RunStats> runs = load_stats_tsv(data_path("run_summary.tsv"));
    REQUIRE(runs.size() == 11);

    const char* expected[][2] = {{"0.40", "11.1"}, {"0.34", "9.3"}, {"0.11", "3.0"},
                                 {"0.60", "17.6"}, {"0.17", "4.7"}, {"0.19", "5.3"},
                                 {"0.37", "10.9"}, {"0.14", "3.9"}, {"0.19", "5.3"},
                                 {"0.12", "3.3"},  {"0.43", "12.0"}};
    for (std::size_t i = 0; i < runs.size(); ++i) {
        char imp[32], pct[32];
        std::snprintf(imp, sizeof imp, "%.2f", runs[i].improvement);
        std::snprintf(pct, sizeof pct, "%.1f", runs[i].improvement_pct * 100.0);
        CHECK_MESSAGE(std::string(imp) == expected[i][0], "row ", i);
        CHECK_MESSAGE(std::string(pct) == expected[i][1], "row ", i);
    }

    AggregateStats agg = aggregate(runs);
    CHECK(std::fabs(agg.mean_improvement - 0.28) < 0.005);
    CHECK(std::fabs(agg.mean_improvement_pct * 100.0 - 7.9) < 0.1);
}

TEST_CASE("load_stats_tsv rejects malformed rows with their line number") {
    CHECK_THROWS_AS(load_stats_tsv(data_path("missing.tsv")), IoError);

    std::string path = "/tmp/cairdd_stats_bad.tsv";
    testutil::write_file(path, "run\taverage\tbest\tfailures\nr1\t3.5\t3.75\t0\nr2\tbad\t4\t0\n");
    try {
        load_stats_tsv(path);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.line == 3);
    }
    std::remove(path.c_str());
}

TEST_CASE("run executes attempts against the synthesizer stub") {
    RunConfig cfg = base_run_config(6);
    RunRecord rec = run(cfg);

    CHECK(rec.run_id.rfind("run-", 0) == 0);
    CHECK(rec.rubric.categories.size() == 4);
    CHECK(rec.rubric.source == RubricSource::file);
    REQUIRE(rec.attempts.size() == 6);
    for (int i = 0; i < 6; ++i) {
        const AttemptRecord& a = rec.attempts[static_cast<std::size_t>(i)];
        CHECK(a.attempt_index == i);
        CHECK(a.status == AttemptStatus::success);
        CHECK(a.seed.words.size() == 3);
        CHECK(a.seed.master_seed == cfg.master_seed);
        REQUIRE(a.card.has_value());
        REQUIRE(a.final_concept.has_value());
        CHECK_FALSE(a.trace.empty());
        CHECK(a.expansions <= cfg.max_expansions);
        CHECK(a.retools <= cfg.max_retools);
        CHECK(a.started_at == "1970-01-01T00:00:00Z");
    }
    CHECK(rec.stats.successes == 6);
    CHECK(rec.stats.failures == 0);
}

TEST_CASE("backend failures and parse failures are classified per attempt") {
    RunConfig cfg = base_run_config(4);
    WordList words = load_wordlist(cfg.wordlist_file);

    auto table = std::make_shared<StubTable>();  // synthesize stays on

    // attempt 2: the idea request fails as unavailable every time
    SeedWordSet seed2 = sample_seed_words(words, 3, cfg.master_seed, 2);
    RenderedPrompt idea2 = render_idea_prompt(cfg.focus.genre, seed2, 1,
                                              cfg.focus.requirements, cfg.focus.suggestions);
    table->fail_digests.insert(request_digest({idea2.system, {idea2.user}}));

    // attempt 1: the concept text comes back unusable
    SeedWordSet seed1 = sample_seed_words(words, 3, cfg.master_seed, 1);
    BackendConfig synth_only;
    ConceptIdea idea1 = generate_idea(synth_only, cfg.focus.genre, seed1, 1,
                                      cfg.focus.requirements, cfg.focus.suggestions);
    RenderedPrompt concept1 = render_concept_prompt(idea1.text);
    table->responses[request_digest({concept1.system, {concept1.user}})] = {
        "I cannot outline this story."};

    // attempt 0: the idea request returns blank text
    SeedWordSet seed0 = sample_seed_words(words, 3, cfg.master_seed, 0);
    RenderedPrompt idea0 = render_idea_prompt(cfg.focus.genre, seed0, 1,
                                              cfg.focus.requirements, cfg.focus.suggestions);
    table->responses[request_digest({idea0.system, {idea0.user}})] = {"   \n"};

    cfg.backend.stub = table;
    RunRecord rec = run(cfg);

    CHECK(rec.attempts[0].status == AttemptStatus::failure);
    CHECK(rec.attempts[0].failure_kind == FailureKind::parse_failure);
    CHECK(rec.attempts[1].status == AttemptStatus::failure);
    CHECK(rec.attempts[1].failure_kind == FailureKind::parse_failure);
    CHECK_FALSE(rec.attempts[1].idea.empty());  // failed after the idea stage
    CHECK(rec.attempts[2].status == AttemptStatus::failure);
    CHECK(rec.attempts[2].failure_kind == FailureKind::backend_unavailable);
    CHECK_FALSE(rec.attempts[2].error.empty());
    CHECK_FALSE(rec.attempts[2].card.has_value());
    CHECK(rec.attempts[3].status == AttemptStatus::success);
    CHECK(rec.stats.failures == 3);
    CHECK(rec.stats.successes == 1);
}

TEST_CASE("results are identical at any parallelism") {
    RunConfig cfg = base_run_config(10);
    RunRecord one = run(cfg);
    cfg.parallelism = 8;
    RunRecord eight = run(cfg);

    CHECK(one.run_id == eight.run_id);
    CHECK(one.attempts == eight.attempts);
    CHECK(one.stats == eight.stats);
    CHECK(one.rubric == eight.rubric);
}

TEST_CASE("a run record survives the JSONL round trip") {
    RunConfig cfg = base_run_config(3);
    cfg.focus.suggestions.push_back("an unreliable map");
    cfg.output_file = "/tmp/cairdd_roundtrip.jsonl";
    RunRecord rec = run(cfg);

    RunRecord loaded = load_run(cfg.output_file);
    CHECK(loaded.run_id == rec.run_id);
    CHECK(loaded.attempts == rec.attempts);
    CHECK(loaded.stats == rec.stats);
    CHECK(loaded.rubric == rec.rubric);
    CHECK_FALSE(loaded.efficacy_rubric.has_value());

    // execution details are not part of the persisted identity
    RunConfig expected = cfg;
    expected.parallelism = 1;
    expected.output_file.clear();
    CHECK(loaded.config == expected);

    // saving the loaded record reproduces the file byte for byte
    std::string again = "/tmp/cairdd_roundtrip2.jsonl";
    save_run(loaded, again);
    CHECK(read_file(again) == read_file(cfg.output_file));
    std::remove(cfg.output_file.c_str());
    std::remove(again.c_str());
}

TEST_CASE("an efficacy rubric scores every successful attempt twice") {
    RunConfig cfg = base_run_config(3);
    cfg.efficacy_rubric_file = data_path("rubric_creativity.txt");
    RunRecord rec = run(cfg);
    REQUIRE(rec.efficacy_rubric.has_value());
    for (const AttemptRecord& a : rec.attempts) {
        REQUIRE(a.status == AttemptStatus::success);
        CHECK(a.efficacy_card.has_value());
    }
}

TEST_CASE("load_run rejects files that do not match the schema") {
    CHECK_THROWS_AS(load_run("/nonexistent/run.jsonl"), IoError);

    std::string path = "/tmp/cairdd_badrun.jsonl";
    auto expect_schema_error = [&](const std::string& text) {
        testutil::write_file(path, text);
        CHECK_THROWS_AS(load_run(path), SchemaError);
    };
    expect_schema_error("{\"type\": \"header\"}\n");  // truncated
    expect_schema_error("not json\nnot json either\n");

    // a real file with the version bumped
    RunConfig cfg = base_run_config(2);
    cfg.output_file = path;
    run(cfg);
    std::string good = read_file(path);
    expect_schema_error([&] {
        std::string bad = good;
        std::size_t at = bad.find("\"schema_version\":1");
        REQUIRE(at != std::string::npos);
        bad.replace(at, 18, "\"schema_version\":2");
        return bad;
    }());

    // drop one attempt line: count no longer matches the config
    expect_schema_error([&] {
        std::vector<std::string> lines;
        std::size_t start = 0;
        while (start < good.size()) {
            std::size_t nl = good.find('\n', start);
            lines.push_back(good.substr(start, nl - start));
            start = nl == std::string::npos ? good.size() : nl + 1;
        }
        REQUIRE(lines.size() == 4);  // header, two attempts, stats
        return lines[0] + "\n" + lines[1] + "\n" + lines[3] + "\n";
    }());
    std::remove(path.c_str());
}

TEST_CASE("run validates its configuration up front") {
    RunConfig cfg = base_run_config(1);
    cfg.attempts = 0;
    CHECK_THROWS_AS(run(cfg), UsageError);

    cfg = base_run_config(1);
    cfg.wordlist_file.clear();
    CHECK_THROWS_AS(run(cfg), UsageError);

    cfg = base_run_config(1);
    cfg.rubric_file.clear();  // and no task/baseline pair either
    CHECK_THROWS_AS(run(cfg), UsageError);

    cfg = base_run_config(1);
    cfg.accept_threshold = 4.5;  // beyond the rubric's best composite
    CHECK_THROWS_AS(run(cfg), UsageError);

    cfg = base_run_config(1);
    cfg.expand_threshold = cfg.accept_threshold;
    CHECK_THROWS_AS(run(cfg), UsageError);

    cfg = base_run_config(1);
    cfg.parallelism = 0;
    CHECK_THROWS_AS(run(cfg), UsageError);

    cfg = base_run_config(1);
    cfg.wordlist_file = "/nonexistent/words.txt";
    CHECK_THROWS_AS(run(cfg), IoError);
}

TEST_CASE("run generates a rubric when no rubric file is configured") {
    RunConfig cfg = base_run_config(2);
    cfg.rubric_file.clear();
    cfg.rubric_task = "judge creative story outlines";
    cfg.rubric_baseline_file = data_path("rubric_baseline.txt");
    RunRecord rec = run(cfg);
    CHECK(rec.rubric.source == RubricSource::generated);
    CHECK(rec.rubric.categories.size() == 4);
    CHECK(rec.stats.successes == 2);
}

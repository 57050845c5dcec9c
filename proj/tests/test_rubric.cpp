#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <memory>

#include "cairdd/llm_client.hpp"
#include "cairdd/prompts.hpp"
#include "cairdd/rubric.hpp"
#include "test_support.hpp"

using namespace cairdd;
using testutil::data_path;
using testutil::read_tsv;

TEST_CASE("canonical_title folds case, whitespace, ampersands and punctuation") {
    CHECK(canonical_title("World-Building & Relevance") == "world-building and relevance");
    CHECK(canonical_title("  Originality   &  Novelty . ") == "originality and novelty");
    CHECK(canonical_title("Thematic Resonance!") == "thematic resonance");
    CHECK(canonical_title("literary craftsmanship") == "literary craftsmanship");
    // idempotent
    for (const char* s : {"World-Building & Relevance", "A  B & C:", "x"})
        CHECK(canonical_title(canonical_title(s)) == canonical_title(s));
}

TEST_CASE("parse_rubric reads numbered category lines with several separators") {
    Rubric r = parse_rubric(
        "1. World-Building & Relevance \xE2\x80\x94 depth of the setting.\n"
        "2. Originality & Novelty - freshness of premise.\n"
        "3. Literary Craftsmanship \xE2\x80\x93 implied craft.\n"
        "4. Thematic Resonance: strength of themes.\n");
    REQUIRE(r.categories.size() == 4);
    CHECK(r.categories[0].name == "World-Building & Relevance");
    CHECK(r.categories[0].description == "depth of the setting.");
    CHECK(r.categories[1].name == "Originality & Novelty");
    CHECK(r.categories[2].name == "Literary Craftsmanship");
    CHECK(r.categories[3].description == "strength of themes.");
    for (const auto& c : r.categories) {
        CHECK(c.min_score == 0);
        CHECK(c.max_score == 4);
    }
}

TEST_CASE("parse_rubric tolerates markdown decoration and blank lines") {
    Rubric r = parse_rubric(
        "Here is your rubric:\n\n"
        "**1. Alpha** \xE2\x80\x94 first thing\n\n"
        "  2. *Beta* - second thing\n");
    REQUIRE(r.categories.size() == 2);
    CHECK(r.categories[0].name == "Alpha");
    CHECK(r.categories[1].name == "Beta");
}

TEST_CASE("parse_rubric failures") {
    CHECK_THROWS_AS(parse_rubric("no numbered lines here"), ParseFailure);
    CHECK_THROWS_AS(parse_rubric(""), ParseFailure);
    // duplicate names after canonicalization
    CHECK_THROWS_AS(parse_rubric("1. Alpha \xE2\x80\x94 a\n2. alpha! \xE2\x80\x94 b\n"),
                    ParseFailure);
}

TEST_CASE("load_rubric_file reads the shipped creativity rubric") {
    Rubric r = load_rubric_file(data_path("rubric_creativity.txt"));
    REQUIRE(r.categories.size() == 4);
    CHECK(r.categories[0].name == "World-Building & Relevance");
    CHECK(r.categories[1].name == "Originality & Novelty");
    CHECK(r.categories[2].name == "Literary Craftsmanship");
    CHECK(r.categories[3].name == "Thematic Resonance");
    CHECK(r.source == RubricSource::file);
    CHECK_THROWS_AS(load_rubric_file("/tmp/missing_rubric.txt"), IoError);
}

TEST_CASE("rubric_stability reproduces the archived title agreement") {
    // 11 archived rubric title rows; each position agrees 9 of 11 times
    std::vector<Rubric> rubrics;
    for (const auto& row : read_tsv(data_path("rubric_titles.tsv"))) {
        REQUIRE(row.size() == 5);
        Rubric r;
        for (int i = 1; i <= 4; ++i) r.categories.push_back({row[i], "", 0, 4});
        rubrics.push_back(r);
    }
    REQUIRE(rubrics.size() == 11);

    StabilityReport report = rubric_stability(rubrics);
    REQUIRE(report.positions.size() == 4);
    const char* expected[] = {"world-building and relevance", "originality and novelty",
                              "literary craftsmanship", "thematic resonance"};
    // the two deviating rows stay distinct everywhere except position 3,
    // where their titles differ only by "&" vs "and" and fold together
    std::size_t expected_variants[] = {3, 3, 2, 3};
    for (int i = 0; i < 4; ++i) {
        CHECK(report.positions[i].modal_title == expected[i]);
        CHECK(report.positions[i].modal_count == 9);
        CHECK(report.positions[i].total == 11);
        CHECK(report.positions[i].variants.size() == expected_variants[i]);
        CHECK(report.positions[i].variants.front().count == 9);
    }
    CHECK(report.positions[2].variants[1].title == "character development and depth");
    CHECK(report.positions[2].variants[1].count == 2);
}

TEST_CASE("rubric_stability requires matching shapes") {
    Rubric a, b;
    a.categories = {{"X", "", 0, 4}};
    b.categories = {{"X", "", 0, 4}, {"Y", "", 0, 4}};
    CHECK_THROWS_AS(rubric_stability({a, b}), ShapeMismatch);
    CHECK_THROWS_AS(rubric_stability({}), UsageError);
}

TEST_CASE("generate_rubric parses a scripted response") {
    auto table = std::make_shared<StubTable>();
    table->synthesize = false;

    RenderedPrompt p = render_rubric_prompt("story concepts", "1. Alpha - a");
    table->responses[request_digest({p.system, {p.user}})] = {
        "1. Alpha \xE2\x80\x94 adapted first\n2. Beta \xE2\x80\x94 adapted second\n"};

    BackendConfig cfg;
    cfg.stub = table;
    Rubric r = generate_rubric(cfg, "story concepts", "1. Alpha - a");
    REQUIRE(r.categories.size() == 2);
    CHECK(r.source == RubricSource::generated);
    CHECK(r.task_description == "story concepts");
}

TEST_CASE("generate_rubric re-prompts once when the first reply is shapeless") {
    auto table = std::make_shared<StubTable>();
    // unscripted digests synthesize deterministic rubric-shaped replies, so
    // script the first call to be garbage and let the re-prompt synthesize
    table->responses[request_digest(
        {render_rubric_prompt("t", "b").system, {render_rubric_prompt("t", "b").user}})] = {
        "sorry, I cannot produce a rubric right now"};

    BackendConfig cfg;
    cfg.stub = table;
    Rubric r = generate_rubric(cfg, "t", "b");
    CHECK(!r.categories.empty());

    // when every reply is shapeless the ParseFailure surfaces
    auto bad = std::make_shared<StubTable>();
    bad->synthesize = false;
    RenderedPrompt p = render_rubric_prompt("t2", "b2");
    std::uint64_t first = request_digest({p.system, {p.user}});
    bad->responses[first] = {"still not a rubric"};
    std::string retry_user = p.user +
                             "\n\nRespond only with the numbered category lines, one per "
                             "line, in the form \"N. Category Name \xE2\x80\x94 description\".";
    bad->responses[request_digest({p.system, {retry_user}})] = {"no again"};
    BackendConfig cfg2;
    cfg2.stub = bad;
    CHECK_THROWS_AS(generate_rubric(cfg2, "t2", "b2"), ParseFailure);
}

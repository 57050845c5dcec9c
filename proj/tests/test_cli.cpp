#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "cairdd/pipeline.hpp"
#include "test_support.hpp"

using testutil::data_path;
using testutil::read_file;
using testutil::write_file;

namespace fs = std::filesystem;

namespace {

struct CmdResult {
    int code = -1;
    std::string out;
    std::string err;
};

CmdResult run_cli(const std::string& args) {
    static int counter = 0;
    std::string out_path = "/tmp/cairdd_cli_out_" + std::to_string(++counter) + ".txt";
    std::string err_path = "/tmp/cairdd_cli_err_" + std::to_string(counter) + ".txt";
    std::string cmd =
        std::string("\"") + CAIRDD_CLI_BIN + "\" " + args + " >" + out_path + " 2>" + err_path;
    int rc = std::system(cmd.c_str());

    CmdResult res;
    res.code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    res.out = read_file(out_path);
    res.err = read_file(err_path);
    std::remove(out_path.c_str());
    std::remove(err_path.c_str());
    return res;
}

std::string last_line(const std::string& text) {
    std::size_t end = text.find_last_not_of('\n');
    if (end == std::string::npos) return "";
    std::size_t start = text.rfind('\n', end);
    return text.substr(start == std::string::npos ? 0 : start + 1,
                       end - (start == std::string::npos ? 0 : start + 1) + 1);
}

std::string base_config(const std::string& output_file) {
    return "# minimal offline run\n"
           "genre = science fiction\n"
           "attempts = 5\n"
           "master_seed = 7\n"
           "wordlist_file = " + data_path("wordlist_small.txt") + "\n"
           "rubric_file = " + data_path("rubric_creativity.txt") + "\n"
           "retry_max = 0\n"
           "retry_base_delay_ms = 0\n"
           "normalize_timestamps = true\n"
           "output_file = " + output_file + "\n";
}

}  // namespace

TEST_CASE("words sample is deterministic and exits cleanly") {
    std::string args = "words sample --wordlist " + data_path("wordlist_small.txt") +
                       " --k 3 --seed 1";
    CmdResult a = run_cli(args);
    CmdResult b = run_cli(args);
    CHECK(a.code == 0);
    CHECK(a.out == "tape\nquarry\nmoss\n");
    CHECK(a.out == b.out);
    CHECK(a.err.empty());
}

TEST_CASE("bad invocations exit with the usage code") {
    CHECK(run_cli("frobnicate").code == 1);
    CHECK(run_cli("").code == 1);                 // a subcommand is required
    CHECK(run_cli("words sample --k 3").code == 1);  // --wordlist missing
    CHECK(run_cli("score --rubric x").code == 1);    // --concept missing

    CmdResult help = run_cli("--help");
    CHECK(help.code == 0);
    CHECK(help.out.find("run") != std::string::npos);
    CHECK(help.out.find("report") != std::string::npos);
}

TEST_CASE("idea and concept commands chain through files") {
    CmdResult idea = run_cli("idea --genre \"science fiction\" --words \"tape, quarry\"");
    CHECK(idea.code == 0);
    CHECK_FALSE(idea.out.empty());

    std::string idea_file = "/tmp/cairdd_cli_idea.txt";
    write_file(idea_file, idea.out);
    CmdResult full = run_cli("concept --idea-file " + idea_file);
    CHECK(full.code == 0);
    CHECK(full.out.find("Chapter 1:") != std::string::npos);
    CHECK(full.out.find("Summary:") != std::string::npos);
    std::remove(idea_file.c_str());
}

TEST_CASE("score judges a stored concept against a rubric") {
    std::string args = "score --rubric " + data_path("rubric_creativity.txt") + " --concept " +
                       data_path("concepts/concept_01.txt");
    CmdResult a = run_cli(args);
    CHECK(a.code == 0);
    CHECK(a.out.rfind("Score: ", 0) == 0);
    CHECK(a.out.find("World-Building & Relevance") != std::string::npos);
    CHECK(a.out == run_cli(args).out);  // stub judging is deterministic
}

TEST_CASE("rubric gen prints numbered categories") {
    CmdResult r = run_cli("rubric gen --task \"judge story outlines\" --baseline " +
                          data_path("rubric_baseline.txt"));
    CHECK(r.code == 0);
    CHECK(r.out.rfind("1. ", 0) == 0);
    CHECK(r.out.find("\n4. ") != std::string::npos);
}

TEST_CASE("rubric stability reports per position agreement") {
    fs::path dir = "/tmp/cairdd_cli_rubrics";
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::string common =
        "1. Alpha \xE2\x80\x94 one.\n2. Beta \xE2\x80\x94 two.\n";
    write_file((dir / "a.txt").string(), common);
    write_file((dir / "b.txt").string(), common);
    write_file((dir / "c.txt").string(),
               "1. Alpha \xE2\x80\x94 one.\n2. Gamma \xE2\x80\x94 three.\n");

    CmdResult r = run_cli("rubric stability --dir " + dir.string());
    CHECK(r.code == 0);
    CHECK(r.out.find("position 1: alpha (3/3)") != std::string::npos);
    CHECK(r.out.find("position 2: beta (2/3)") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("run executes a config file and writes a loadable record") {
    std::string out_file = "/tmp/cairdd_cli_run.jsonl";
    std::string cfg_file = "/tmp/cairdd_cli_run.conf";
    write_file(cfg_file, base_config(out_file));

    CmdResult r = run_cli("run --config " + cfg_file);
    CHECK(r.code == 0);
    CHECK(r.out.rfind("run-", 0) == 0);
    CHECK(r.out.find("5 attempts") != std::string::npos);
    CHECK(r.out.find("wrote " + out_file) != std::string::npos);

    cairdd::RunRecord rec = cairdd::load_run(out_file);
    CHECK(rec.attempts.size() == 5);
    CHECK(rec.config.focus.genre == "science fiction");
    CHECK(rec.config.master_seed == 7);

    std::remove(out_file.c_str());
    std::remove(cfg_file.c_str());
}

TEST_CASE("run --no-refine collapses every attempt to a single scored step") {
    std::string out_file = "/tmp/cairdd_cli_norefine.jsonl";
    std::string cfg_file = "/tmp/cairdd_cli_norefine.conf";
    write_file(cfg_file, base_config(out_file));

    CmdResult r = run_cli("run --config " + cfg_file + " --no-refine --attempts 4");
    CHECK(r.code == 0);

    cairdd::RunRecord rec = cairdd::load_run(out_file);
    REQUIRE(rec.attempts.size() == 4);
    CHECK_FALSE(rec.config.refine_enabled);
    for (const auto& a : rec.attempts) {
        if (a.status != cairdd::AttemptStatus::success) continue;
        CHECK(a.trace.size() == 1);
        CHECK(a.expansions == 0);
        CHECK(a.retools == 0);
    }

    std::remove(out_file.c_str());
    std::remove(cfg_file.c_str());
}

TEST_CASE("report renders the aggregate improvement over saved tables") {
    fs::path dir = "/tmp/cairdd_cli_report";
    fs::remove_all(dir);
    fs::create_directories(dir);
    fs::copy_file(data_path("run_summary.tsv"), dir / "run_summary.tsv");

    CmdResult r = run_cli("report --runs " + dir.string());
    CHECK(r.code == 0);
    CHECK(r.out.find("run_summary:1") != std::string::npos);
    CHECK(last_line(r.out) == "mean improvement 0.28 (7.9%)");
    fs::remove_all(dir);
}

TEST_CASE("config errors exit 1, runtime errors exit 2") {
    std::string cfg_file = "/tmp/cairdd_cli_bad.conf";

    write_file(cfg_file, "unknown_key = 1\n");
    CmdResult unknown = run_cli("run --config " + cfg_file);
    CHECK(unknown.code == 1);
    CHECK(unknown.err.find("usage error:") != std::string::npos);

    write_file(cfg_file, "attempts = many\n");
    CHECK(run_cli("run --config " + cfg_file).code == 1);

    write_file(cfg_file, base_config("/tmp/cairdd_cli_unused.jsonl"));
    CmdResult missing = run_cli("run --config /nonexistent/path.conf");
    CHECK(missing.code == 2);
    CHECK(missing.err.find("error:") != std::string::npos);

    // valid config pointing at a missing wordlist fails at runtime
    write_file(cfg_file,
               "genre = g\nattempts = 1\nwordlist_file = /nonexistent/words.txt\n"
               "rubric_file = " + data_path("rubric_creativity.txt") + "\n");
    CmdResult io = run_cli("run --config " + cfg_file);
    CHECK(io.code == 2);
    CHECK(io.err.rfind("error:", 0) == 0);
    std::remove(cfg_file.c_str());
}

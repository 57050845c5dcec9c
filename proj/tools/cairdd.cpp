// cairdd: seed-word driven story concept generation, judging and refinement.

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cairdd/generation.hpp"
#include "cairdd/lexicon.hpp"
#include "cairdd/llm_client.hpp"
#include "cairdd/pipeline.hpp"
#include "cairdd/prompts.hpp"
#include "cairdd/rubric.hpp"
#include "cairdd/scoring.hpp"

namespace fs = std::filesystem;
using namespace cairdd;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& v, std::size_t line_no) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw UsageError("config line " + std::to_string(line_no) + ": expected a boolean, got '" +
                     v + "'");
}

long long parse_int(const std::string& v, std::size_t line_no) {
    std::size_t used = 0;
    long long out = 0;
    try {
        out = std::stoll(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != v.size() || v.empty())
        throw UsageError("config line " + std::to_string(line_no) + ": expected an integer, got '" +
                         v + "'");
    return out;
}

std::uint64_t parse_uint(const std::string& v, std::size_t line_no) {
    std::size_t used = 0;
    std::uint64_t out = 0;
    try {
        out = std::stoull(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != v.size() || v.empty())
        throw UsageError("config line " + std::to_string(line_no) +
                         ": expected an unsigned integer, got '" + v + "'");
    return out;
}

double parse_double(const std::string& v, std::size_t line_no) {
    std::size_t used = 0;
    double out = 0.0;
    try {
        out = std::stod(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != v.size() || v.empty())
        throw UsageError("config line " + std::to_string(line_no) + ": expected a number, got '" +
                         v + "'");
    return out;
}

ScoreMode parse_score_mode(const std::string& v) {
    if (v == "mean") return ScoreMode::mean;
    if (v == "max_normalized") return ScoreMode::max_normalized;
    throw UsageError("score mode must be 'mean' or 'max_normalized', got '" + v + "'");
}

BackendKind parse_backend_kind(const std::string& v) {
    if (v == "stub") return BackendKind::stub;
    if (v == "http" || v == "http_openai_compatible") return BackendKind::http_openai_compatible;
    throw UsageError("backend must be 'stub' or 'http_openai_compatible', got '" + v + "'");
}

// Flat `key = value` file mirroring RunConfig; '#' starts a comment,
// `requirement` and `suggestion` may repeat.
RunConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);

    RunConfig cfg;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw UsageError("config line " + std::to_string(line_no) +
                             ": expected 'key = value'");
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));

        if (key == "genre") cfg.focus.genre = value;
        else if (key == "requirement") cfg.focus.requirements.push_back(value);
        else if (key == "suggestion") cfg.focus.suggestions.push_back(value);
        else if (key == "attempts") cfg.attempts = static_cast<int>(parse_int(value, line_no));
        else if (key == "words_per_concept")
            cfg.words_per_concept = static_cast<int>(parse_int(value, line_no));
        else if (key == "master_seed") cfg.master_seed = parse_uint(value, line_no);
        else if (key == "accept_threshold") cfg.accept_threshold = parse_double(value, line_no);
        else if (key == "expand_threshold") cfg.expand_threshold = parse_double(value, line_no);
        else if (key == "min_improvement") cfg.min_improvement = parse_double(value, line_no);
        else if (key == "max_expansions")
            cfg.max_expansions = static_cast<int>(parse_int(value, line_no));
        else if (key == "max_retools") cfg.max_retools = static_cast<int>(parse_int(value, line_no));
        else if (key == "parallelism") cfg.parallelism = static_cast<int>(parse_int(value, line_no));
        else if (key == "refine_enabled") cfg.refine_enabled = parse_bool(value, line_no);
        else if (key == "score_mode") cfg.score_mode = parse_score_mode(value);
        else if (key == "score_passes")
            cfg.score_passes = static_cast<int>(parse_int(value, line_no));
        else if (key == "backend_kind") cfg.backend.kind = parse_backend_kind(value);
        else if (key == "endpoint") cfg.backend.endpoint = value;
        else if (key == "model") cfg.backend.model = value;
        else if (key == "temperature") cfg.backend.temperature = parse_double(value, line_no);
        else if (key == "max_tokens")
            cfg.backend.max_tokens = static_cast<int>(parse_int(value, line_no));
        else if (key == "top_p") cfg.backend.top_p = parse_double(value, line_no);
        else if (key == "retry_max")
            cfg.backend.retry_max = static_cast<int>(parse_int(value, line_no));
        else if (key == "retry_base_delay_ms")
            cfg.backend.retry_base_delay = std::chrono::milliseconds(parse_int(value, line_no));
        else if (key == "stub_table_file") cfg.stub_table_file = value;
        else if (key == "wordlist_file") cfg.wordlist_file = value;
        else if (key == "thesaurus_file") cfg.thesaurus_file = value;
        else if (key == "rubric_file") cfg.rubric_file = value;
        else if (key == "rubric_task") cfg.rubric_task = value;
        else if (key == "rubric_baseline_file") cfg.rubric_baseline_file = value;
        else if (key == "efficacy_rubric_file") cfg.efficacy_rubric_file = value;
        else if (key == "normalize_timestamps") cfg.normalize_timestamps = parse_bool(value, line_no);
        else if (key == "output_file") cfg.output_file = value;
        else
            throw UsageError("config line " + std::to_string(line_no) + ": unknown key '" + key +
                             "'");
    }
    return cfg;
}

struct BackendOpts {
    std::string kind = "stub";
    std::string endpoint;
    std::string model;
    std::string stub_table;
    double temperature = 0.7;
    int max_tokens = 2048;
    int retry_max = 3;
    long long retry_delay_ms = 500;
};

void add_backend_flags(CLI::App* cmd, BackendOpts& o) {
    cmd->add_option("--backend", o.kind, "stub or http_openai_compatible")
        ->capture_default_str();
    cmd->add_option("--endpoint", o.endpoint, "http backend base url, e.g. http://host:port/v1");
    cmd->add_option("--model", o.model, "http backend model name");
    cmd->add_option("--stub-table", o.stub_table, "stub response table (json)");
    cmd->add_option("--temperature", o.temperature)->capture_default_str();
    cmd->add_option("--max-tokens", o.max_tokens)->capture_default_str();
    cmd->add_option("--retry-max", o.retry_max)->capture_default_str();
    cmd->add_option("--retry-base-delay-ms", o.retry_delay_ms)->capture_default_str();
}

BackendConfig make_backend(const BackendOpts& o) {
    BackendConfig b;
    b.kind = parse_backend_kind(o.kind);
    b.endpoint = o.endpoint;
    b.model = o.model;
    b.temperature = o.temperature;
    b.max_tokens = o.max_tokens;
    b.retry_max = o.retry_max;
    b.retry_base_delay = std::chrono::milliseconds(o.retry_delay_ms);
    if (!o.stub_table.empty()) b.stub = load_stub_table(o.stub_table);
    return b;
}

std::vector<std::string> split_words(const std::string& csv) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream ss(csv);
    while (std::getline(ss, cur, ',')) {
        std::string w = trim(cur);
        if (!w.empty()) out.push_back(w);
    }
    return out;
}

void print_scorecard(const ScoreCard& card, const Rubric& rubric) {
    std::printf("Score: %g\n", card.composite);
    std::string items;
    for (std::size_t i = 0; i < rubric.categories.size(); ++i) {
        if (i) items += ", ";
        items += rubric.categories[i].name + " " + std::to_string(card.category_scores[i]);
    }
    std::printf("%s\n", items.c_str());
    if (card.mismatch_flag && card.stated_composite)
        std::fprintf(stderr, "note: judge stated %g, recomputed %g\n", *card.stated_composite,
                     card.composite);
}

void print_stats(const RunStats& st) {
    std::printf("average %.2f  best %.2f (attempt %d)  improvement %.2f (%.1f%%)  failures %d\n",
                st.average, st.best, st.best_attempt_index, st.improvement,
                st.improvement_pct * 100.0, st.failures);
}

std::vector<fs::path> sorted_dir_entries(const std::string& dir, const std::string& ext) {
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
    std::vector<fs::path> out;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ext)
            out.push_back(entry.path());
    std::sort(out.begin(), out.end());
    return out;
}

int cmd_words_sample(const std::string& wordlist, std::size_t k, std::uint64_t seed,
                     std::uint32_t attempt) {
    WordList list = load_wordlist(wordlist);
    SeedWordSet set = sample_seed_words(list, k, seed, attempt);
    for (const auto& w : set.words) std::printf("%s\n", w.c_str());
    return 0;
}

int cmd_idea(const BackendOpts& bo, const std::string& genre, const std::string& words_csv) {
    std::vector<std::string> words = split_words(words_csv);
    if (words.empty()) throw UsageError("idea: --words needs at least one word");
    SeedWordSet seed;
    seed.words = words;
    seed.origin = SeedOrigin::user_supplied;
    ConceptIdea idea = generate_idea(make_backend(bo), genre, seed, 1);
    std::printf("%s\n", idea.text.c_str());
    return 0;
}

int cmd_concept(const BackendOpts& bo, const std::string& idea_file) {
    std::string text = trim(read_file(idea_file));
    if (text.empty()) throw UsageError("concept: idea file is empty");
    ConceptIdea idea;
    idea.text = text;
    idea.seed.origin = SeedOrigin::user_supplied;
    FullConcept draft = generate_concept(make_backend(bo), idea);
    std::printf("%s", render_concept(draft).c_str());
    return 0;
}

int cmd_rubric_gen(const BackendOpts& bo, const std::string& task, const std::string& baseline) {
    Rubric rubric = generate_rubric(make_backend(bo), task, read_file(baseline));
    for (std::size_t i = 0; i < rubric.categories.size(); ++i) {
        const auto& c = rubric.categories[i];
        if (c.description.empty())
            std::printf("%zu. %s\n", i + 1, c.name.c_str());
        else
            std::printf("%zu. %s \xE2\x80\x94 %s\n", i + 1, c.name.c_str(), c.description.c_str());
    }
    return 0;
}

int cmd_rubric_stability(const std::string& dir) {
    std::vector<Rubric> rubrics;
    for (const auto& p : sorted_dir_entries(dir, ".txt")) rubrics.push_back(load_rubric_file(p));
    if (rubrics.empty()) throw UsageError("rubric stability: no .txt rubric files in " + dir);
    StabilityReport report = rubric_stability(rubrics);
    for (std::size_t i = 0; i < report.positions.size(); ++i) {
        const auto& pos = report.positions[i];
        std::printf("position %zu: %s (%d/%d)\n", i + 1, pos.modal_title.c_str(), pos.modal_count,
                    pos.total);
        for (const auto& v : pos.variants)
            std::printf("    %3d  %s\n", v.count, v.title.c_str());
    }
    return 0;
}

int cmd_score(const BackendOpts& bo, const std::string& rubric_file,
              const std::string& concept_file, int passes, const std::string& mode) {
    Rubric rubric = load_rubric_file(rubric_file);
    FullConcept draft = parse_concept(read_file(concept_file));
    ScoreCard card =
        score_concept(make_backend(bo), rubric, draft, passes, parse_score_mode(mode));
    print_scorecard(card, rubric);
    return 0;
}

struct RunOverrides {
    bool no_refine = false;
    bool normalize_timestamps = false;
    std::string output;
    std::string stub_table;
    int attempts = -1;
    int parallelism = -1;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

int cmd_run(const std::string& config_file, const RunOverrides& ov) {
    RunConfig cfg = parse_config_file(config_file);
    if (ov.no_refine) cfg.refine_enabled = false;
    if (ov.normalize_timestamps) cfg.normalize_timestamps = true;
    if (!ov.output.empty()) cfg.output_file = ov.output;
    if (!ov.stub_table.empty()) cfg.stub_table_file = ov.stub_table;
    if (ov.attempts > 0) cfg.attempts = ov.attempts;
    if (ov.parallelism > 0) cfg.parallelism = ov.parallelism;
    if (ov.seed_set) cfg.master_seed = ov.seed;

    RunRecord rec = run(cfg);
    std::printf("%s: %d attempts, %d successes, %d failures\n", rec.run_id.c_str(),
                static_cast<int>(rec.attempts.size()), rec.stats.successes, rec.stats.failures);
    print_stats(rec.stats);
    if (!cfg.output_file.empty()) std::printf("wrote %s\n", cfg.output_file.c_str());
    return 0;
}

int cmd_report(const std::string& dir) {
    struct Row {
        std::string label;
        RunStats stats;
    };
    std::vector<Row> rows;
    for (const auto& p : sorted_dir_entries(dir, ".jsonl"))
        rows.push_back({p.stem().string(), load_run(p.string()).stats});
    for (const auto& p : sorted_dir_entries(dir, ".tsv")) {
        std::vector<RunStats> stats = load_stats_tsv(p.string());
        for (std::size_t i = 0; i < stats.size(); ++i)
            rows.push_back({p.stem().string() + ":" + std::to_string(i + 1), stats[i]});
    }
    if (rows.empty()) throw IoError("report: no .jsonl or .tsv run data in " + dir);

    std::printf("%-24s %8s %6s %12s %9s\n", "run", "average", "best", "improvement", "failures");
    std::vector<RunStats> all;
    for (const auto& r : rows) {
        std::printf("%-24s %8.2f %6.2f %5.2f (%4.1f%%) %9d\n", r.label.c_str(), r.stats.average,
                    r.stats.best, r.stats.improvement, r.stats.improvement_pct * 100.0,
                    r.stats.failures);
        all.push_back(r.stats);
    }
    AggregateStats agg = aggregate(all);
    std::printf("mean improvement %.2f (%.1f%%)\n", agg.mean_improvement,
                agg.mean_improvement_pct * 100.0);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"seed-word driven story concept generation, judging and refinement"};
    app.require_subcommand(1);
    int rc = 0;

    // words sample
    auto* words = app.add_subcommand("words", "word list utilities");
    words->require_subcommand(1);
    auto* sample = words->add_subcommand("sample", "deterministically sample seed words");
    std::string wordlist_file;
    std::size_t sample_k = 3;
    std::uint64_t sample_seed = 1;
    std::uint32_t sample_attempt = 0;
    sample->add_option("--wordlist", wordlist_file, "word list file")->required();
    sample->add_option("--k", sample_k, "words to draw")->capture_default_str();
    sample->add_option("--seed", sample_seed, "master seed")->capture_default_str();
    sample->add_option("--attempt", sample_attempt, "attempt index")->capture_default_str();
    sample->callback([&] { rc = cmd_words_sample(wordlist_file, sample_k, sample_seed,
                                                 sample_attempt); });

    // idea
    auto* idea = app.add_subcommand("idea", "generate a one sentence story idea");
    static BackendOpts idea_bo;
    std::string idea_genre, idea_words;
    idea->add_option("--genre", idea_genre, "story genre")->required();
    idea->add_option("--words", idea_words, "comma separated seed words")->required();
    add_backend_flags(idea, idea_bo);
    idea->callback([&] { rc = cmd_idea(idea_bo, idea_genre, idea_words); });

    // concept
    auto* concept_cmd = app.add_subcommand("concept", "expand an idea into a chaptered concept");
    static BackendOpts concept_bo;
    std::string idea_file;
    concept_cmd->add_option("--idea-file", idea_file, "file holding the idea sentence")->required();
    add_backend_flags(concept_cmd, concept_bo);
    concept_cmd->callback([&] { rc = cmd_concept(concept_bo, idea_file); });

    // rubric gen / rubric stability
    auto* rubric = app.add_subcommand("rubric", "rubric generation and analysis");
    rubric->require_subcommand(1);
    auto* gen = rubric->add_subcommand("gen", "generate a task specific rubric");
    static BackendOpts gen_bo;
    std::string gen_task, gen_baseline;
    gen->add_option("--task", gen_task, "task description")->required();
    gen->add_option("--baseline", gen_baseline, "baseline rubric file")->required();
    add_backend_flags(gen, gen_bo);
    gen->callback([&] { rc = cmd_rubric_gen(gen_bo, gen_task, gen_baseline); });

    auto* stability = rubric->add_subcommand("stability", "per position title agreement");
    std::string stability_dir;
    stability->add_option("--dir", stability_dir, "directory of rubric .txt files")->required();
    stability->callback([&] { rc = cmd_rubric_stability(stability_dir); });

    // score
    auto* score = app.add_subcommand("score", "judge a concept against a rubric");
    static BackendOpts score_bo;
    std::string score_rubric, score_concept_file, score_mode = "mean";
    int score_passes = 1;
    score->add_option("--rubric", score_rubric, "rubric file")->required();
    score->add_option("--concept", score_concept_file, "concept text file")->required();
    score->add_option("--passes", score_passes, "judge passes (median wins)")
        ->capture_default_str();
    score->add_option("--mode", score_mode, "mean or max_normalized")->capture_default_str();
    add_backend_flags(score, score_bo);
    score->callback(
        [&] { rc = cmd_score(score_bo, score_rubric, score_concept_file, score_passes, score_mode); });

    // run
    auto* run_cmd = app.add_subcommand("run", "execute a full generation run");
    std::string run_config;
    static RunOverrides ov;
    run_cmd->add_option("--config", run_config, "run config file (key = value)")->required();
    run_cmd->add_flag("--no-refine", ov.no_refine, "plain best-of-N, no refinement loop");
    run_cmd->add_flag("--normalize-timestamps", ov.normalize_timestamps,
                      "write epoch timestamps for byte comparisons");
    run_cmd->add_option("--output", ov.output, "override output_file");
    run_cmd->add_option("--stub-table", ov.stub_table, "override stub_table_file");
    run_cmd->add_option("--attempts", ov.attempts, "override attempts");
    run_cmd->add_option("--parallelism", ov.parallelism, "override parallelism");
    run_cmd->add_option("--seed", ov.seed, "override master_seed")
        ->each([&](const std::string&) { ov.seed_set = true; });
    run_cmd->callback([&] { rc = cmd_run(run_config, ov); });

    // report
    auto* report = app.add_subcommand("report", "aggregate stats over saved runs");
    std::string report_dir;
    report->add_option("--runs", report_dir, "directory of .jsonl runs and .tsv tables")
        ->required();
    report->callback([&] { rc = cmd_report(report_dir); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const UsageError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 1;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return rc;
}

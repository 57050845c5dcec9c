#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "cairdd/errors.hpp"

namespace cairdd {

// Ordered, deduplicated, lowercased tokens from a word-list file.
struct WordList {
    std::string source_id;
    std::vector<std::string> words;
};

enum class SeedOrigin { sampled, user_supplied, fuzzed };

struct SeedWordSet {
    std::vector<std::string> words;  // pairwise distinct
    SeedOrigin origin = SeedOrigin::sampled;
    std::uint64_t master_seed = 0;
    std::uint32_t attempt_index = 0;

    bool operator==(const SeedWordSet&) const = default;
};

struct ThesaurusEntry {
    std::vector<std::string> synonyms;
    std::vector<std::string> antonyms;
};

struct Thesaurus {
    std::map<std::string, ThesaurusEntry> entries;
};

// `frequency` is a declared strategy with no data source behind it yet; it
// yields no variants.
enum class FuzzStrategy { synonym, antonym, random_replace, frequency };

// File format: UTF-8, one token per line, `#`-prefixed lines ignored.
// Tokens are lowercased (ASCII) and deduplicated, first occurrence wins.
// Lines with internal whitespace are not usable as tokens and are skipped.
WordList load_wordlist(const std::filesystem::path& path);

// k distinct words drawn without replacement, fully determined by
// (list, k, master_seed, attempt_index). Seeded Fisher-Yates partial shuffle.
SeedWordSet sample_seed_words(const WordList& list, std::size_t k,
                              std::uint64_t master_seed,
                              std::uint32_t attempt_index);

// File format: UTF-8 lines of `word: syn1, syn2 | ant1, ant2`; the
// `| antonyms` segment is optional. Self-references are stripped.
Thesaurus load_thesaurus(const std::filesystem::path& path);

// Up to `limit` variants, each differing from `set` in at least one word.
// Single substitutions are enumerated before pairs. The antonym and
// random_replace strategies never touch words in `user_words`; synonym may.
std::vector<SeedWordSet> fuzz_variants(const SeedWordSet& set,
                                       const Thesaurus& th,
                                       FuzzStrategy strategy,
                                       const std::vector<std::string>& user_words,
                                       std::size_t limit,
                                       std::uint64_t rng_seed);

// Splittable seed derivation so each (attempt, step) gets an independent
// stream regardless of execution order.
std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t attempt_index,
                          std::uint64_t step);

// Uniform draw in [0, bound) by rejection sampling. Used instead of
// uniform_int_distribution, whose output differs between standard library
// implementations.
std::uint64_t bounded_rand(std::mt19937_64& rng, std::uint64_t bound);

}  // namespace cairdd

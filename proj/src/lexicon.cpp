#include "cairdd/lexicon.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

namespace cairdd {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::string to_lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

bool has_inner_space(const std::string& s) {
    return std::any_of(s.begin(), s.end(),
                       [](unsigned char c) { return std::isspace(c); });
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::vector<std::string> split_tokens(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t attempt_index,
                          std::uint64_t step) {
    std::uint64_t x = splitmix64(master_seed ^ 0x6a09e667f3bcc908ULL);
    x = splitmix64(x ^ (attempt_index + 1) * 0x9e3779b97f4a7c15ULL);
    x = splitmix64(x ^ (step + 1) * 0xc2b2ae3d27d4eb4fULL);
    return x;
}

std::uint64_t bounded_rand(std::mt19937_64& rng, std::uint64_t bound) {
    if (bound == 0) throw UsageError("bounded_rand: bound must be positive");
    const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
    const std::uint64_t limit = max - max % bound;
    std::uint64_t v = rng();
    while (v >= limit) v = rng();
    return v % bound;
}

WordList load_wordlist(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open word list: " + path.string());

    WordList list;
    list.source_id = path.filename().string();
    std::set<std::string> seen;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (first) {
            // strip a UTF-8 byte order mark if present
            if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0)
                line.erase(0, 3);
            first = false;
        }
        std::string token = trim(line);
        if (token.empty() || token[0] == '#') continue;
        if (has_inner_space(token)) continue;
        token = to_lower(token);
        if (seen.insert(token).second) list.words.push_back(token);
    }
    if (list.words.empty())
        throw EmptyWordList("no usable tokens in " + path.string());
    return list;
}

SeedWordSet sample_seed_words(const WordList& list, std::size_t k,
                              std::uint64_t master_seed,
                              std::uint32_t attempt_index) {
    if (k == 0) throw UsageError("sample_seed_words: k must be positive");
    if (k > list.words.size())
        throw KTooLarge("k = " + std::to_string(k) + " exceeds word list size " +
                        std::to_string(list.words.size()));

    std::mt19937_64 rng(derive_seed(master_seed, attempt_index, 0));
    std::vector<std::size_t> idx(list.words.size());
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = 0; i < k; ++i) {
        std::size_t j = i + bounded_rand(rng, idx.size() - i);
        std::swap(idx[i], idx[j]);
    }

    SeedWordSet set;
    set.origin = SeedOrigin::sampled;
    set.master_seed = master_seed;
    set.attempt_index = attempt_index;
    for (std::size_t i = 0; i < k; ++i) set.words.push_back(list.words[idx[i]]);
    return set;
}

Thesaurus load_thesaurus(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open thesaurus: " + path.string());

    Thesaurus th;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        auto colon = t.find(':');
        if (colon == std::string::npos)
            throw FormatError("thesaurus line missing ':'", line_no);
        std::string word = to_lower(trim(t.substr(0, colon)));
        if (word.empty() || has_inner_space(word))
            throw FormatError("bad thesaurus head word", line_no);
        std::string tail = t.substr(colon + 1);
        if (tail.find(':') != std::string::npos)
            throw FormatError("unexpected second ':'", line_no);

        std::string syn_part = tail, ant_part;
        if (auto bar = tail.find('|'); bar != std::string::npos) {
            syn_part = tail.substr(0, bar);
            ant_part = tail.substr(bar + 1);
        }
        ThesaurusEntry entry;
        for (auto& s : split_tokens(syn_part, ',')) {
            s = to_lower(s);
            if (s != word && std::find(entry.synonyms.begin(), entry.synonyms.end(),
                                       s) == entry.synonyms.end())
                entry.synonyms.push_back(s);
        }
        for (auto& a : split_tokens(ant_part, ',')) {
            a = to_lower(a);
            if (a != word && std::find(entry.antonyms.begin(), entry.antonyms.end(),
                                       a) == entry.antonyms.end())
                entry.antonyms.push_back(a);
        }
        th.entries[word] = std::move(entry);
    }
    return th;
}

namespace {

bool contains(const std::vector<std::string>& v, const std::string& s) {
    return std::find(v.begin(), v.end(), s) != v.end();
}

// one single-word substitution applied to `base`
SeedWordSet substituted(const SeedWordSet& base, std::size_t pos,
                        const std::string& replacement) {
    SeedWordSet v = base;
    v.words[pos] = replacement;
    v.origin = SeedOrigin::fuzzed;
    return v;
}

}  // namespace

std::vector<SeedWordSet> fuzz_variants(const SeedWordSet& set,
                                       const Thesaurus& th,
                                       FuzzStrategy strategy,
                                       const std::vector<std::string>& user_words,
                                       std::size_t limit,
                                       std::uint64_t rng_seed) {
    if (limit == 0) throw UsageError("fuzz_variants: limit must be positive");
    if (strategy == FuzzStrategy::frequency) return {};

    const bool may_touch_user = strategy == FuzzStrategy::synonym;

    // replacement candidates per position, in a deterministic order
    std::vector<std::vector<std::string>> candidates(set.words.size());
    if (strategy == FuzzStrategy::random_replace) {
        std::vector<std::string> vocab;
        for (const auto& [word, entry] : th.entries)
            if (!contains(set.words, word)) vocab.push_back(word);
        std::mt19937_64 rng(derive_seed(rng_seed, 0, 0));
        for (std::size_t i = vocab.size(); i > 1; --i)
            std::swap(vocab[i - 1], vocab[bounded_rand(rng, i)]);
        // deal the shuffled vocabulary round-robin across positions
        std::size_t next = 0;
        bool dealt = true;
        while (dealt && next < vocab.size()) {
            dealt = false;
            for (std::size_t pos = 0; pos < set.words.size() && next < vocab.size(); ++pos) {
                if (!may_touch_user && contains(user_words, set.words[pos])) continue;
                candidates[pos].push_back(vocab[next++]);
                dealt = true;
            }
        }
    } else {
        for (std::size_t pos = 0; pos < set.words.size(); ++pos) {
            if (!may_touch_user && contains(user_words, set.words[pos])) continue;
            auto it = th.entries.find(set.words[pos]);
            if (it == th.entries.end()) continue;
            const auto& pool = strategy == FuzzStrategy::synonym ? it->second.synonyms
                                                                 : it->second.antonyms;
            for (const auto& cand : pool)
                if (!contains(set.words, cand)) candidates[pos].push_back(cand);
        }
    }

    std::vector<SeedWordSet> out;
    // single substitutions first, position-major
    for (std::size_t pos = 0; pos < candidates.size() && out.size() < limit; ++pos)
        for (const auto& cand : candidates[pos]) {
            out.push_back(substituted(set, pos, cand));
            if (out.size() == limit) break;
        }

    // then pairs of substitutions at distinct positions
    for (std::size_t p1 = 0; p1 + 1 < candidates.size() && out.size() < limit; ++p1)
        for (const auto& c1 : candidates[p1]) {
            for (std::size_t p2 = p1 + 1; p2 < candidates.size() && out.size() < limit; ++p2)
                for (const auto& c2 : candidates[p2]) {
                    if (c1 == c2) continue;
                    SeedWordSet v = substituted(set, p1, c1);
                    v.words[p2] = c2;
                    out.push_back(std::move(v));
                    if (out.size() == limit) break;
                }
            if (out.size() == limit) break;
        }
    return out;
}

}  // namespace cairdd
